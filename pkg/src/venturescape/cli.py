"""Command-line entry point.

Exit codes: 0 success, 2 validation failure, 3 stale inputs, 4 config error.
Log verbosity comes from the VENTURESCAPE_LOG env var (DEBUG/INFO/WARNING).
"""

from __future__ import annotations

import logging
import os
import sys
from pathlib import Path

import click

from .config import ConfigError, load_config
from .pipeline import (PipelineLockError, StaleInputError, ValidationFailure,
                       output_lock, run_all, run_stage)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STALE = 3
EXIT_CONFIG = 4


def _setup_logging():
    level = os.environ.get("VENTURESCAPE_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _load(config_path, seed, threads, out):
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
        overrides.setdefault("train", {})["seed"] = seed
        overrides.setdefault("atoms", {})["seed"] = seed
    if out is not None:
        overrides["out"] = out
    cfg = load_config(config_path, overrides)
    if threads is not None:
        os.environ["OMP_NUM_THREADS"] = str(threads)
        os.environ["OPENBLAS_NUM_THREADS"] = str(threads)
    return cfg


def _run(stage, config_path, seed, threads, out, force):
    _setup_logging()
    try:
        cfg = _load(config_path, seed, threads, out)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        with output_lock(Path(cfg.out_dir)):
            if stage == "run-all":
                run_all(cfg, force=force)
            else:
                run_stage(stage, cfg, force=force)
    except StaleInputError as exc:
        click.echo(f"stale inputs: {exc}", err=True)
        sys.exit(EXIT_STALE)
    except ValidationFailure as exc:
        click.echo(f"validation failure: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except PipelineLockError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_CONFIG)
    except FileNotFoundError as exc:
        click.echo(f"missing input: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    sys.exit(EXIT_OK)


def _stage_command(name):
    @click.command(name=name)
    @click.option("--config", "config_path", required=True,
                  type=click.Path(), help="Pipeline config file.")
    @click.option("--seed", type=int, default=None,
                  help="Override the config RNG seed.")
    @click.option("--threads", type=int, default=None,
                  help="Cap BLAS thread count.")
    @click.option("--out", type=click.Path(), default=None,
                  help="Override the output directory.")
    @click.option("--force", is_flag=True,
                  help="Rerun even when artifacts are up to date.")
    def cmd(config_path, seed, threads, out, force):
        _run(name, config_path, seed, threads, out, force)

    cmd.help = f"Run the {name} stage." if name != "run-all" else \
        "Run every stage in order."
    return cmd


@click.group()
def main():
    """Temporal word-embedding pipeline for venture description measures."""


for _name in ("ingest", "train", "atoms", "measure", "validate", "report",
              "run-all"):
    main.add_command(_stage_command(_name))


if __name__ == "__main__":
    main()
