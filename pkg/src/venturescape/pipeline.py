"""Stage orchestration: ingest -> train -> atoms -> measure -> validate ->
report, with a checksum manifest, atomic artifact writes, and idempotent
reruns."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import shutil
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import storage
from .atoms import train_atoms
from .axes import AxisError, analogy_query, build_axis, drift_trace, project_on_axis
from .config import PipelineConfig
from .corpus import (build_ppmi, build_vocab, count_cooccurrence,
                     read_documents, tokenize, DocumentRecord)
from .embedding import train as train_embeddings
from .measures import LexiconSet
from .panel import (CpiTable, PANEL_SCHEMA, build_panel, read_companies,
                    write_panel_csv)

log = logging.getLogger("venturescape")

STAGES = ("ingest", "train", "atoms", "measure", "validate", "report")
_DEPS = {
    "ingest": (),
    "train": ("ingest",),
    "atoms": ("train",),
    "measure": ("ingest", "train", "atoms"),
    "validate": ("ingest", "train"),
    "report": ("measure", "validate"),
}

MANIFEST_NAME = "manifest.json"


class StaleInputError(RuntimeError):
    pass


class ValidationFailure(RuntimeError):
    pass


class PipelineLockError(RuntimeError):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@contextmanager
def output_lock(out_dir: Path):
    """One run per output directory at a time."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise PipelineLockError(
            f"output dir locked by another run: {lock}") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _load_manifest(out_dir: Path) -> dict:
    path = out_dir / MANIFEST_NAME
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    return {"stages": {}}


def _save_manifest(out_dir: Path, manifest: dict):
    tmp = out_dir / (MANIFEST_NAME + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, out_dir / MANIFEST_NAME)


def _entry_valid(out_dir: Path, entry: dict, config_hash: str,
                 inputs: dict) -> bool:
    if entry is None or entry.get("config_hash") != config_hash:
        return False
    if entry.get("inputs") != inputs:
        return False
    for rel, digest in entry.get("outputs", {}).items():
        path = out_dir / rel
        if not path.exists() or sha256_file(path) != digest:
            return False
    return True


def _external_inputs(cfg: PipelineConfig, stage: str) -> list:
    return {
        "ingest": [cfg.corpus_path],
        "train": [],
        "atoms": [],
        "measure": [cfg.companies_path, cfg.tech_terms_path,
                    cfg.general_freq_path, cfg.patent_freq_path, cfg.cpi_path],
        "validate": [],
        "report": [],
    }[stage]


def run_stage(stage: str, cfg: PipelineConfig, force: bool = False) -> bool:
    """Run one stage. Returns True when work was done, False when the stage
    was already up to date. Raises StaleInputError when an upstream stage is
    missing or stale."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage: {stage}")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _load_manifest(out_dir)

    for dep in _DEPS[stage]:
        dep_entry = manifest["stages"].get(dep)
        dep_inputs = _collect_inputs(cfg, dep, manifest)
        if not _entry_valid(out_dir, dep_entry, cfg.section_hash(dep),
                            dep_inputs):
            raise StaleInputError(
                f"stage '{stage}' needs up-to-date '{dep}'; rerun it "
                f"(config or inputs changed since its last run)")

    config_hash = cfg.section_hash(stage)
    inputs = _collect_inputs(cfg, stage, manifest)
    entry = manifest["stages"].get(stage)
    if not force and _entry_valid(out_dir, entry, config_hash, inputs):
        log.info("stage %s: up to date", stage)
        return False

    tmp_dir = out_dir / f".tmp-{stage}"
    if tmp_dir.exists():
        shutil.rmtree(tmp_dir)
    tmp_dir.mkdir()
    try:
        outputs = _STAGE_FUNCS[stage](cfg, out_dir, tmp_dir)
        digests = {}
        for rel in outputs:
            os.replace(tmp_dir / rel, out_dir / rel)
            digests[rel] = sha256_file(out_dir / rel)
    finally:
        shutil.rmtree(tmp_dir, ignore_errors=True)

    manifest["stages"][stage] = {
        "config_hash": config_hash,
        "inputs": inputs,
        "outputs": digests,
    }
    _save_manifest(out_dir, manifest)
    log.info("stage %s: wrote %d artifacts", stage, len(digests))
    return True


def _collect_inputs(cfg: PipelineConfig, stage: str, manifest: dict) -> dict:
    """Checksums of everything a stage reads: external files plus upstream
    stage outputs (as recorded in the manifest)."""
    inputs = {}
    for path in _external_inputs(cfg, stage):
        inputs[path] = sha256_file(path) if os.path.exists(path) else "missing"
    for dep in _DEPS[stage]:
        entry = manifest["stages"].get(dep)
        if entry:
            for rel, digest in entry["outputs"].items():
                inputs[f"stage:{dep}:{rel}"] = digest
    return inputs


def run_all(cfg: PipelineConfig, force: bool = False):
    for stage in STAGES:
        run_stage(stage, cfg, force=force)


# ---------------------------------------------------------------- stages

def _stage_ingest(cfg: PipelineConfig, out_dir: Path, tmp: Path) -> list:
    docs = read_documents(cfg.corpus_path)
    vocab = build_vocab(docs, cfg.tokens, cfg.slices, min_count=cfg.min_count)
    counts = count_cooccurrence(docs, vocab, cfg.tokens, cfg.slices,
                                window=cfg.window,
                                source_weights=cfg.source_weights)
    outputs = ["vocab.tsv"]
    storage.write_vocab(vocab, tmp / "vocab.tsv")
    for cc in counts:
        ppmi = build_ppmi(cc, shift=cfg.ppmi_shift)
        name = f"ppmi_{cc.t:03d}.txt"
        storage.write_ppmi(ppmi, tmp / name)
        outputs.append(name)
    return outputs


def _ppmi_files(cfg: PipelineConfig, out_dir: Path) -> list:
    return sorted(out_dir.glob("ppmi_*.txt"))


def _stage_train(cfg: PipelineConfig, out_dir: Path, tmp: Path) -> list:
    mats = [storage.read_ppmi(p).matrix for p in _ppmi_files(cfg, out_dir)]
    years = cfg.slices.labels()
    U = train_embeddings(mats, cfg.train, years=years)
    storage.write_embeddings(U, tmp / "embeddings.bin")
    outputs = ["embeddings.bin"]
    if cfg.emit_tsv:
        vocab = storage.read_vocab(out_dir / "vocab.tsv")
        storage.write_embeddings_tsv(U, vocab, tmp / "embeddings.tsv")
        outputs.append("embeddings.tsv")
    return outputs


def _stage_atoms(cfg: PipelineConfig, out_dir: Path, tmp: Path) -> list:
    U = storage.read_embeddings(out_dir / "embeddings.bin")
    vocab = storage.read_vocab(out_dir / "vocab.tsv")
    outputs = []
    for t in range(U.T):
        d = train_atoms(U.slices[t], cfg.atoms, t=t)
        tsv = f"atoms_{t:03d}.tsv"
        npy = f"atoms_{t:03d}.npy"
        storage.write_atoms_tsv(d, vocab, U.years[t], tmp / tsv)
        storage.write_atom_matrix(d, tmp / npy)
        outputs.extend([tsv, npy])
    return outputs


def _make_tokenizer(cfg: PipelineConfig):
    rules = cfg.tokens

    def tok(text: str) -> list:
        return tokenize(DocumentRecord(id="", year=cfg.slices.year_min,
                                       source="other", text=text), rules)

    return tok


def _stage_measure(cfg: PipelineConfig, out_dir: Path, tmp: Path) -> list:
    U = storage.read_embeddings(out_dir / "embeddings.bin")
    vocab = storage.read_vocab(out_dir / "vocab.tsv")
    atom_dicts = {t: storage.read_atoms(out_dir / f"atoms_{t:03d}.tsv",
                                        out_dir / f"atoms_{t:03d}.npy", t=t)
                  for t in range(U.T)}
    companies = read_companies(cfg.companies_path)
    lexicon = LexiconSet.load(cfg.tech_terms_path, cfg.general_freq_path,
                              cfg.patent_freq_path)
    cpi = CpiTable.load(cfg.cpi_path, cfg.cpi_base_year)
    rows, rejected = build_panel(companies, vocab, U, atom_dicts, lexicon,
                                 cpi, cfg.measures,
                                 tokenizer=_make_tokenizer(cfg))
    write_panel_csv(rows, tmp / "panel.csv")
    with open(tmp / "panel_schema.json", "w", encoding="utf-8") as fh:
        json.dump(PANEL_SCHEMA, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(tmp / "rejected_companies.json", "w", encoding="utf-8") as fh:
        json.dump(sorted(rejected), fh, indent=2)
        fh.write("\n")
    return ["panel.csv", "panel_schema.json", "rejected_companies.json"]


def _stage_validate(cfg: PipelineConfig, out_dir: Path, tmp: Path) -> list:
    U = storage.read_embeddings(out_dir / "embeddings.bin")
    vocab = storage.read_vocab(out_dir / "vocab.tsv")
    result = {"axis": {}, "drift_words": [], "analogies": {}, "warnings": []}

    seeds = cfg.axis_seeds
    for t in range(U.T):
        try:
            axis = build_axis(U, t, seeds["positive"], seeds["negative"],
                              vocab, name="profit_loss")
        except AxisError as exc:
            result["warnings"].append(f"axis slice {t}: {exc}")
            continue
        projections = {}
        for word in seeds["positive"] + seeds["negative"]:
            if word in vocab.token_to_id:
                p = project_on_axis(U.slices[t][vocab.token_to_id[word]], axis)
                projections[word] = p
        result["axis"][str(U.years[t])] = {
            "dropped_seeds": axis.dropped,
            "seed_projections": projections,
        }

    drift_rows = []
    for word in cfg.drift_words:
        if word not in vocab.token_to_id:
            result["warnings"].append(f"drift word not in vocabulary: {word}")
            continue
        report = drift_trace(U, word, vocab, N=5)
        result["drift_words"].append(word)
        drift_rows.extend(report.to_long_rows())

    if not result["axis"]:
        raise ValidationFailure(
            "no slice yielded a usable axis: " + "; ".join(result["warnings"]))

    for query in cfg.analogy_queries:
        a, b, c = query
        key = f"{a}-{b}+{c}"
        try:
            result["analogies"][key] = analogy_query(U, U.T - 1, a, b, c,
                                                     vocab, N=5)
        except KeyError as exc:
            result["warnings"].append(str(exc))

    with open(tmp / "validation.json", "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(tmp / "drift_long.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["slice_year", "word", "neighbor", "rank", "similarity"])
        for row in drift_rows:
            writer.writerow([row[0], row[1], row[2], row[3], f"{row[4]:.8g}"])
    return ["validation.json", "drift_long.csv"]


_REPORT_MEASURES = ["local_distance", "global_distance",
                    "tech_app_local_distance", "centroid_spread",
                    "negentropy", "element_familiarity",
                    "time_to_market_months", "vc_diversity"]


def _stage_report(cfg: PipelineConfig, out_dir: Path, tmp: Path) -> list:
    rows = []
    with open(out_dir / "panel.csv", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(row)

    report = {"n_rows": len(rows)}
    if not rows:
        report["empty"] = True
    else:
        stats = {}
        for name in _REPORT_MEASURES:
            vals = np.array([float(r[name]) for r in rows if r[name] != ""])
            stats[name] = ({"mean": float(vals.mean()),
                            "std": float(vals.std(ddof=0)),
                            "n": int(vals.size)}
                           if vals.size else {"mean": None, "std": None, "n": 0})
        report["descriptives"] = stats

        outcomes = {}
        for r in rows:
            outcomes[r["outcome"]] = outcomes.get(r["outcome"], 0) + 1
        report["outcome_proportions"] = {
            k: v / len(rows) for k, v in sorted(outcomes.items())}

        report["quantile_tables"] = {
            name: _quantile_table(rows, name, cfg.report_quantiles)
            for name in ("local_distance", "global_distance")}

    with open(tmp / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ["report.json"]


def _quantile_table(rows, name: str, q: int) -> list:
    """Equal-size quantile groups of one measure with outcome rates per
    group."""
    vals = [(float(r[name]), r["outcome"]) for r in rows if r[name] != ""]
    if not vals:
        return []
    vals.sort(key=lambda p: p[0])
    q = max(1, min(q, len(vals)))
    groups = np.array_split(np.arange(len(vals)), q)
    table = []
    for g in groups:
        outcomes = [vals[i][1] for i in g]
        measures = [vals[i][0] for i in g]
        entry = {"n": len(g), "mean_measure": float(np.mean(measures))}
        for outcome in sorted(set(o for _, o in vals)):
            entry[f"rate_{outcome}"] = outcomes.count(outcome) / len(outcomes)
        table.append(entry)
    return table


_STAGE_FUNCS = {
    "ingest": _stage_ingest,
    "train": _stage_train,
    "atoms": _stage_atoms,
    "measure": _stage_measure,
    "validate": _stage_validate,
    "report": _stage_report,
}
