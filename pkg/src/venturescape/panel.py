"""Event-history panel: company records, competing outcomes, mediators, and
multi-episode measure rows."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from itertools import combinations

import numpy as np

from . import measures as m

DAYS_PER_MONTH = 30.44

FUNDING_TYPES = ("seed", "early_round_a", "early_round_b", "later_round")
EVENT_TYPES = FUNDING_TYPES + ("ipo", "acquisition", "closure")
TERMINAL_TYPES = ("ipo", "closure")

OUTCOME_IPO_HIGH = "ipo_high_acq"
OUTCOME_FUNDING = "new_funding"
OUTCOME_OTHER_ACQ = "other_acq"
OUTCOME_CLOSE = "close"
OUTCOME_CENSORED = "censored"

# higher is more successful; used when two events share a date
_SUCCESS_RANK = {OUTCOME_IPO_HIGH: 4, OUTCOME_FUNDING: 3, OUTCOME_OTHER_ACQ: 2,
                 OUTCOME_CLOSE: 1, OUTCOME_CENSORED: 0}

FLAG_INCONSISTENT_TIMING = "inconsistent_timing"


class PanelInputError(ValueError):
    pass


def _parse_date(s) -> date:
    if isinstance(s, date):
        return s
    return datetime.strptime(str(s), "%Y-%m-%d").date()


@dataclass(frozen=True)
class InvestorProfile:
    id: str
    industry_keywords: frozenset


@dataclass(frozen=True)
class Event:
    type: str
    date: date
    price_usd: float = None
    investors: tuple = ()

    def __post_init__(self):
        if self.type not in EVENT_TYPES:
            raise PanelInputError(f"unknown event type: {self.type}")


@dataclass
class CompanyRecord:
    id: str
    description: str
    founded: date
    industry: str
    events: list
    snapshots: list = field(default_factory=list)  # (date, text) pairs

    @classmethod
    def from_json(cls, line: str) -> "CompanyRecord":
        obj = json.loads(line)
        events = []
        for e in obj.get("events", []):
            investors = tuple(
                InvestorProfile(id=str(i["id"]),
                                industry_keywords=frozenset(i.get("keywords", [])))
                for i in e.get("investors", []))
            events.append(Event(type=e["type"], date=_parse_date(e["date"]),
                                price_usd=e.get("price_usd"), investors=investors))
        snapshots = [(_parse_date(s["date"]), s["text"])
                     for s in obj.get("snapshots", [])]
        return cls(id=str(obj["id"]), description=str(obj["description"]),
                   founded=_parse_date(obj["founded"]),
                   industry=str(obj.get("industry", "")),
                   events=events, snapshots=snapshots)


@dataclass
class CpiTable:
    index_by_year: dict
    base_year: int

    def __post_init__(self):
        if self.base_year not in self.index_by_year:
            raise ValueError(f"base year {self.base_year} missing from CPI table")
        if any(v <= 0 for v in self.index_by_year.values()):
            raise ValueError("CPI indices must be positive")

    @classmethod
    def load(cls, path, base_year: int) -> "CpiTable":
        table = {}
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0] in ("year",) or row[0].startswith("#"):
                    continue
                table[int(row[0])] = float(row[1])
        return cls(index_by_year=table, base_year=base_year)

    def deflate(self, nominal: float, year: int) -> float:
        if year not in self.index_by_year:
            raise KeyError(f"CPI index missing for year {year}")
        return nominal * self.index_by_year[self.base_year] / self.index_by_year[year]


@dataclass
class MeasureRow:
    company_id: str
    episode_start: date
    episode_end: date  # None when censored
    slice_year: int
    local_distance: float
    global_distance: float
    tech_app_local_distance: float
    centroid_spread: float
    negentropy: float
    element_familiarity: float
    n_valid_elements: int
    rare_word_dummy: int
    no_tech_dummy: int
    text_length: int
    time_to_market_months: float  # None when censored
    vc_diversity: float  # None without >= 2 keyworded investors
    outcome: str
    degenerate_flags: set = field(default_factory=set)


def time_to_market(events):
    """Months from first seed to first early round, or (None, flags)."""
    seed = next((e for e in events if e.type == "seed"), None)
    early = next((e for e in events
                  if e.type in ("early_round_a", "early_round_b")), None)
    if seed is None or early is None:
        return None, set()
    days = (early.date - seed.date).days
    if days < 0:
        return None, {FLAG_INCONSISTENT_TIMING}
    return days / DAYS_PER_MONTH, set()


def vc_diversity(investors):
    """Mean pairwise Jaccard diversity (1 - |A&B|/|A|B|) over investors with
    nonempty keyword sets; None with fewer than two."""
    sets = [inv.industry_keywords for inv in investors if inv.industry_keywords]
    if len(sets) < 2:
        return None
    divs = [1.0 - len(a & b) / len(a | b) for a, b in combinations(sets, 2)]
    return float(np.mean(divs))


def acquisition_price_thresholds(companies, cpi: CpiTable, top_share: float = 0.3):
    """Per-industry deflated-price cutoff for the top-share acquisitions.

    The cutoff is the h-th largest deflated price with h = max(1,
    floor(top_share * n)), so a population of 10 yields exactly 3 high labels
    and a singleton is high by convention.
    """
    by_industry = {}
    for comp in companies:
        for e in comp.events:
            if e.type == "acquisition" and e.price_usd is not None:
                real = cpi.deflate(e.price_usd, e.date.year)
                by_industry.setdefault(comp.industry, []).append(real)
    cutoffs = {}
    for industry, prices in by_industry.items():
        prices = sorted(prices, reverse=True)
        h = max(1, math.floor(top_share * len(prices)))
        cutoffs[industry] = prices[h - 1]
    return cutoffs


def classify_event_outcome(event: Event, industry: str, cpi: CpiTable,
                           cutoffs: dict) -> str:
    if event.type in FUNDING_TYPES:
        return OUTCOME_FUNDING
    if event.type == "ipo":
        return OUTCOME_IPO_HIGH
    if event.type == "closure":
        return OUTCOME_CLOSE
    # acquisition: missing price always lands in other_acq
    if event.price_usd is None:
        return OUTCOME_OTHER_ACQ
    real = cpi.deflate(event.price_usd, event.date.year)
    cutoff = cutoffs.get(industry)
    if cutoff is not None and real >= cutoff:
        return OUTCOME_IPO_HIGH
    return OUTCOME_OTHER_ACQ


def interpolate_measure(snapshot_values, query_date: date) -> float:
    """Piecewise-linear in time between snapshots; nearest endpoint outside
    the recorded range."""
    if not snapshot_values:
        raise ValueError("no snapshots to interpolate")
    pts = sorted(snapshot_values, key=lambda p: p[0])
    if query_date <= pts[0][0]:
        return float(pts[0][1])
    if query_date >= pts[-1][0]:
        return float(pts[-1][1])
    for (d0, v0), (d1, v1) in zip(pts, pts[1:]):
        if d0 <= query_date <= d1:
            span = (d1 - d0).days
            if span == 0:
                return float(v1)
            frac = (query_date - d0).days / span
            return float(v0 + (v1 - v0) * frac)
    raise AssertionError("unreachable")


def build_episodes(company: CompanyRecord):
    """Inter-event episodes from founding; IPO and closure are terminal and
    later events are dropped. A trailing censored episode is added when the
    last event is not terminal (or there are no events)."""
    events = list(company.events)
    for a, b in zip(events, events[1:]):
        if b.date < a.date:
            raise PanelInputError(
                f"events out of order for company {company.id}")
    kept = []
    for e in events:
        kept.append(e)
        if e.type in TERMINAL_TYPES:
            break
    episodes = []
    start = company.founded
    for e in kept:
        episodes.append((start, e.date, e))
        start = e.date
    if not kept or kept[-1].type not in TERMINAL_TYPES:
        episodes.append((start, None, None))
    return episodes


@dataclass
class MeasureConfig:
    min_module_size: int = 2
    freq_ratio_threshold: float = 5.0
    lookback_years: int = 5
    rare_percentile: float = 0.01
    top_price_share: float = 0.3
    region_weighted: bool = False  # reserved alternative aggregation


def _episode_measures(tokens, vocab, U, t, atoms, lexicon, cfg: MeasureConfig):
    labels = m.classify_tech_app(tokens, lexicon, cfg.freq_ratio_threshold)
    flags = set()
    local, f = m.local_distance(tokens, vocab, U, t, atoms, cfg.min_module_size)
    flags |= f
    glob, f = m.global_distance(tokens, vocab, U, t, atoms, cfg.min_module_size)
    flags |= f
    ta, f = m.tech_app_local_distance(tokens, labels, vocab, U, t, atoms,
                                      cfg.min_module_size)
    flags |= f
    spread, f = m.centroid_spread(tokens, vocab, U, t, atoms, cfg.min_module_size)
    flags |= f
    negent, f = m.negentropy_balance(tokens, vocab, atoms)
    flags |= f
    fam, no_tech = m.element_familiarity(tokens, labels, vocab, t,
                                         cfg.lookback_years)
    _, n_valid, f = m.description_centroid(tokens, vocab, U, t)
    flags |= f
    length, rare, _ = m.text_controls(tokens, vocab, labels, cfg.rare_percentile)
    return {
        "local_distance": local,
        "global_distance": glob,
        "tech_app_local_distance": ta,
        "centroid_spread": spread,
        "negentropy": negent,
        "element_familiarity": fam,
        "n_valid_elements": n_valid,
        "rare_word_dummy": rare,
        "no_tech_dummy": no_tech,
        "text_length": length,
    }, flags


_INTERPOLATED_FIELDS = ("local_distance", "global_distance",
                        "tech_app_local_distance", "centroid_spread",
                        "negentropy", "element_familiarity")


def build_panel(companies, vocab, U, atom_dicts, lexicon, cpi: CpiTable,
                cfg: MeasureConfig = None, tokenizer=None):
    """Assemble multi-episode MeasureRows for every company.

    atom_dicts maps slice index -> AtomDictionary. tokenizer maps raw text to
    a token list (defaults to whitespace lowercasing).
    """
    cfg = cfg or MeasureConfig()
    if tokenizer is None:
        tokenizer = lambda text: text.lower().split()
    cutoffs = acquisition_price_thresholds(companies, cpi, cfg.top_price_share)

    rows, rejected = [], []
    for comp in companies:
        try:
            episodes = build_episodes(comp)
        except PanelInputError as exc:
            rejected.append((comp.id, str(exc)))
            continue
        ttm, ttm_flags = time_to_market(comp.events)
        for start, end, event in episodes:
            t = U.slice_for_year(start.year)
            flags = set(ttm_flags)
            if not (U.years[0] <= start.year <= U.years[-1]):
                flags.add(m.FLAG_SLICE_CLAMPED)
            atoms = atom_dicts[t]

            if comp.snapshots:
                per_snapshot = []
                for snap_date, snap_text in comp.snapshots:
                    vals, fl = _episode_measures(tokenizer(snap_text), vocab, U,
                                                 t, atoms, lexicon, cfg)
                    per_snapshot.append((snap_date, vals))
                    flags |= fl
                vals = dict(per_snapshot[-1][1])
                for name in _INTERPOLATED_FIELDS:
                    vals[name] = interpolate_measure(
                        [(d, v[name]) for d, v in per_snapshot], start)
            else:
                vals, fl = _episode_measures(tokenizer(comp.description), vocab,
                                             U, t, atoms, lexicon, cfg)
                flags |= fl

            if event is None:
                outcome = OUTCOME_CENSORED
                diversity = None
            else:
                outcome = classify_event_outcome(event, comp.industry, cpi,
                                                 cutoffs)
                diversity = vc_diversity(event.investors)
                # two same-day events: keep the more successful outcome
                same_day = [e for e in comp.events if e.date == event.date]
                if len(same_day) > 1:
                    outcome = max(
                        (classify_event_outcome(e, comp.industry, cpi, cutoffs)
                         for e in same_day),
                        key=_SUCCESS_RANK.get)

            rows.append(MeasureRow(
                company_id=comp.id, episode_start=start, episode_end=end,
                slice_year=U.years[t], time_to_market_months=ttm,
                vc_diversity=diversity, outcome=outcome,
                degenerate_flags=flags, **vals))
    return rows, rejected


PANEL_COLUMNS = [
    "company_id", "episode_start", "episode_end", "slice_year",
    "local_distance", "global_distance", "tech_app_local_distance",
    "centroid_spread", "negentropy", "element_familiarity",
    "n_valid_elements", "rare_word_dummy", "no_tech_dummy", "text_length",
    "time_to_market_months", "vc_diversity", "outcome", "degenerate_flags",
]


def write_panel_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PANEL_COLUMNS)
        for r in rows:
            writer.writerow([
                r.company_id, r.episode_start.isoformat(),
                r.episode_end.isoformat() if r.episode_end else "",
                r.slice_year,
                f"{r.local_distance:.12g}", f"{r.global_distance:.12g}",
                f"{r.tech_app_local_distance:.12g}",
                f"{r.centroid_spread:.12g}", f"{r.negentropy:.12g}",
                f"{r.element_familiarity:.12g}", r.n_valid_elements,
                r.rare_word_dummy, r.no_tech_dummy, r.text_length,
                "" if r.time_to_market_months is None
                else f"{r.time_to_market_months:.12g}",
                "" if r.vc_diversity is None else f"{r.vc_diversity:.12g}",
                r.outcome, ";".join(sorted(r.degenerate_flags)),
            ])


PANEL_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "company_id": {"type": "string"},
            "episode_start": {"type": "string", "format": "date"},
            "episode_end": {"type": ["string", "null"], "format": "date"},
            "slice_year": {"type": "integer"},
            "local_distance": {"type": "number", "minimum": 0, "maximum": 2},
            "global_distance": {"type": "number", "minimum": 0, "maximum": 2},
            "tech_app_local_distance": {"type": "number", "minimum": 0,
                                        "maximum": 2},
            "centroid_spread": {"type": "number", "minimum": 0, "maximum": 2},
            "negentropy": {"type": "number", "minimum": -1, "maximum": 0},
            "element_familiarity": {"type": "number", "minimum": 0},
            "n_valid_elements": {"type": "integer", "minimum": 0},
            "rare_word_dummy": {"enum": [0, 1]},
            "no_tech_dummy": {"enum": [0, 1]},
            "text_length": {"type": "integer", "minimum": 0},
            "time_to_market_months": {"type": ["number", "null"]},
            "vc_diversity": {"type": ["number", "null"], "minimum": 0,
                             "maximum": 1},
            "outcome": {"enum": [OUTCOME_IPO_HIGH, OUTCOME_FUNDING,
                                 OUTCOME_OTHER_ACQ, OUTCOME_CLOSE,
                                 OUTCOME_CENSORED]},
            "degenerate_flags": {"type": "string"},
        },
        "required": PANEL_COLUMNS,
    },
}


def read_companies(path) -> list:
    companies = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                companies.append(CompanyRecord.from_json(line))
    return companies
