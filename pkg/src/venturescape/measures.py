"""Company-level recombination measures over one embedding slice and its
discourse atoms: centroid projection, local/global distances, the
technology-application variants, balance entropy, familiarity, and text
controls."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .atoms import UNASSIGNED

# degenerate-measure flags attached to MeasureRow
FLAG_NO_VALID_TOKENS = "no_valid_tokens"
FLAG_ZERO_CENTROID = "zero_centroid"
FLAG_EMPTY_PAIR_POOL = "empty_pair_pool"
FLAG_SINGLE_MODULE = "single_module"
FLAG_SINGLE_ATOM = "single_atom"
FLAG_NO_TECH_APP_PAIRS = "no_tech_app_pairs"
FLAG_SLICE_CLAMPED = "slice_clamped"

TECHNOLOGY = "technology"
APPLICATION = "application"


@dataclass
class LexiconSet:
    """Technical-term dictionary union plus two relative-frequency tables."""

    tech_terms: frozenset
    general_freq: dict
    patent_freq: dict
    general_total: float = field(init=False)
    patent_total: float = field(init=False)

    def __post_init__(self):
        self.tech_terms = frozenset(t.lower() for t in self.tech_terms)
        self.general_total = float(sum(self.general_freq.values())) or 1.0
        self.patent_total = float(sum(self.patent_freq.values())) or 1.0

    @classmethod
    def load(cls, terms_path, general_csv, patent_csv) -> "LexiconSet":
        with open(terms_path, encoding="utf-8") as fh:
            terms = {line.strip().lower() for line in fh if line.strip()}
        return cls(tech_terms=frozenset(terms),
                   general_freq=_read_freq_csv(general_csv),
                   patent_freq=_read_freq_csv(patent_csv))


def _read_freq_csv(path) -> dict:
    freq = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "term":
                continue
            freq[row[0].lower()] = freq.get(row[0].lower(), 0.0) + float(row[1])
    return freq


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine distance undefined for zero vector")
    return 1.0 - float(a @ b) / (na * nb)


def description_centroid(tokens, vocab, U, t: int):
    """Mean vector of in-vocabulary tokens (duplicates counted).

    Returns (centroid, n_valid, flags); zero in-vocab tokens yields the zero
    vector plus a degenerate flag.
    """
    ids = [vocab.token_to_id[tok] for tok in tokens if tok in vocab.token_to_id]
    flags = set()
    if not ids:
        return np.zeros(U.k), 0, {FLAG_NO_VALID_TOKENS}
    centroid = U.slices[t][ids].mean(axis=0)
    if np.linalg.norm(centroid) == 0:
        flags.add(FLAG_ZERO_CENTROID)
    return centroid, len(ids), flags


def _module_groups(tokens, vocab, atoms, min_module_size: int):
    """Distinct in-vocab words grouped by atom; atoms with fewer than
    min_module_size company words ("marginal modules") are dropped."""
    distinct = sorted({tok for tok in tokens if tok in vocab.token_to_id},
                      key=vocab.token_to_id.get)
    groups = {}
    for tok in distinct:
        wid = vocab.token_to_id[tok]
        a = int(atoms.assignment[wid])
        if a == UNASSIGNED:
            continue
        groups.setdefault(a, []).append(wid)
    return {a: ids for a, ids in groups.items() if len(ids) >= min_module_size}


def local_distance(tokens, vocab, U, t: int, atoms, min_module_size: int = 2):
    """Mean cosine distance over all within-atom pairs of company words,
    pooled across surviving atoms."""
    groups = _module_groups(tokens, vocab, atoms, min_module_size)
    X = U.slices[t]
    dists = []
    for ids in groups.values():
        for i, j in combinations(ids, 2):
            dists.append(cosine_distance(X[i], X[j]))
    if not dists:
        return 0.0, {FLAG_EMPTY_PAIR_POOL}
    return float(np.mean(dists)), set()


def _unit_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return X / norms


def global_distance(tokens, vocab, U, t: int, atoms, min_module_size: int = 2):
    """Mean cosine distance over all pairs of per-atom company-word
    centroids. Centroids average unit-normalized member vectors so the
    measure is invariant to per-word rescaling."""
    groups = _module_groups(tokens, vocab, atoms, min_module_size)
    X = U.slices[t]
    centroids = []
    for a in sorted(groups):
        c = _unit_rows(X[groups[a]]).mean(axis=0)
        if np.linalg.norm(c) > 0:
            centroids.append(c)
    if len(centroids) < 2:
        return 0.0, {FLAG_SINGLE_MODULE}
    dists = [cosine_distance(a, b) for a, b in combinations(centroids, 2)]
    return float(np.mean(dists)), set()


def classify_tech_app(tokens, lexicon: LexiconSet,
                      freq_ratio_threshold: float = 5.0) -> dict:
    """Label each distinct token technology or application.

    Technology when in the dictionary union, or when its patent relative
    frequency exceeds its general relative frequency by the threshold factor.
    """
    labels = {}
    for tok in set(tokens):
        if tok in lexicon.tech_terms:
            labels[tok] = TECHNOLOGY
            continue
        g = lexicon.general_freq.get(tok)
        p = lexicon.patent_freq.get(tok)
        if g is None and p is None:
            labels[tok] = APPLICATION
            continue
        g_rel = (g or 0.0) / lexicon.general_total
        p_rel = (p or 0.0) / lexicon.patent_total
        if g_rel == 0.0:
            labels[tok] = TECHNOLOGY if p_rel > 0 else APPLICATION
        else:
            labels[tok] = TECHNOLOGY if p_rel / g_rel > freq_ratio_threshold \
                else APPLICATION
    return labels


def tech_app_local_distance(tokens, labels, vocab, U, t: int, atoms,
                            min_module_size: int = 2):
    """Mean cosine distance over technology-application cross pairs within
    surviving atoms, pooled."""
    groups = _module_groups(tokens, vocab, atoms, min_module_size)
    X = U.slices[t]
    dists = []
    for ids in groups.values():
        tech = [i for i in ids if labels.get(vocab.id_to_token[i]) == TECHNOLOGY]
        app = [i for i in ids if labels.get(vocab.id_to_token[i]) == APPLICATION]
        for i in tech:
            for j in app:
                dists.append(cosine_distance(X[i], X[j]))
    if not dists:
        return 0.0, {FLAG_NO_TECH_APP_PAIRS}
    return float(np.mean(dists)), set()


def centroid_spread(tokens, vocab, U, t: int, atoms, min_module_size: int = 2):
    """Per surviving atom, mean cosine distance of member words from the
    atom's company-word centroid; averaged across atoms. Atoms whose centroid
    collapses to zero are skipped."""
    groups = _module_groups(tokens, vocab, atoms, min_module_size)
    X = U.slices[t]
    per_atom = []
    flags = set()
    for ids in groups.values():
        c = _unit_rows(X[ids]).mean(axis=0)
        if np.linalg.norm(c) == 0:
            flags.add(FLAG_ZERO_CENTROID)
            continue
        per_atom.append(float(np.mean([cosine_distance(X[i], c) for i in ids])))
    if not per_atom:
        flags.add(FLAG_EMPTY_PAIR_POOL)
        return 0.0, flags
    return float(np.mean(per_atom)), flags


def negentropy_balance(tokens, vocab, atoms):
    """Normalized negative entropy of company-word counts across occupied
    atoms, in [-1, 0]; a single occupied atom returns 0 by convention."""
    distinct = {tok for tok in tokens if tok in vocab.token_to_id}
    counts = {}
    for tok in distinct:
        a = int(atoms.assignment[vocab.token_to_id[tok]])
        if a == UNASSIGNED:
            continue
        counts[a] = counts.get(a, 0) + 1
    if not counts:
        return 0.0, {FLAG_NO_VALID_TOKENS}
    C = len(counts)
    if C == 1:
        return 0.0, {FLAG_SINGLE_ATOM}
    total = sum(counts.values())
    ent = sum((c / total) * math.log(c / total) for c in counts.values())
    return ent / math.log(C), set()


def element_familiarity(tokens, labels, vocab, t: int, lookback_years: int = 5):
    """Mean over technology tokens of ln(1 + count over the preceding
    lookback slices). Slice width of one year is assumed for the lookback."""
    tech = sorted({tok for tok in tokens if labels.get(tok) == TECHNOLOGY})
    if not tech:
        return 0.0, 1  # value, no_tech_dummy
    window = range(t - lookback_years, t)
    vals = [math.log1p(vocab.count_in_window(tok, window)) for tok in tech]
    return float(np.mean(vals)), 0


def text_controls(tokens, vocab, labels, rare_percentile: float = 0.01):
    """(text_length, rare_word_dummy, no_tech_dummy)."""
    text_length = len(tokens)
    if text_length == 0:
        return 0, 1, 1
    threshold = vocab.rare_threshold(rare_percentile)
    rare = 0
    for tok in tokens:
        if tok not in vocab.token_to_id:
            rare = 1
            break
        if vocab.global_counts[vocab.token_to_id[tok]] < threshold:
            rare = 1
            break
    no_tech = 0 if any(labels.get(tok) == TECHNOLOGY for tok in tokens) else 1
    return text_length, rare, no_tech
