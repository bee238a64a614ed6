"""Corpus ingestion: tokenization, vocabulary, weighted co-occurrence, PPMI."""

from __future__ import annotations

import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

SOURCES = ("news", "patent", "other")

_PUNCT_RE = re.compile(r"[^\w\s]")
_NUM_RE = re.compile(r"^\d+$")


class EmptyVocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class DocumentRecord:
    id: str
    year: int
    source: str
    text: str

    @classmethod
    def from_json(cls, line: str) -> "DocumentRecord":
        obj = json.loads(line)
        source = obj.get("source") or "other"
        if source not in SOURCES:
            source = "other"
        return cls(id=str(obj["id"]), year=int(obj["year"]), source=source,
                   text=str(obj["text"]))


@dataclass(frozen=True)
class TokenRules:
    """Deterministic tokenization rules applied to every document."""

    lowercase: bool = True
    strip_punct: bool = True
    strip_numbers: bool = False
    min_token_len: int = 1
    stopwords: frozenset = frozenset()
    # phrases joined into single tokens, e.g. ("real", "estate") -> "real_estate"
    bigrams: tuple = ()


@dataclass(frozen=True)
class SliceSpec:
    """Maps calendar years onto time-slice indices."""

    year_min: int
    year_max: int
    width: int = 1

    def __post_init__(self):
        if self.year_max < self.year_min:
            raise ValueError("year_max < year_min")
        if self.width < 1:
            raise ValueError("slice width must be >= 1")

    @property
    def n_slices(self) -> int:
        return (self.year_max - self.year_min) // self.width + 1

    def index(self, year: int):
        """Slice index for a calendar year, or None when out of range."""
        if year < self.year_min or year > self.year_max:
            return None
        return (year - self.year_min) // self.width

    def labels(self) -> list:
        """Representative (starting) year of each slice."""
        return [self.year_min + t * self.width for t in range(self.n_slices)]


def tokenize(doc: DocumentRecord, rules: TokenRules) -> list:
    """Tokenize one document. Empty result is valid, not an error."""
    text = doc.text
    if rules.lowercase:
        text = text.lower()
    if rules.strip_punct:
        text = _PUNCT_RE.sub(" ", text)
    tokens = text.split()
    if rules.strip_numbers:
        tokens = [t for t in tokens if not _NUM_RE.match(t)]
    if rules.min_token_len > 1:
        tokens = [t for t in tokens if len(t) >= rules.min_token_len]
    if rules.bigrams:
        pairs = set(tuple(p) for p in rules.bigrams)
        joined = []
        i = 0
        while i < len(tokens):
            if i + 1 < len(tokens) and (tokens[i], tokens[i + 1]) in pairs:
                joined.append(tokens[i] + "_" + tokens[i + 1])
                i += 2
            else:
                joined.append(tokens[i])
                i += 1
        tokens = joined
    if rules.stopwords:
        tokens = [t for t in tokens if t not in rules.stopwords]
    return tokens


@dataclass
class Vocabulary:
    """Dense token ids with per-slice and global counts."""

    token_to_id: dict
    id_to_token: list
    slice_counts: np.ndarray  # T x n token occurrence counts
    global_counts: np.ndarray  # length n
    slice_totals: np.ndarray  # length T, total tokens per slice

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        return self.token_to_id[token]

    def count_in_window(self, token: str, slices) -> float:
        """Total occurrences of a token over an iterable of slice indices."""
        if token not in self.token_to_id:
            return 0.0
        i = self.token_to_id[token]
        T = self.slice_counts.shape[0]
        return float(sum(self.slice_counts[t, i] for t in slices if 0 <= t < T))

    def rare_threshold(self, percentile: float) -> float:
        """Global-count value below which a token counts as very rare."""
        return float(np.quantile(self.global_counts, percentile))


def build_vocab(docs, rules: TokenRules, slices: SliceSpec,
                min_count: int = 10) -> Vocabulary:
    """Build the joint vocabulary across slices.

    Tokens are retained when they reach min_count in at least one slice.
    Ids are assigned by descending global frequency, ties lexicographic.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    per_slice = [Counter() for _ in range(slices.n_slices)]
    for doc in docs:
        t = slices.index(doc.year)
        if t is None:
            continue
        per_slice[t].update(tokenize(doc, rules))

    keep = set()
    for counter in per_slice:
        for token, c in counter.items():
            if c >= min_count:
                keep.add(token)
    if not keep:
        raise EmptyVocabularyError("empty vocabulary after min_count filtering")

    totals = Counter()
    for counter in per_slice:
        totals.update(counter)
    ordered = sorted(keep, key=lambda w: (-totals[w], w))
    token_to_id = {w: i for i, w in enumerate(ordered)}

    T, n = slices.n_slices, len(ordered)
    slice_counts = np.zeros((T, n), dtype=np.float64)
    for t, counter in enumerate(per_slice):
        for token, c in counter.items():
            i = token_to_id.get(token)
            if i is not None:
                slice_counts[t, i] = c
    global_counts = slice_counts.sum(axis=0)
    slice_totals = np.array([sum(c.values()) for c in per_slice], dtype=np.float64)
    return Vocabulary(token_to_id, ordered, slice_counts, global_counts, slice_totals)


@dataclass
class SliceCooccurrence:
    """Sparse symmetric weighted pair counts for one slice."""

    t: int
    n: int
    pair_counts: dict  # (i, j) with i <= j -> weight; diagonal excluded
    marginals: np.ndarray  # row sums of the symmetric matrix
    total_mass: float  # D: sum over all ordered pairs
    skipped_docs: int = 0

    def pair(self, i: int, j: int) -> float:
        if i > j:
            i, j = j, i
        return self.pair_counts.get((i, j), 0.0)


def count_cooccurrence(docs, vocab: Vocabulary, rules: TokenRules,
                       slices: SliceSpec, window: int = 5,
                       source_weights=None) -> list:
    """Weighted symmetric co-occurrence counts per slice.

    Each unordered in-window token pair adds the document's source weight to
    both ordered cells. Self-pairs are excluded; no distance decay.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    weights = {"news": 1.0, "patent": 1.0, "other": 1.0}
    if source_weights:
        weights.update(source_weights)
    if any(w <= 0 for w in weights.values()):
        raise ValueError("source weights must be > 0")

    accs = [defaultdict(float) for _ in range(slices.n_slices)]
    skipped = [0] * slices.n_slices
    out_of_range = 0
    for doc in docs:
        t = slices.index(doc.year)
        if t is None:
            out_of_range += 1
            continue
        w = weights.get(doc.source, weights["other"])
        ids = [vocab.token_to_id[tok] for tok in tokenize(doc, rules)
               if tok in vocab.token_to_id]
        acc = accs[t]
        for pos, i in enumerate(ids):
            hi = min(pos + window, len(ids) - 1)
            for pos2 in range(pos + 1, hi + 1):
                j = ids[pos2]
                if i == j:
                    continue
                key = (i, j) if i < j else (j, i)
                acc[key] += w

    n = len(vocab)
    results = []
    for t, acc in enumerate(accs):
        marginals = np.zeros(n, dtype=np.float64)
        mass = 0.0
        for (i, j), v in acc.items():
            marginals[i] += v
            marginals[j] += v
            mass += 2.0 * v
        results.append(SliceCooccurrence(
            t=t, n=n, pair_counts=dict(acc), marginals=marginals,
            total_mass=mass, skipped_docs=out_of_range))
    return results


@dataclass
class PpmiMatrix:
    """Sparse symmetric positive PMI matrix for one slice."""

    t: int
    n: int
    matrix: sp.csr_matrix

    def frobenius_sq(self) -> float:
        return float(self.matrix.multiply(self.matrix).sum())


def build_ppmi(counts: SliceCooccurrence, shift: float = 1.0) -> PpmiMatrix:
    """Shifted positive PMI: max(ln(#(w,c) D / (#(w)#(c))) - ln(shift), 0)."""
    if shift < 1.0:
        raise ValueError("shift must be >= 1")
    n = counts.n
    log_shift = math.log(shift)
    rows, cols, vals = [], [], []
    D = counts.total_mass
    for (i, j), v in counts.pair_counts.items():
        mi, mj = counts.marginals[i], counts.marginals[j]
        if mi <= 0 or mj <= 0:
            raise ValueError(f"zero marginal with nonzero pair count at ({i},{j})")
        pmi = math.log(v * D / (mi * mj)) - log_shift
        if pmi > 0:
            rows.extend((i, j))
            cols.extend((j, i))
            vals.extend((pmi, pmi))
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return PpmiMatrix(t=counts.t, n=n, matrix=mat)


def read_documents(path) -> list:
    """Read a JSONL corpus file into DocumentRecords."""
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = DocumentRecord.from_json(line)
            if rec.text.strip():
                docs.append(rec)
    return docs
