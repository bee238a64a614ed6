"""On-disk artifact formats: sparse PPMI triplets, the binary embedding
tensor, vocabulary and atom tables."""

from __future__ import annotations

import struct

import numpy as np
import scipy.sparse as sp

from .corpus import PpmiMatrix, Vocabulary
from .embedding import EmbeddingTensor

EMBEDDING_MAGIC = b"VSEM"
EMBEDDING_VERSION = 1


def write_ppmi(ppmi: PpmiMatrix, path):
    """Triplet text format: header 't n nnz', then 'i j value' with i <= j."""
    coo = sp.triu(ppmi.matrix, k=0).tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{ppmi.t} {ppmi.n} {coo.nnz}\n")
        order = np.lexsort((coo.col, coo.row))
        for idx in order:
            fh.write(f"{coo.row[idx]} {coo.col[idx]} {coo.data[idx]:.17g}\n")


def read_ppmi(path) -> PpmiMatrix:
    with open(path, encoding="utf-8") as fh:
        t, n, nnz = (int(x) for x in fh.readline().split())
        rows, cols, vals = [], [], []
        for _ in range(nnz):
            i, j, v = fh.readline().split()
            i, j, v = int(i), int(j), float(v)
            rows.append(i)
            cols.append(j)
            vals.append(v)
            if i != j:
                rows.append(j)
                cols.append(i)
                vals.append(v)
    return PpmiMatrix(t=t, n=n, matrix=sp.csr_matrix((vals, (rows, cols)),
                                                     shape=(n, n)))


def write_embeddings(U: EmbeddingTensor, path):
    """Binary: magic, version, T, n, k as uint32, year labels as int32,
    then float32 slices row-major."""
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<IIII", EMBEDDING_VERSION, U.T, U.n, U.k))
        fh.write(np.asarray(U.years, dtype="<i4").tobytes())
        fh.write(U.slices.astype("<f4").tobytes())


def read_embeddings(path) -> EmbeddingTensor:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMBEDDING_MAGIC:
            raise ValueError(f"not an embedding file: {path}")
        version, T, n, k = struct.unpack("<IIII", fh.read(16))
        if version != EMBEDDING_VERSION:
            raise ValueError(f"unsupported embedding version {version}")
        years = np.frombuffer(fh.read(4 * T), dtype="<i4").tolist()
        data = np.frombuffer(fh.read(4 * T * n * k), dtype="<f4")
    slices = data.reshape(T, n, k).astype(np.float64)
    return EmbeddingTensor(slices=slices, years=years)


def write_embeddings_tsv(U: EmbeddingTensor, vocab: Vocabulary, path):
    with open(path, "w", encoding="utf-8") as fh:
        for t, year in enumerate(U.years):
            for i, word in enumerate(vocab.id_to_token):
                vals = "\t".join(f"{v:.6g}" for v in U.slices[t][i])
                fh.write(f"{word}\t{year}\t{vals}\n")


def write_vocab(vocab: Vocabulary, path):
    """TSV with per-slice counts so downstream stages can reload the full
    Vocabulary (familiarity and rare-word controls need slice counts)."""
    T = vocab.slice_counts.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        totals = "\t".join(f"{v:.17g}" for v in vocab.slice_totals)
        fh.write(f"#slices\t{T}\t{totals}\n")
        fh.write("#token\tid\tglobal" + "".join(f"\tc{t}" for t in range(T)) + "\n")
        for i, token in enumerate(vocab.id_to_token):
            counts = "\t".join(f"{v:.17g}" for v in vocab.slice_counts[:, i])
            fh.write(f"{token}\t{i}\t{vocab.global_counts[i]:.17g}\t{counts}\n")


def read_vocab(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        T = int(header[1])
        slice_totals = np.array([float(x) for x in header[2:2 + T]])
        fh.readline()  # column header
        tokens, counts = [], []
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            tokens.append(parts[0])
            counts.append([float(x) for x in parts[3:3 + T]])
    slice_counts = np.array(counts, dtype=np.float64).T if tokens else \
        np.zeros((T, 0))
    return Vocabulary(
        token_to_id={w: i for i, w in enumerate(tokens)},
        id_to_token=tokens,
        slice_counts=slice_counts,
        global_counts=slice_counts.sum(axis=0),
        slice_totals=slice_totals,
    )


def read_atoms(tsv_path, matrix_path, t: int = 0):
    """Rebuild an AtomDictionary from its TSV assignment + matrix files."""
    from .atoms import AtomDictionary

    atoms = np.load(matrix_path, allow_pickle=False)
    assignment, scores = [], []
    with open(tsv_path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                continue
            _, atom_id, _, score = line.rstrip("\n").split("\t")
            assignment.append(int(atom_id))
            scores.append(float(score))
    return AtomDictionary(t=t, atoms=atoms,
                          assignment=np.array(assignment, dtype=np.int64),
                          scores=np.array(scores), error_trace=[])


def write_atoms_tsv(dictionary, vocab: Vocabulary, year: int, path):
    """One row per assigned word: year, atom_id, word, score."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# year\tatom_id\tword\tscore\n")
        for i, word in enumerate(vocab.id_to_token):
            a = int(dictionary.assignment[i])
            score = dictionary.scores[i]
            score_s = "nan" if not np.isfinite(score) else f"{score:.8g}"
            fh.write(f"{year}\t{a}\t{word}\t{score_s}\n")


def write_atom_matrix(dictionary, path):
    np.save(path, dictionary.atoms, allow_pickle=False)
