"""Jointly regularized temporal embedding: factorize per-slice PPMI matrices
with ridge and adjacent-slice smoothing penalties."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp


class DivergenceError(RuntimeError):
    """Objective became non-finite; carries the last finite iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class TrainConfig:
    k: int = 50
    lam: float = 10.0
    tau: float = 50.0
    gamma: float = None  # defaults to 50 * lam
    sweeps: int = 30
    seed: int = 0
    tol: float = 1e-4

    def __post_init__(self):
        if self.k < 1 or self.sweeps < 1:
            raise ValueError("k and sweeps must be >= 1")
        if self.lam < 0 or self.tau < 0:
            raise ValueError("weights must be >= 0")
        if self.gamma is None:
            object.__setattr__(self, "gamma", 50.0 * self.lam)


@dataclass
class EmbeddingTensor:
    """T aligned n x k word-vector slices over a joint vocabulary."""

    slices: np.ndarray  # T x n x k
    years: list

    @property
    def T(self) -> int:
        return self.slices.shape[0]

    @property
    def n(self) -> int:
        return self.slices.shape[1]

    @property
    def k(self) -> int:
        return self.slices.shape[2]

    def slice_for_year(self, year: int) -> int:
        """Index of the slice covering a year, clamped to the trained range."""
        years = self.years
        if year <= years[0]:
            return 0
        for t in range(len(years) - 1, -1, -1):
            if year >= years[t]:
                return t
        return 0


def init_embeddings(n: int, k: int, T: int, seed: int) -> EmbeddingTensor:
    """Uniform init in [-0.5/k, 0.5/k]; all slices share one draw so the
    smoothing term starts at zero."""
    if n < 1 or k < 1 or T < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    base = rng.uniform(-0.5 / k, 0.5 / k, size=(n, k))
    slices = np.repeat(base[None, :, :], T, axis=0).copy()
    return EmbeddingTensor(slices=slices, years=list(range(T)))


def _as_sparse(Y):
    if sp.issparse(Y):
        return Y.tocsr()
    if hasattr(Y, "matrix"):
        return Y.matrix.tocsr()
    return sp.csr_matrix(np.asarray(Y))


def objective_value(Ys, U: EmbeddingTensor, cfg: TrainConfig) -> float:
    """Value of the joint objective:
    1/2 sum_t ||Y(t) - U(t)U(t)'||_F^2 + lam/2 sum_t ||U(t)||_F^2
    + tau/2 sum_{t>=2} ||U(t-1) - U(t)||_F^2
    """
    mats = [_as_sparse(Y) for Y in Ys]
    T = len(mats)
    if U.slices.shape[0] != T:
        raise ValueError("slice count mismatch between Y and U")
    n = U.n
    total = 0.0
    for t in range(T):
        Yt = mats[t]
        if Yt.shape != (n, n):
            raise ValueError(f"dimension mismatch in slice {t}")
        Ut = U.slices[t]
        if n <= 2000:
            resid = Yt.toarray() - Ut @ Ut.T
            fit = float(np.sum(resid * resid))
        else:
            # ||Y||^2 - 2<Y, UU'> + ||U'U||^2 without forming the n x n residual
            gram = Ut.T @ Ut
            ynorm = float(Yt.multiply(Yt).sum())
            coo = Yt.tocoo()
            cross = float(np.sum(coo.data * np.sum(
                Ut[coo.row] * Ut[coo.col], axis=1)))
            fit = ynorm - 2.0 * cross + float(np.sum(gram * gram))
        total += 0.5 * fit + 0.5 * cfg.lam * float(np.sum(Ut * Ut))
    for t in range(1, T):
        diff = U.slices[t - 1] - U.slices[t]
        total += 0.5 * cfg.tau * float(np.sum(diff * diff))
    return total


def splitting_objective(Ys, U: np.ndarray, W: np.ndarray, cfg: TrainConfig) -> float:
    """Variable-splitting surrogate minimized by the sweeps:
    1/2 sum_t ||Y - U W'||^2 + gamma/2 sum_t ||U - W||^2
    + lam/2 sum_t (||U||^2 + ||W||^2)
    + tau/2 sum_{t>=2} (||U(t-1)-U(t)||^2 + ||W(t-1)-W(t)||^2)
    """
    mats = [_as_sparse(Y) for Y in Ys]
    T = len(mats)
    total = 0.0
    for t in range(T):
        resid = mats[t].toarray() - U[t] @ W[t].T
        total += 0.5 * float(np.sum(resid * resid))
        diff = U[t] - W[t]
        total += 0.5 * cfg.gamma * float(np.sum(diff * diff))
        total += 0.5 * cfg.lam * (float(np.sum(U[t] * U[t])) + float(np.sum(W[t] * W[t])))
    for t in range(1, T):
        du = U[t - 1] - U[t]
        dw = W[t - 1] - W[t]
        total += 0.5 * cfg.tau * (float(np.sum(du * du)) + float(np.sum(dw * dw)))
    return total


def solve_slice(t: int, Y, W: np.ndarray, U_prev, U_next,
                cfg: TrainConfig) -> np.ndarray:
    """Closed-form ridge update for one slice given the co-factor W and the
    previous iterate's temporal neighbors."""
    Yt = _as_sparse(Y)
    b = int(U_prev is not None) + int(U_next is not None)
    k = W.shape[1]
    A = W.T @ W + (cfg.gamma + cfg.lam + b * cfg.tau) * np.eye(k)
    B = Yt @ W + cfg.gamma * W
    if U_prev is not None:
        B = B + cfg.tau * U_prev
    if U_next is not None:
        B = B + cfg.tau * U_next
    try:
        return scipy.linalg.solve(A, np.asarray(B).T, assume_a="pos").T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "singular slice system; use a nonzero ridge weight lam") from exc


def train(Ys, cfg: TrainConfig, years=None, callback=None) -> EmbeddingTensor:
    """Jacobi sweeps over slices with variable splitting U ~ W.

    Every new U(t) and W(t) in a sweep is computed from the previous iterate
    only, then the iterates are swapped. Stops at cfg.sweeps or when the
    relative change of the splitting objective drops below cfg.tol. The
    splitting is collapsed as (U + W) / 2 at the end.
    """
    mats = [_as_sparse(Y) for Y in Ys]
    T = len(mats)
    n = mats[0].shape[0]
    init = init_embeddings(n, cfg.k, T, cfg.seed)
    U = init.slices.copy()
    W = init.slices.copy()

    prev_obj = splitting_objective(mats, U, W, cfg)
    for sweep in range(cfg.sweeps):
        newU = np.empty_like(U)
        newW = np.empty_like(W)
        for t in range(T):
            up = U[t - 1] if t > 0 else None
            un = U[t + 1] if t + 1 < T else None
            newU[t] = solve_slice(t, mats[t], W[t], up, un, cfg)
            # Y is symmetric, so the co-factor update mirrors the U update
            wp = W[t - 1] if t > 0 else None
            wn = W[t + 1] if t + 1 < T else None
            newW[t] = solve_slice(t, mats[t], U[t], wp, wn, cfg)
        U, W = newU, newW
        obj = splitting_objective(mats, U, W, cfg)
        if not np.isfinite(obj):
            raise DivergenceError(
                f"objective diverged at sweep {sweep}",
                last_iterate=EmbeddingTensor((U + W) / 2.0, years or list(range(T))))
        if callback is not None:
            callback(sweep, obj)
        if prev_obj > 0 and abs(prev_obj - obj) / prev_obj < cfg.tol:
            prev_obj = obj
            break
        prev_obj = obj

    final = (U + W) / 2.0
    return EmbeddingTensor(slices=final, years=list(years) if years is not None
                           else list(range(T)))


def cosine_matrix_row(U_slice: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Cosine similarity of one vector against every row of a slice."""
    norms = np.linalg.norm(U_slice, axis=1)
    vnorm = np.linalg.norm(vec)
    if vnorm == 0:
        raise ValueError("untrained/degenerate word: zero-norm vector")
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = (U_slice @ vec) / (norms * vnorm)
    sims[norms == 0] = -np.inf
    return sims


def nearest_neighbors(U: EmbeddingTensor, t: int, word: str, vocab, N: int = 10,
                      exclude_self: bool = True) -> list:
    """Top-N cosine neighbors of a word in slice t; ties break by word id."""
    if word not in vocab.token_to_id:
        raise KeyError(f"word not in vocabulary: {word}")
    wid = vocab.token_to_id[word]
    vec = U.slices[t][wid]
    sims = cosine_matrix_row(U.slices[t], vec)
    order = np.lexsort((np.arange(len(sims)), -sims))
    out = []
    for idx in order:
        if exclude_self and idx == wid:
            continue
        if not np.isfinite(sims[idx]):
            continue
        out.append((vocab.id_to_token[idx], float(sims[idx])))
        if len(out) == N:
            break
    return out
