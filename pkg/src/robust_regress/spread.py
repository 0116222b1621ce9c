"""Well-spreadness diagnostics for the column span of a design matrix."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, PreconditionError
from .huber import top_eigenvalue
from .median import topk_mask
from .rng import as_source


@dataclass
class SpreadReport:
    """Best witness found against (m, rho)-spreadness.

    ``rho_lower_witnessed`` is ``||v_rest|| / ||v||`` for the witness
    ``v = X u`` with ``witness_set`` (its m largest entries) removed.  It
    is an upper bound on the true spread constant rho, never a certificate.
    """

    m: int
    rho_lower_witnessed: float
    witness_v: np.ndarray
    witness_set: np.ndarray
    method: str
    witness_u: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "rho_lower_witnessed": self.rho_lower_witnessed,
            "witness_v": [float(x) for x in self.witness_v],
            "witness_set": [int(i) for i in self.witness_set],
            "method": self.method,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def kappa_r(X, u, r: float) -> float:
    """Share of ``||Xu||^2`` on entries with ``r^2 v_i^2 <= ||v||^2 / n``."""
    X = np.asarray(X, dtype=float)
    u = np.asarray(u, dtype=float)
    if not r > 0:
        raise InvalidArgument("r must be positive")
    if not np.any(u):
        raise InvalidArgument("u must be nonzero")
    v = X @ u
    sq = v * v
    total = sq.sum()
    if total == 0.0:
        raise InvalidArgument("Xu is the zero vector")
    keep = r * r * sq <= total / X.shape[0]
    return float(sq[keep].sum() / total)


def complement_ratio(v, removed) -> float:
    """``||v_rest|| / ||v||`` once the indices in ``removed`` are dropped."""
    v = np.asarray(v, dtype=float)
    mask = np.ones(v.size, dtype=bool)
    mask[np.asarray(removed, dtype=int)] = False
    return float(math.sqrt(np.sum(v[mask] ** 2) / np.sum(v * v)))


def _topm_indices(v, m):
    return np.flatnonzero(topk_mask(v, m))


def spread_witness_search(X, m: int, restarts: int = 32, rng=0, iters: int = 500) -> SpreadReport:
    """Search for the column-span vector that loses the most mass to ``m`` deletions.

    For ``d == 1`` the answer is exact.  Otherwise projected gradient
    descent on the unit sphere minimizes the retained fraction from
    ``restarts`` random starts (all advanced together), with step
    ``1/||X||_op^2``; the worst deletion set for a fixed ``v`` is always its
    top-``m`` magnitudes, recomputed every step.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if not 1 <= m < n:
        raise InvalidArgument(f"m must satisfy 1 <= m < n={n}, got {m}")
    if d == 1:
        v = X[:, 0].copy()
        if not np.any(v):
            raise InvalidArgument("design column is zero")
        S = np.sort(_topm_indices(v, m))
        # retained mass summed from the smallest magnitude up
        sq = np.sort(v * v)
        ratio = math.sqrt(sq[:n - m].sum() / sq.sum())
        return SpreadReport(m, ratio, v, S, "exact_d1", np.ones(1))

    step = 1.0 / top_eigenvalue(X.T @ X)
    U = as_source(rng).stream().normal((d, restarts))
    U /= np.linalg.norm(U, axis=0)
    best_ratio, best_u = np.inf, None
    rows = np.arange(restarts)
    for _ in range(iters + 1):
        V = X @ U                                   # n x restarts
        sq = V * V
        top = np.argpartition(-sq, m - 1, axis=0)[:m]
        kept = sq.sum(axis=0) - sq[top, rows].sum(axis=0)
        total = sq.sum(axis=0)
        ratio = kept / total
        j = int(np.argmin(ratio))
        if ratio[j] < best_ratio:
            best_ratio, best_u = ratio[j], U[:, j].copy()
        # total/2 times the gradient of kept/total
        Vc = V.copy()
        Vc[top, rows] = 0.0
        G = X.T @ (Vc - ratio * V)
        U = U - step * G
        U /= np.linalg.norm(U, axis=0)

    v = X @ best_u
    S = np.sort(_topm_indices(v, m))
    return SpreadReport(m, complement_ratio(v, S), v, S, "randomized_search", best_u)


def l1_vs_l2_check(v, A, m: int, g1: float, g2: float) -> bool:
    """Check the l1-versus-l2 inequality for a vector meeting its premises.

    Premises: mass on ``A`` is at most ``g1^2 ||v||^2`` and every ``m``-set
    carries at most ``g2^2 ||v||^2``.  Returns whether
    ``sum_{i not in A} |v_i| >= (1 - g1^2 - g2^2) / g2 * sqrt(m) * ||v||``.
    Violated premises raise PreconditionError.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    if not 1 <= m <= n:
        raise PreconditionError(f"m must lie in [1, {n}]")
    # g1 = 0 is allowed: it forces A to carry no mass
    if not (g1 >= 0 and g2 > 0):
        raise PreconditionError("need g1 >= 0 and g2 > 0")
    inA = np.zeros(n, dtype=bool)
    inA[np.asarray(A, dtype=int)] = True
    sq = v * v
    total = sq.sum()
    if sq[inA].sum() > g1 * g1 * total:
        raise PreconditionError("mass on A exceeds g1^2 ||v||^2")
    if np.sort(sq)[n - m:].sum() > g2 * g2 * total:
        raise PreconditionError("some m-subset exceeds g2^2 ||v||^2")
    lhs = np.abs(v[~inA]).sum()
    rhs = (1 - g1 * g1 - g2 * g2) / g2 * math.sqrt(m) * math.sqrt(total)
    # relative slack absorbs summation rounding in equality cases
    return bool(lhs >= rhs - 1e-12 * max(abs(rhs), lhs))


def sparse_operator_norm(X, k: int, trials: int = 16, rng=0, iters: int = 1000) -> float:
    """Lower bound on ``max v^T X u`` over unit ``u`` and k-sparse unit ``v``.

    Alternates the two closed-form maximizations (``v`` = normalized top-k
    of ``Xu``, ``u`` = normalized ``X^T v``) from random starts.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if not 1 <= k <= n:
        raise InvalidArgument(f"k must lie in [1, {n}]")
    stream = as_source(rng).stream()
    best = 0.0
    for _ in range(trials):
        u = stream.normal(d)
        u /= np.linalg.norm(u)
        val = -np.inf
        for _ in range(iters):
            w = X @ u
            v = np.where(topk_mask(w, k), w, 0.0)
            nv = np.linalg.norm(v)
            if nv == 0.0:
                break
            v /= nv
            g = X.T @ v
            ng = np.linalg.norm(g)
            if ng == 0.0:
                break
            u = g / ng
            new = float(ng)  # v^T X u at the new u
            if new - val <= 1e-15 * max(1.0, new):
                val = max(val, new)
                break
            val = new
        best = max(best, val)
    return best
