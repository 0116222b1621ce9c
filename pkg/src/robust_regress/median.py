"""Coordinate-wise median estimators for Gaussian designs.

All of them reduce to one primitive: the median of the ratios
``y'_i / X'_ij`` over rows whose design entry is not too small, taken
after a random sign flip and Gaussian shift of each row.  Bootstrapping
repeats that on fresh blocks of rows, each time fitting the residual of
the running estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numba import njit

from .errors import EstimationFailure, InvalidArgument, SingularMatrixError
from .model import RegressionInstance, preprocess_symmetrize
from .rng import RandomSource, as_source

EIG_FLOOR = 1e-12


# --- selection ---------------------------------------------------------------

@njit(cache=True)
def _insertion_sort(a, lo, hi):
    for i in range(lo + 1, hi + 1):
        v = a[i]
        j = i - 1
        while j >= lo and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v


@njit(cache=True)
def _select(a, lo, hi, k):
    """k-th smallest (absolute index) of a[lo:hi+1]; permutes that range."""
    while True:
        if hi - lo < 10:
            _insertion_sort(a, lo, hi)
            return a[k]
        # medians of groups of five, gathered at the front of the range
        ng = 0
        for g in range(lo, hi + 1, 5):
            end = min(g + 4, hi)
            _insertion_sort(a, g, end)
            m = (g + end) // 2
            tmp = a[m]
            a[m] = a[lo + ng]
            a[lo + ng] = tmp
            ng += 1
        pivot = _select(a, lo, lo + ng - 1, lo + (ng - 1) // 2)
        # three-way partition: [lo, lt) < pivot, [lt, gt] == pivot, (gt, hi] > pivot
        lt = lo
        i = lo
        gt = hi
        while i <= gt:
            v = a[i]
            if v < pivot:
                a[i] = a[lt]
                a[lt] = v
                lt += 1
                i += 1
            elif v > pivot:
                a[i] = a[gt]
                a[gt] = v
                gt -= 1
            else:
                i += 1
        if k < lt:
            hi = lt - 1
        elif k > gt:
            lo = gt + 1
        else:
            return pivot


def select_kth(values, k: int, inplace: bool = False) -> float:
    """k-th smallest element (0-based) in worst-case linear time."""
    a = np.asarray(values, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise InvalidArgument("need a non-empty 1-d array")
    if not 0 <= k < a.size:
        raise InvalidArgument(f"order statistic {k} out of range for {a.size} values")
    if not inplace or not a.flags.writeable or not a.flags.c_contiguous:
        a = a.copy()
    return float(_select(a, 0, a.size - 1, k))


def select_median(values, inplace: bool = False) -> float:
    """Lower median: the ``ceil(n/2)``-th smallest value."""
    n = np.size(values)
    if n == 0:
        raise InvalidArgument("median of an empty array")
    return select_kth(values, (n + 1) // 2 - 1, inplace=inplace)


# --- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class MedianConfig:
    magnitude_cutoff: float = 0.5
    delta_bound: float | None = None
    sparsity_k: int | None = None
    preprocess: bool = True

    def __post_init__(self):
        if self.delta_bound is not None and not self.delta_bound >= 3:
            raise InvalidArgument(f"delta_bound must be >= 3, got {self.delta_bound}")
        if self.sparsity_k is not None and self.sparsity_k < 1:
            raise InvalidArgument("sparsity_k must be positive")
        if not self.magnitude_cutoff > 0:
            raise InvalidArgument("magnitude_cutoff must be positive")

    def require_delta(self) -> float:
        if self.delta_bound is None:
            raise InvalidArgument("this estimator needs delta_bound (an upper bound on 3(1+||beta*||))")
        return float(self.delta_bound)

    def require_k(self, d: int) -> int:
        if self.sparsity_k is None:
            raise InvalidArgument("this estimator needs sparsity_k")
        if self.sparsity_k > d:
            raise InvalidArgument(f"sparsity_k={self.sparsity_k} exceeds d={d}")
        return int(self.sparsity_k)


@dataclass(frozen=True)
class CovarianceEstimate:
    sigma_hat: np.ndarray
    source_sample_count: int

    def __post_init__(self):
        S = np.asarray(self.sigma_hat, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise InvalidArgument("covariance must be square")
        if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise InvalidArgument("covariance must be symmetric")
        S = (S + S.T) / 2
        if np.linalg.eigvalsh(S)[0] <= EIG_FLOOR:
            raise SingularMatrixError("covariance estimate is not positive definite")
        object.__setattr__(self, "sigma_hat", S)


# --- single-pass estimators -------------------------------------------------------

def _column_median(y, col, cutoff, j=None):
    keep = np.abs(col) >= cutoff
    if not keep.any():
        where = "" if j is None else f" for coordinate {j}"
        raise EstimationFailure(f"no design entries of magnitude >= {cutoff}{where}")
    z = y[keep] / col[keep]
    return select_median(z, inplace=True)


def univariate_median(inst: RegressionInstance, cfg: MedianConfig = MedianConfig(), rng=0) -> float:
    """Median of ``y'_i / x'_i`` over rows with ``|x'_i| >= cutoff`` (d must be 1)."""
    if inst.d != 1:
        raise InvalidArgument(f"univariate_median needs d=1, got d={inst.d}")
    return float(multivariate_median_iteration(inst, cfg, rng)[0])


def multivariate_median_iteration(inst: RegressionInstance, cfg: MedianConfig = MedianConfig(),
                                  rng=0) -> np.ndarray:
    """One shared preprocessing pass, then the univariate median on each column."""
    if cfg.preprocess:
        inst = preprocess_symmetrize(inst, as_source(rng))
    X, y = inst.X, inst.y
    return np.array([_column_median(y, X[:, j], cfg.magnitude_cutoff, j)
                     for j in range(inst.d)])


def topk_mask(v, k: int) -> np.ndarray:
    """Boolean mask of the k largest magnitudes; ties go to the lower index."""
    v = np.asarray(v, dtype=float)
    order = np.lexsort((np.arange(v.size), -np.abs(v)))
    mask = np.zeros(v.size, dtype=bool)
    mask[order[:k]] = True
    return mask


def sparse_topk_iteration(inst: RegressionInstance, cfg: MedianConfig, rng=0) -> np.ndarray:
    k = cfg.require_k(inst.d)
    beta = multivariate_median_iteration(inst, cfg, rng)
    return np.where(topk_mask(beta, k), beta, 0.0)


def sparse_threshold_iteration(inst: RegressionInstance, cfg: MedianConfig, rng=0,
                               delta: float | None = None) -> np.ndarray:
    """Median iteration with entries below ``delta / (100 sqrt(k))`` zeroed."""
    k = cfg.require_k(inst.d)
    delta = cfg.require_delta() if delta is None else delta
    beta = multivariate_median_iteration(inst, cfg, rng)
    return np.where(np.abs(beta) >= delta / (100.0 * math.sqrt(k)), beta, 0.0)


# --- bootstrapping ----------------------------------------------------------------

def bootstrap_schedule(n: int, delta: float) -> list[int]:
    """Cell sizes: ``ceil(ln delta) - 1`` cells of ``n // (2(t-1))`` then ``n // 2``."""
    if not delta >= 3:
        raise InvalidArgument(f"delta must be >= 3, got {delta}")
    t = math.ceil(math.log(delta))
    return [n // (2 * (t - 1))] * (t - 1) + [n // 2]


def nonspherical_schedule(n: int, delta: float) -> tuple[int, int, list[int]]:
    """``(t1, t2, sizes)`` with t1 cells of ``n // (2 t1)`` and t2 of ``n // (2 t2)``."""
    if not delta >= 3 or n < 2:
        raise InvalidArgument(f"need delta >= 3 and n >= 2, got delta={delta}, n={n}")
    t1 = math.ceil(math.log(delta))
    t2 = math.ceil(math.log(n))
    return t1, t2, [n // (2 * t1)] * t1 + [n // (2 * t2)] * t2


def _partition(n: int, sizes: list[int], rng: RandomSource) -> list[np.ndarray]:
    if min(sizes) < 1:
        raise InvalidArgument(
            f"n={n} is too small for the partition schedule {sizes}; every cell needs a row")
    perm = rng.child(0).stream().permutation(n)
    cells, start = [], 0
    for s in sizes:
        cells.append(perm[start:start + s])
        start += s
    return cells


def _residual(inst: RegressionInstance, cell, running) -> RegressionInstance:
    X = inst.X[cell]
    return RegressionInstance(X, inst.y[cell] - X @ running)


def _run_cells(inst, cells, rng, steps, trace):
    running = np.zeros(inst.d)
    for i, (cell, step) in enumerate(zip(cells, steps), start=1):
        inc = step(_residual(inst, cell, running), rng.child(i))
        running = running + inc
        if trace is not None:
            trace.append({"iteration": i, "cell_size": int(len(cell)),
                          "increment_norm": float(np.linalg.norm(inc))})
    return running


def bootstrap_median(inst: RegressionInstance, cfg: MedianConfig, rng=0, trace=None) -> np.ndarray:
    """Median iterations on disjoint random cells, each fitting the running residual.

    Pass a list as ``trace`` to collect one record per iteration.
    """
    rng = as_source(rng)
    sizes = bootstrap_schedule(inst.n, cfg.require_delta())
    cells = _partition(inst.n, sizes, rng)
    steps = [lambda sub, r: multivariate_median_iteration(sub, cfg, r)] * len(cells)
    return _run_cells(inst, cells, rng, steps, trace)


def sparse_bootstrap(inst: RegressionInstance, cfg: MedianConfig, rng=0, trace=None) -> np.ndarray:
    """Thresholded iterations with a halving bound, then a final top-k iteration."""
    rng = as_source(rng)
    delta = cfg.require_delta()
    cfg.require_k(inst.d)
    sizes = bootstrap_schedule(inst.n, delta)
    cells = _partition(inst.n, sizes, rng)
    steps = [
        (lambda sub, r, dl=delta / 2 ** i: sparse_threshold_iteration(sub, cfg, r, delta=dl))
        for i in range(len(cells) - 1)
    ]
    steps.append(lambda sub, r: sparse_topk_iteration(sub, cfg, r))
    return _run_cells(inst, cells, rng, steps, trace)


# --- non-spherical designs ---------------------------------------------------------

def inverse_sqrt(S) -> np.ndarray:
    """Symmetric inverse square root; a diagonal input stays exactly diagonal."""
    S = np.asarray(S.sigma_hat if isinstance(S, CovarianceEstimate) else S, dtype=float)
    if np.count_nonzero(S - np.diag(np.diag(S))) == 0:
        w = np.diag(S)
        if np.any(w <= EIG_FLOOR):
            raise InvalidArgument("covariance is not positive definite")
        return np.diag(1.0 / np.sqrt(w))
    w, V = np.linalg.eigh((S + S.T) / 2)
    if w[0] <= EIG_FLOOR:
        raise InvalidArgument(f"covariance is not positive definite (min eigenvalue {w[0]:.3g})")
    return (V / np.sqrt(w)) @ V.T


def _whiten(W, X):
    if np.count_nonzero(W - np.diag(np.diag(W))) == 0:
        return X * np.diag(W)
    return X @ W


def _unwhiten(W, beta):
    if np.count_nonzero(W - np.diag(np.diag(W))) == 0:
        return np.diag(W) * beta
    return W @ beta


def nonspherical_iteration(inst: RegressionInstance, cfg: MedianConfig, sigma_hat, rng=0) -> np.ndarray:
    """Whiten the design with ``sigma_hat^{-1/2}``, run one median iteration, map back."""
    W = inverse_sqrt(sigma_hat)
    whitened = RegressionInstance(_whiten(W, inst.X), inst.y)
    return _unwhiten(W, multivariate_median_iteration(whitened, cfg, rng))


def nonspherical_bootstrap(inst: RegressionInstance, cfg: MedianConfig, sigma_hat, rng=0,
                           trace=None) -> np.ndarray:
    rng = as_source(rng)
    W = inverse_sqrt(sigma_hat)  # validates before any work
    _, _, sizes = nonspherical_schedule(inst.n, cfg.require_delta())
    cells = _partition(inst.n, sizes, rng)

    def step(sub, r):
        whitened = RegressionInstance(_whiten(W, sub.X), sub.y)
        return _unwhiten(W, multivariate_median_iteration(whitened, cfg, r))

    return _run_cells(inst, cells, rng, [step] * len(cells), trace)


def estimate_covariance(X) -> CovarianceEstimate:
    """``(2/n) sum_{i <= n/2} x_i x_i^T`` from the first half of the rows.

    Fit only on the second half afterwards so the estimate stays independent
    of the design being whitened.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    half = n // 2
    if half < d:
        raise InvalidArgument(f"need at least {2 * d} rows to estimate a {d}x{d} covariance")
    H = X[:half]
    S = (2.0 / n) * (H.T @ H)
    return CovarianceEstimate((S + S.T) / 2, half)


def estimate_norm_bound(inst: RegressionInstance) -> float:
    """Rough upper bound on ``3(1 + ||beta*||)`` from least squares on the first half."""
    half = inst.n // 2
    X, y = inst.X[:half], inst.y[:half]
    if half < inst.d:
        raise SingularMatrixError("first half has fewer rows than columns")
    try:
        c = scipy.linalg.cho_factor(X.T @ X)
        beta = scipy.linalg.cho_solve(c, X.T @ y)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("first-half design is rank deficient") from None
    resid = np.linalg.norm(y - X @ beta)
    delta = 3.0 * (1.0 + np.linalg.norm(beta) + math.sqrt(inst.d) * resid / half)
    return float(max(delta, 3.0))
