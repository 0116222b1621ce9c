"""Regression instances, oblivious noise, and the randomized preprocessing steps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgument, StateError
from .rng import RandomSource, as_source


@dataclass(frozen=True)
class Truth:
    beta_star: np.ndarray
    eta: np.ndarray


@dataclass(frozen=True)
class RegressionInstance:
    """Design ``X`` (n x d), responses ``y`` and optional ground truth.

    When ``truth`` is present, ``y == X @ beta_star + eta`` up to the
    arithmetic used to build it.
    """

    X: np.ndarray
    y: np.ndarray
    truth: Truth | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidArgument(f"X must be a non-empty 2-d array, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise InvalidArgument(f"y must have {X.shape[0]} entries, got shape {y.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.truth is not None:
            b = np.asarray(self.truth.beta_star, dtype=float)
            e = np.asarray(self.truth.eta, dtype=float)
            if b.shape != (X.shape[1],) or e.shape != (X.shape[0],):
                raise InvalidArgument("truth shapes do not match the design")
            scale = np.abs(X) @ np.abs(b) + np.abs(e) + np.abs(y)
            if np.any(np.abs(y - (X @ b + e)) > 1e-9 * np.maximum(scale, 1.0)):
                raise InvalidArgument("y differs from X beta* + eta")
            object.__setattr__(self, "truth", Truth(b, e))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def require_truth(self) -> Truth:
        if self.truth is None:
            raise StateError("instance carries no ground truth")
        return self.truth

    def rows(self, idx) -> "RegressionInstance":
        """Sub-instance on the given row indices (truth restricted alongside)."""
        idx = np.asarray(idx)
        truth = None
        if self.truth is not None:
            truth = Truth(self.truth.beta_star, self.truth.eta[idx])
        return RegressionInstance(self.X[idx], self.y[idx], truth)


# --- noise -----------------------------------------------------------------

@dataclass(frozen=True)
class ConstantSpike:
    magnitude: float


@dataclass(frozen=True)
class ScaledGaussian:
    sigma: float


@dataclass(frozen=True)
class HeavyTail:
    pareto_shape: float


@dataclass(frozen=True)
class ZeroInliers:
    pass


@dataclass(frozen=True)
class UniformInliers:
    pass


@dataclass(frozen=True)
class GaussianInliers:
    sigma: float = 0.5

    def __post_init__(self):
        if not 0 < self.sigma <= 0.5:
            raise InvalidArgument("inlier Gaussian sigma must lie in (0, 1/2]")


@dataclass(frozen=True)
class NoiseSpec:
    """Oblivious noise: ``ceil(alpha*n)`` inliers of magnitude <= 1, the rest outliers.

    ``placement`` is ``"random"`` (inlier slots drawn without replacement)
    or ``"prefix"`` (the first slots are the inliers).
    """

    alpha: float
    pattern: ConstantSpike | ScaledGaussian | HeavyTail = field(
        default_factory=lambda: ConstantSpike(1e6))
    inlier_law: ZeroInliers | UniformInliers | GaussianInliers = field(
        default_factory=ZeroInliers)
    placement: str = "random"

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise InvalidArgument(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.placement not in ("random", "prefix"):
            raise InvalidArgument(f"unknown placement {self.placement!r}")

    def inlier_count(self, n: int) -> int:
        # round first so that e.g. 0.3 * 100000 is not bumped to 30001
        return min(n, math.ceil(round(self.alpha * n, 9)))


def parse_noise(text: str, alpha: float, **kw) -> NoiseSpec:
    """Parse ``spike:MAG``, ``gauss:SIGMA`` or ``pareto:SHAPE``."""
    kind, sep, value = text.partition(":")
    if not sep:
        raise InvalidArgument(f"noise must look like KIND:VALUE, got {text!r}")
    try:
        v = float(value)
    except ValueError:
        raise InvalidArgument(f"bad noise parameter {value!r}") from None
    if kind == "spike":
        pattern = ConstantSpike(v)
    elif kind == "gauss":
        pattern = ScaledGaussian(v)
    elif kind == "pareto":
        if v <= 0:
            raise InvalidArgument("pareto shape must be positive")
        pattern = HeavyTail(v)
    else:
        raise InvalidArgument(f"unknown noise kind {kind!r}")
    return NoiseSpec(alpha, pattern, **kw)


def make_noise(n: int, spec: NoiseSpec, rng, *, return_inliers: bool = False):
    """Draw an oblivious noise vector of length ``n``.

    Inlier slots carry ``spec.inlier_law`` draws clipped to [-1, 1]; the
    remaining slots carry the outlier pattern.  Inlier values are drawn in
    ascending slot order, then outlier values in ascending slot order.
    """
    if n < 1:
        raise InvalidArgument("n must be positive")
    rng = as_source(rng)
    n_in = spec.inlier_count(n)
    if spec.placement == "prefix":
        slots = np.arange(n)
    else:
        slots = rng.child(0).stream().permutation(n)
    inliers = np.sort(slots[:n_in])
    outliers = np.sort(slots[n_in:])

    eta = np.empty(n)
    s_in = rng.child(1).stream()
    law = spec.inlier_law
    if isinstance(law, ZeroInliers):
        vals = np.zeros(n_in)
    elif isinstance(law, UniformInliers):
        vals = 2.0 * s_in.uniform(n_in) - 1.0
    else:
        vals = law.sigma * s_in.normal(n_in)
    eta[inliers] = np.clip(vals, -1.0, 1.0)

    s_out = rng.child(2).stream()
    m = outliers.size
    pat = spec.pattern
    if isinstance(pat, ConstantSpike):
        vals = pat.magnitude * s_out.rademacher(m)
    elif isinstance(pat, ScaledGaussian):
        vals = pat.sigma * s_out.normal(m)
    else:
        signs = s_out.rademacher(m)
        vals = signs * (1.0 - s_out.uniform(m)) ** (-1.0 / pat.pareto_shape)
    eta[outliers] = vals
    if return_inliers:
        return eta, inliers
    return eta


# --- designs and instances ---------------------------------------------------

def gaussian_design(n: int, d: int, rng) -> np.ndarray:
    """``n x d`` matrix of iid standard normals, filled row by row."""
    if n < 1 or d < 1:
        raise InvalidArgument(f"design dimensions must be positive, got ({n}, {d})")
    return as_source(rng).stream().normal((n, d))


def random_beta(d: int, norm: float, rng, sparsity: int | None = None) -> np.ndarray:
    """Parameter with uniformly random direction and the given norm.

    With ``sparsity=k`` the support is ``k`` coordinates chosen uniformly.
    """
    rng = as_source(rng)
    k = d if sparsity is None else sparsity
    if not 1 <= k <= d:
        raise InvalidArgument(f"sparsity must lie in [1, {d}]")
    g = rng.child(0).stream().normal(k)
    g *= norm / np.linalg.norm(g)
    beta = np.zeros(d)
    if k == d:
        beta[:] = g
    else:
        support = np.sort(rng.child(1).stream().permutation(d)[:k])
        beta[support] = g
    return beta


def build_instance(beta_star, X, eta) -> RegressionInstance:
    X = np.asarray(X, dtype=float)
    beta_star = np.asarray(beta_star, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if X.ndim != 2 or beta_star.shape != (X.shape[1],) or eta.shape != (X.shape[0],):
        raise InvalidArgument(
            f"shape mismatch: X {X.shape}, beta_star {beta_star.shape}, eta {eta.shape}")
    return RegressionInstance(X, X @ beta_star + eta, Truth(beta_star, eta))


def preprocess_symmetrize(inst: RegressionInstance, rng, *, signs=None, shifts=None):
    """Random sign flip plus standard normal shift of every row.

    ``y'_i = s_i*y_i + w_i`` and ``X'_i = s_i*X_i``.  Signs are drawn first,
    then the shifts, from one stream.  ``signs``/``shifts`` override the
    draws (used to pin degenerate cases in tests).
    """
    n = inst.n
    if signs is None or shifts is None:
        stream = as_source(rng).stream()
        drawn_signs = stream.rademacher(n)
        drawn_shifts = stream.normal(n)
        signs = drawn_signs if signs is None else signs
        shifts = drawn_shifts if shifts is None else shifts
    signs = np.asarray(signs, dtype=float)
    shifts = np.asarray(shifts, dtype=float)
    X = inst.X * signs[:, None]
    y = signs * inst.y + shifts
    truth = None
    if inst.truth is not None:
        # equals signs*eta + shifts up to rounding; defined this way so that
        # y' - X' beta* reproduces it exactly
        eta = y - X @ inst.truth.beta_star
        truth = Truth(inst.truth.beta_star, eta)
    return RegressionInstance(X, y, truth)


def resample_instance(inst: RegressionInstance, rng, *, indices=None, signs=None):
    """Rows drawn uniformly with replacement, each multiplied by a random sign."""
    n = inst.n
    stream = as_source(rng).stream() if indices is None or signs is None else None
    if indices is None:
        indices = stream.integers(n, n)
    if signs is None:
        signs = stream.rademacher(n)
    indices = np.asarray(indices)
    signs = np.asarray(signs, dtype=float)
    X = inst.X[indices] * signs[:, None]
    y = inst.y[indices] * signs
    truth = None
    if inst.truth is not None:
        truth = Truth(inst.truth.beta_star, inst.truth.eta[indices] * signs)
    return RegressionInstance(X, y, truth)


def error_metrics(beta_hat, inst: RegressionInstance) -> dict:
    """Squared parameter error and mean squared prediction error."""
    truth = inst.require_truth()
    diff = np.asarray(beta_hat, dtype=float) - truth.beta_star
    return {
        "err_param": float(diff @ diff),
        "err_pred": float(np.sum((inst.X @ diff) ** 2) / inst.n),
    }


def with_y(inst: RegressionInstance, y) -> RegressionInstance:
    return replace(inst, y=np.asarray(y, dtype=float), truth=None)
