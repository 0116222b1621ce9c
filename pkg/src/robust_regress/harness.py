"""Monte-Carlo sweeps over sample size for the estimators in this package.

Each (grid point, trial) pair gets its own seed hashed from the master
seed, so any single trial can be reproduced in isolation and the record
stream does not depend on execution order or thread count.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import huber, median
from .errors import InvalidArgument, RobustRegressError
from .model import (GaussianInliers, NoiseSpec, RegressionInstance, UniformInliers,
                    ZeroInliers, build_instance, error_metrics, gaussian_design,
                    make_noise, parse_noise, random_beta)
from .rng import RandomSource, trial_seed

log = logging.getLogger(__name__)

ESTIMATORS = ("huber", "median_iter", "median_bootstrap", "sparse_bootstrap",
              "nonspherical_bootstrap", "ols_baseline")
METRICS = ("err_param", "err_pred")
CSV_HEADER = "n,d,alpha,estimator,metric,mean,median,q05,q95"
THREADS_ENV = "ROBUST_REGRESS_THREADS"


@dataclass(frozen=True)
class ExperimentConfig:
    grid: tuple[int, ...]
    d: int
    alpha: float
    estimator: str = "huber"
    trials: int = 1
    master_seed: int = 0
    noise: str = "spike:1e6"
    inlier_law: str = "zero"
    placement: str = "random"
    orthogonalize: bool = False
    beta_norm: float | str = 5.0
    beta_sparsity: int | None = None
    delta: float | str = "auto"
    design: str = "spherical"
    h: float = 2.0
    scale: float = 2.0
    grad_tol: float = 1e-8
    max_iters: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(int(n) for n in self.grid))
        if not self.grid:
            raise InvalidArgument("grid must contain at least one n")
        if self.trials < 1:
            raise InvalidArgument("trials must be >= 1")
        if self.d < 1 or min(self.grid) < 1:
            raise InvalidArgument("n and d must be positive")
        name, _, _ = self.estimator.partition(":")
        if name not in ESTIMATORS:
            raise InvalidArgument(f"unknown estimator {self.estimator!r}")
        if not 0 <= self.master_seed < 2 ** 64:
            raise InvalidArgument("master_seed must be a 64-bit unsigned integer")
        self.noise_spec()  # validate eagerly
        self.huber_params()
        self.sparsity
        if isinstance(self.delta, str) and self.delta not in ("auto", "oracle"):
            raise InvalidArgument(f"delta must be a number, 'auto' or 'oracle', got {self.delta!r}")
        if self.beta_norm == "worst" and isinstance(self.delta, str):
            raise InvalidArgument("beta_norm=worst needs a numeric delta")

    @property
    def estimator_name(self) -> str:
        return self.estimator.partition(":")[0]

    @property
    def sparsity(self) -> int | None:
        name, _, k = self.estimator.partition(":")
        if name != "sparse_bootstrap":
            return None
        if not k.isdigit() or int(k) < 1:
            raise InvalidArgument("sparse_bootstrap needs a sparsity, e.g. sparse_bootstrap:5")
        return int(k)

    def noise_spec(self) -> NoiseSpec:
        law = self.inlier_law
        if law == "zero":
            inl = ZeroInliers()
        elif law == "uniform":
            inl = UniformInliers()
        elif law.startswith("gauss:"):
            inl = GaussianInliers(float(law.split(":", 1)[1]))
        else:
            raise InvalidArgument(f"unknown inlier law {law!r}")
        return parse_noise(self.noise, self.alpha, inlier_law=inl, placement=self.placement)

    def huber_params(self) -> huber.HuberParams:
        return huber.HuberParams(self.h, self.scale, self.grad_tol, self.max_iters)

    def resolved_beta_norm(self) -> float:
        if self.beta_norm == "worst":
            # largest norm the bound 3(1 + ||beta*||) <= delta allows
            return float(self.delta) / 3.0 - 1.0
        return float(self.beta_norm)


@dataclass
class TrialRecord:
    n: int
    d: int
    alpha: float
    estimator: str
    trial: int
    err_param: float | None
    err_pred: float | None
    runtime_ms: float
    converged: bool
    seed: int

    def to_json(self, include_timing: bool = False) -> str:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        if not include_timing:
            del out["runtime_ms"]
        return json.dumps(out)


def _design(cfg: ExperimentConfig, n: int, rng: RandomSource) -> np.ndarray:
    G = gaussian_design(n, cfg.d, rng)
    if cfg.design == "spherical":
        return G
    kind, _, value = cfg.design.partition(":")
    if kind != "ar1":
        raise InvalidArgument(f"unknown design {cfg.design!r}")
    rho = float(value)
    idx = np.arange(cfg.d)
    cov = rho ** np.abs(idx[:, None] - idx[None, :])
    return G @ np.linalg.cholesky(cov).T


def make_trial_instance(cfg: ExperimentConfig, n: int, seed: int) -> RegressionInstance:
    src = RandomSource(seed)
    X = _design(cfg, n, src.child(1))
    if cfg.orthogonalize:
        X, _ = huber.orthogonalize_columns(X)
    eta = make_noise(n, cfg.noise_spec(), src.child(2))
    beta = random_beta(cfg.d, cfg.resolved_beta_norm(), src.child(3), cfg.beta_sparsity)
    return build_instance(beta, X, eta)


def _delta(cfg: ExperimentConfig, inst: RegressionInstance) -> float:
    if cfg.delta == "auto":
        return median.estimate_norm_bound(inst)
    if cfg.delta == "oracle":
        return 3.0 * (1.0 + float(np.linalg.norm(inst.truth.beta_star)))
    return float(cfg.delta)


def fit(cfg: ExperimentConfig, inst: RegressionInstance, rng: RandomSource) -> tuple[np.ndarray, bool]:
    """Run the configured estimator; return ``(beta_hat, converged)``."""
    name = cfg.estimator_name
    if name == "huber":
        res = huber.minimize_huber(inst, cfg.huber_params())
        return res.beta_hat, res.converged
    if name == "ols_baseline":
        return np.linalg.lstsq(inst.X, inst.y, rcond=None)[0], True
    if name == "median_iter":
        return median.multivariate_median_iteration(inst, median.MedianConfig(), rng), True
    mcfg = median.MedianConfig(delta_bound=_delta(cfg, inst), sparsity_k=cfg.sparsity)
    if name == "median_bootstrap":
        return median.bootstrap_median(inst, mcfg, rng), True
    if name == "sparse_bootstrap":
        return median.sparse_bootstrap(inst, mcfg, rng), True
    # covariance from the first half, estimation on the second
    half = inst.n // 2
    cov = median.estimate_covariance(inst.X)
    second = inst.rows(np.arange(half, inst.n))
    return median.nonspherical_bootstrap(second, mcfg, cov, rng), True


def run_one(cfg: ExperimentConfig, grid_index: int, trial: int) -> TrialRecord:
    n = cfg.grid[grid_index]
    seed = trial_seed(cfg.master_seed, grid_index, trial)
    start = time.perf_counter()
    err_param = err_pred = None
    converged = False
    try:
        inst = make_trial_instance(cfg, n, seed)
        beta_hat, converged = fit(cfg, inst, RandomSource(seed).child(4))
        errs = error_metrics(beta_hat, inst)
        err_param, err_pred = errs["err_param"], errs["err_pred"]
    except (RobustRegressError, np.linalg.LinAlgError) as exc:
        log.warning("trial n=%d #%d failed: %s", n, trial, exc)
        converged = False
    runtime = (time.perf_counter() - start) * 1e3
    return TrialRecord(n, cfg.d, cfg.alpha, cfg.estimator, trial, err_param, err_pred,
                       runtime, bool(converged), seed)


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise InvalidArgument(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if value < 1:
            raise InvalidArgument(f"{THREADS_ENV} must be >= 1")
        return value
    return os.cpu_count() or 1


def run_trials(cfg: ExperimentConfig, threads: int | None = None) -> list[TrialRecord]:
    """All records in (grid point, trial) order, whatever the thread count."""
    tasks = [(g, t) for g in range(len(cfg.grid)) for t in range(cfg.trials)]
    threads = thread_count() if threads is None else threads
    if threads <= 1:
        return [run_one(cfg, g, t) for g, t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda gt: run_one(cfg, *gt), tasks))


def lower_quantile(sorted_values, q: float) -> float:
    return float(sorted_values[int(math.floor(q * (len(sorted_values) - 1)))])


def aggregate(records) -> list[dict]:
    """Per grid point and metric: mean, lower median and lower 5%/95% quantiles.

    Failed trials (metric ``None``) are left out.
    """
    groups: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.n, r.d, r.alpha, r.estimator), []).append(r)
    if not groups:
        raise InvalidArgument("no records to aggregate")
    rows = []
    for (n, d, alpha, est), recs in groups.items():
        for metric in METRICS:
            vals = np.array([getattr(r, metric) for r in recs if getattr(r, metric) is not None])
            if vals.size == 0:
                raise InvalidArgument(f"empty group for n={n}, {est}, {metric}")
            s = np.sort(vals)
            rows.append({
                "n": n, "d": d, "alpha": alpha, "estimator": est, "metric": metric,
                "mean": float(np.mean(vals)),
                "median": median.select_median(vals),
                "q05": lower_quantile(s, 0.05),
                "q95": lower_quantile(s, 0.95),
            })
    return rows


def aggregate_csv(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k])
                              for k in CSV_HEADER.split(",")))
    return "\n".join(lines) + "\n"


def scaling_fit(points) -> float:
    """Least-squares slope of ``log(err)`` against ``log(n)``."""
    pts = [(float(n), float(e)) for n, e in points]
    if len(pts) < 3:
        raise InvalidArgument("scaling_fit needs at least 3 points")
    if any(n <= 0 or e <= 0 for n, e in pts):
        raise InvalidArgument("scaling_fit needs positive n and errors")
    x = np.log([n for n, _ in pts])
    y = np.log([e for _, e in pts])
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


# --- config files -----------------------------------------------------------------

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str):
    if key == "grid":
        return tuple(int(float(x)) for x in raw.replace(" ", "").split(",") if x)
    if key in ("d", "trials", "master_seed", "max_iters"):
        return int(raw)
    if key == "beta_sparsity":
        return None if raw.lower() in ("", "none") else int(raw)
    if key in ("alpha", "h", "scale", "grad_tol"):
        return float(raw)
    if key == "orthogonalize":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if key in ("delta", "beta_norm"):
        try:
            return float(raw)
        except ValueError:
            return raw
    return raw


def parse_config(text: str) -> ExperimentConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise InvalidArgument(f"config line {lineno}: expected key = value")
        if key not in _FIELD_TYPES:
            raise InvalidArgument(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise InvalidArgument(f"config line {lineno}: bad value for {key}: {exc}") from None
    missing = [k for k in ("grid", "d", "alpha") if k not in values]
    if missing:
        raise InvalidArgument(f"config is missing {', '.join(missing)}")
    return ExperimentConfig(**values)
