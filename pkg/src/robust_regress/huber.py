"""Huber penalty, loss, gradient descent minimizer and curvature diagnostics.

The penalty family is

    phi(t) = scale * (t**2 / (2h))   if |t| <= h
             scale * (|t| - h/2)     otherwise

With the defaults ``h=2, scale=2`` this is ``t**2/2`` inside ``[-2, 2]``
and ``2|t| - 2`` outside.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidArgument, SingularMatrixError
from .model import RegressionInstance
from .rng import as_source


@dataclass(frozen=True)
class HuberParams:
    h: float = 2.0
    scale: float = 2.0
    grad_tol: float = 1e-8
    max_iters: int = 1_000_000

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidArgument("h must be positive")
        if not self.scale > 0:
            raise InvalidArgument("scale must be positive")
        if not self.grad_tol > 0:
            raise InvalidArgument("grad_tol must be positive")
        if self.max_iters < 0:
            raise InvalidArgument("max_iters must be non-negative")

    @property
    def curvature(self) -> float:
        """Second derivative of the penalty inside the quadratic zone."""
        return self.scale / self.h


DEFAULT = HuberParams()


@dataclass
class EstimatorResult:
    beta_hat: np.ndarray
    iterations: int
    final_grad_norm: float
    final_loss: float
    converged: bool

    def to_dict(self) -> dict:
        out = asdict(self)
        out["beta_hat"] = [float(b) for b in self.beta_hat]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def huber_penalty(t, p: HuberParams = DEFAULT):
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    out = np.where(a <= p.h, t * t / (2.0 * p.h), a - p.h / 2.0)
    return p.scale * out


def huber_penalty_deriv(t, p: HuberParams = DEFAULT):
    t = np.asarray(t, dtype=float)
    return p.scale * np.where(np.abs(t) <= p.h, t / p.h, np.sign(t))


def _check_beta(inst: RegressionInstance, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (inst.d,):
        raise InvalidArgument(f"beta must have {inst.d} entries, got shape {beta.shape}")
    return beta


def huber_loss(inst: RegressionInstance, beta, p: HuberParams = DEFAULT) -> float:
    beta = _check_beta(inst, beta)
    return float(np.mean(huber_penalty(inst.X @ beta - inst.y, p)))


def huber_gradient(inst: RegressionInstance, beta, p: HuberParams = DEFAULT) -> np.ndarray:
    beta = _check_beta(inst, beta)
    r = inst.X @ beta - inst.y
    return inst.X.T @ huber_penalty_deriv(r, p) / inst.n


def top_eigenvalue(A: np.ndarray, iters: int = 200, tol: float = 1e-10) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    d = A.shape[0]
    v = np.ones(d) / np.sqrt(d)
    lam = 0.0
    for _ in range(iters):
        w = A @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            # v landed in the kernel; restart from a basis vector
            w = A[:, np.argmax(np.abs(np.diag(A)))]
            nrm = np.linalg.norm(w)
            if nrm == 0.0:
                return 0.0
        v = w / nrm
        new = float(v @ A @ v)
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            return new
        lam = new
    return lam


def minimize_huber(inst: RegressionInstance, p: HuberParams = DEFAULT, beta0=None,
                   history: list | None = None) -> EstimatorResult:
    """Fixed-step gradient descent on the Huber loss.

    The step is ``1/L`` with ``L = curvature * lambda_max(X^T X) / n``, the
    Lipschitz constant of the gradient.  Returns the best iterate seen.
    If ``history`` is a list, the loss at every iterate is appended to it.
    """
    X, y, n = inst.X, inst.y, inst.n
    L = p.curvature * top_eigenvalue(X.T @ X / n)
    if not L > 0:
        raise InvalidArgument("design has lambda_max(X^T X) = 0")
    step = 1.0 / L
    beta = np.zeros(inst.d) if beta0 is None else _check_beta(inst, beta0).copy()

    r = X @ beta - y
    loss = float(np.mean(huber_penalty(r, p)))
    grad = X.T @ huber_penalty_deriv(r, p) / n
    gnorm = float(np.linalg.norm(grad))
    best = (loss, beta, gnorm)
    if history is not None:
        history.append(loss)
    it = 0
    while gnorm > p.grad_tol and it < p.max_iters:
        beta = beta - step * grad
        r = X @ beta - y
        loss = float(np.mean(huber_penalty(r, p)))
        grad = X.T @ huber_penalty_deriv(r, p) / n
        gnorm = float(np.linalg.norm(grad))
        it += 1
        if history is not None:
            history.append(loss)
        if loss <= best[0]:
            best = (loss, beta, gnorm)
    # prefer the final iterate when its loss ties the best up to rounding
    if loss <= best[0] + 1e-12 * abs(best[0]):
        best = (loss, beta, gnorm)
    loss, beta, gnorm = best
    return EstimatorResult(beta, it, gnorm, loss, gnorm <= p.grad_tol)


def gradient_norm_at_truth(inst: RegressionInstance, p: HuberParams = DEFAULT) -> float:
    """``||grad f(beta*)||``; bounds assume ``X^T X = n*Id`` (see orthogonalize_columns)."""
    truth = inst.require_truth()
    return float(np.linalg.norm(huber_gradient(inst, truth.beta_star, p)))


def hessian_lower_bound_eig(inst: RegressionInstance, u) -> float:
    """Smallest eigenvalue of ``(1/n) sum [|<x_i,u>|<=1][|eta_i|<=1] x_i x_i^T``."""
    truth = inst.require_truth()
    u = _check_beta(inst, u)
    keep = (np.abs(inst.X @ u) <= 1.0) & (np.abs(truth.eta) <= 1.0)
    Xk = inst.X[keep]
    M = Xk.T @ Xk / inst.n
    return float(np.linalg.eigvalsh(M)[0])


def local_convexity_probe(inst: RegressionInstance, p: HuberParams = DEFAULT,
                          radius: float = 1 / 6, samples: int = 500, rng=0) -> dict:
    """Empirical local strong-convexity constant around ``beta*``.

    Draws ``samples`` directions uniform on the sphere with radii uniform in
    ``(0, radius]`` and returns the smallest second-order ratio
    ``2 [f(b*+u) - f(b*) - <grad f(b*), u>] / ||u||^2``.
    """
    truth = inst.require_truth()
    if not radius > 0:
        raise InvalidArgument("radius must be positive")
    stream = as_source(rng).stream()
    b = truth.beta_star
    f0 = huber_loss(inst, b, p)
    g0 = huber_gradient(inst, b, p)
    ratios = np.empty(samples)
    for s in range(samples):
        u = stream.normal(inst.d)
        r = radius * (1.0 - stream.uniform(1)[0])
        u *= r / np.linalg.norm(u)
        excess = huber_loss(inst, b + u, p) - f0 - g0 @ u
        ratios[s] = 2.0 * excess / (u @ u)
    return {"min_ratio": float(ratios.min()), "ratios": ratios}


def error_certificate(grad_norm: float, kappa: float, radius: float) -> float | None:
    """Distance bound ``2*||grad||/kappa`` when it is valid, else ``None``."""
    if not kappa > 0 or not radius > 0:
        raise InvalidArgument("kappa and radius must be positive")
    if grad_norm < 0.5 * radius * kappa:
        return 2.0 * grad_norm / kappa
    return None


def orthogonalize_columns(X) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Xo, T)`` with ``Xo = X @ T`` and ``Xo^T Xo = n * Id``.

    QR with the sign of ``R``'s diagonal fixed positive, so a design that is
    already orthogonal with squared column norms ``n`` maps to itself.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < d:
        raise SingularMatrixError(f"{n} rows cannot span {d} columns")
    Q, R = np.linalg.qr(X)
    diag = np.diag(R)
    if np.any(np.abs(diag) <= 1e-12 * max(np.max(np.abs(diag)), 1e-300)):
        raise SingularMatrixError("design is rank deficient")
    sgn = np.sign(diag)
    Q = Q * sgn
    R = R * sgn[:, None]
    root = np.sqrt(n)
    T = np.linalg.solve(R, np.eye(d)) * root
    return Q * root, T
