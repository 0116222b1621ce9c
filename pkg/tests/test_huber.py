import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_regress.errors import InvalidArgument, SingularMatrixError, StateError
from robust_regress.huber import (DEFAULT, EstimatorResult, HuberParams, error_certificate,
                                  gradient_norm_at_truth, hessian_lower_bound_eig,
                                  huber_gradient, huber_loss, huber_penalty,
                                  huber_penalty_deriv, local_convexity_probe, minimize_huber,
                                  orthogonalize_columns, top_eigenvalue)
from robust_regress.model import (NoiseSpec, RegressionInstance, ScaledGaussian, UniformInliers,
                                  build_instance, gaussian_design, make_noise, random_beta)
from robust_regress.rng import RandomSource

finite = st.floats(-50, 50, allow_nan=False)


def main_text_penalty(t):
    # independent transcription of the headline penalty
    return 0.5 * t * t if abs(t) <= 2 else 2 * abs(t) - 2


def inst_from(X, y, beta=None, eta=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if beta is None:
        return RegressionInstance(X, np.asarray(y, dtype=float))
    return build_instance(beta, X, eta)


def gaussian_instance(n, d, alpha, seed, noise=None):
    src = RandomSource(seed)
    X = gaussian_design(n, d, src.child(1))
    eta = make_noise(n, noise or NoiseSpec(alpha), src.child(2))
    return build_instance(random_beta(d, 5.0, src.child(3)), X, eta)


# --- penalty ----------------------------------------------------------------

def test_penalty_values():
    assert huber_penalty(0.0) == 0.0
    assert huber_penalty(2.0) == 2.0
    assert huber_penalty(3.0) == 4.0
    assert huber_penalty(-3.0) == huber_penalty(3.0)


def test_derivative_values():
    assert huber_penalty_deriv(0.0) == 0.0
    assert huber_penalty_deriv(5.0) == 2.0
    assert huber_penalty_deriv(-1.0) == -1.0


@given(t=finite)
def test_default_penalty_matches_main_text_form(t):
    assert math.isclose(float(huber_penalty(t)), main_text_penalty(t), rel_tol=1e-15, abs_tol=1e-15)
    assert math.isclose(float(huber_penalty_deriv(t)), math.copysign(min(abs(t), 2.0), t),
                        rel_tol=1e-15, abs_tol=1e-300)


@settings(max_examples=300)
@given(a=finite, b=finite, lam=st.floats(0, 1),
       h=st.floats(0.01, 10), scale=st.floats(0.01, 10))
def test_penalty_convexity(a, b, lam, h, scale):
    p = HuberParams(h=h, scale=scale)
    mid = huber_penalty(lam * a + (1 - lam) * b, p)
    # rounding in the two sides grows with the magnitudes involved
    slack = 1e-12 * (1 + scale * (abs(a) + abs(b)) ** 2 / h)
    assert mid <= lam * huber_penalty(a, p) + (1 - lam) * huber_penalty(b, p) + slack


@settings(max_examples=300)
@given(t=finite, h=st.floats(0.1, 5))
def test_derivative_matches_finite_difference(t, h):
    p = HuberParams(h=h, scale=1.0)
    if abs(abs(t) - h) < 1e-3:
        return
    e = 1e-6
    fd = (huber_penalty(t + e, p) - huber_penalty(t - e, p)) / (2 * e)
    assert abs(fd - huber_penalty_deriv(t, p)) <= 1e-6


def test_penalty_continuous_and_smooth_at_kink():
    for h in (0.5, 2.0, 7.0):
        p = HuberParams(h=h, scale=3.0)
        for s in (1, -1):
            lo, hi = s * h * (1 - 1e-12), s * h * (1 + 1e-12)
            assert abs(huber_penalty(lo, p) - huber_penalty(hi, p)) < 1e-9
            assert abs(huber_penalty_deriv(lo, p) - huber_penalty_deriv(hi, p)) < 1e-9


def test_second_order_lower_bound():
    # Phi(eta+u) - Phi(eta) - Phi'(eta) u >= u^2/2 on |eta| <= 1, |u| <= 1
    s = RandomSource(21).stream()
    eta = 4 * s.uniform(200_000) - 2
    u = 4 * s.uniform(200_000) - 2
    lhs = huber_penalty(eta + u) - huber_penalty(eta) - huber_penalty_deriv(eta) * u
    rhs = 0.5 * u * u * ((np.abs(eta) <= 1) & (np.abs(u) <= 1))
    assert np.all(lhs >= rhs - 1e-12)


def test_params_validation():
    for kw in ({"h": 0}, {"scale": -1}, {"grad_tol": 0}):
        with pytest.raises(InvalidArgument):
            HuberParams(**kw)
    assert DEFAULT.curvature == 1.0


# --- loss and gradient -----------------------------------------------------

def test_loss_examples():
    assert huber_loss(inst_from([[1.0]], [0.0]), [0.0]) == 0.0
    assert huber_loss(inst_from([[1.0]], [0.0]), [1.0]) == 0.5
    assert huber_loss(inst_from([[1.0]], [0.0]), [10.0]) == 18.0


def test_gradient_examples():
    inst = gaussian_instance(20, 3, 1.0, 0)
    np.testing.assert_array_equal(huber_gradient(inst, inst.truth.beta_star), 0.0)
    np.testing.assert_array_equal(huber_gradient(inst_from([[1.0]], [0.0]), [10.0]), [2.0])


def test_shape_mismatch():
    inst = inst_from(np.eye(2), [0, 0])
    with pytest.raises(InvalidArgument):
        huber_loss(inst, [1.0])
    with pytest.raises(InvalidArgument):
        huber_gradient(inst, [1.0, 2.0, 3.0])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), h=st.floats(0.5, 4), scale=st.floats(0.5, 4))
def test_gradient_matches_finite_difference(seed, h, scale):
    # moderate outliers keep the loss small enough for a 1e-6 difference step
    noise = NoiseSpec(0.5, ScaledGaussian(10.0), UniformInliers())
    inst = gaussian_instance(40, 4, 0.5, seed, noise)
    p = HuberParams(h=h, scale=scale)
    beta = inst.truth.beta_star + RandomSource(seed, 1).stream().normal(4)
    g = huber_gradient(inst, beta, p)
    e = 1e-6
    fd = np.array([(huber_loss(inst, beta + e * ei, p) - huber_loss(inst, beta - e * ei, p)) / (2 * e)
                   for ei in np.eye(4)])
    assert np.linalg.norm(fd - g) <= 1e-6 * (1 + np.linalg.norm(g))


# --- minimizer --------------------------------------------------------------

def test_identity_design_recovers_y():
    y = np.array([0.3, -0.7, 1.2])
    res = minimize_huber(inst_from(np.eye(3), y))
    np.testing.assert_allclose(res.beta_hat, y, atol=1e-7)
    assert res.final_loss < 1e-14
    assert res.converged


def test_zero_noise_recovers_truth():
    inst = gaussian_instance(200, 5, 1.0, 3)
    res = minimize_huber(inst)
    assert res.converged
    np.testing.assert_allclose(res.beta_hat, inst.truth.beta_star, atol=1e-6)


def test_zero_design_is_rejected():
    with pytest.raises(InvalidArgument):
        minimize_huber(inst_from(np.zeros((3, 2)), [1, 2, 3]))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32), alpha=st.floats(0.3, 1.0))
def test_loss_sequence_is_monotone(seed, alpha):
    inst = gaussian_instance(300, 3, alpha, seed)
    hist = []
    res = minimize_huber(inst, history=hist)
    assert np.all(np.diff(hist) <= 1e-12 * np.abs(hist[:-1]))
    assert len(hist) == res.iterations + 1
    if res.converged:
        assert res.final_grad_norm <= DEFAULT.grad_tol


def test_nonconvergence_is_reported():
    inst = gaussian_instance(300, 3, 0.5, 0)
    res = minimize_huber(inst, HuberParams(max_iters=3))
    assert not res.converged and res.iterations == 3


def test_argmin_invariant_to_scale():
    inst = gaussian_instance(500, 4, 0.4, 5)
    a = minimize_huber(inst, HuberParams(scale=1.0, grad_tol=1e-10)).beta_hat
    b = minimize_huber(inst, HuberParams(scale=7.0, grad_tol=1e-10)).beta_hat
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_warm_start():
    inst = gaussian_instance(300, 3, 0.5, 2)
    cold = minimize_huber(inst)
    warm = minimize_huber(inst, beta0=cold.beta_hat)
    assert warm.iterations == 0
    np.testing.assert_array_equal(warm.beta_hat, cold.beta_hat)


def test_result_json():
    res = EstimatorResult(np.array([1.0, 2.0]), 3, 1e-9, 0.5, True)
    assert res.to_dict() == {"beta_hat": [1.0, 2.0], "iterations": 3,
                             "final_grad_norm": 1e-9, "final_loss": 0.5, "converged": True}


def test_top_eigenvalue_matches_eigh():
    X = gaussian_design(50, 6, 4)
    A = X.T @ X
    assert math.isclose(top_eigenvalue(A), np.linalg.eigvalsh(A)[-1], rel_tol=1e-8)
    assert top_eigenvalue(np.zeros((3, 3))) == 0.0
    assert top_eigenvalue(np.diag([0.0, 0.0, 4.0])) == 4.0


# --- diagnostics ------------------------------------------------------------

def test_gradient_at_truth_examples():
    assert gradient_norm_at_truth(gaussian_instance(30, 2, 1.0, 0)) == 0.0
    assert gradient_norm_at_truth(build_instance([0.0], [[1.0]], [3.0])) == 2.0
    with pytest.raises(StateError):
        gradient_norm_at_truth(inst_from([[1.0]], [0.0]))


def test_hessian_bound_examples():
    inst = gaussian_instance(100, 3, 1.0, 1)
    X = inst.X
    assert math.isclose(hessian_lower_bound_eig(inst, np.zeros(3)),
                        np.linalg.eigvalsh(X.T @ X / 100)[0], rel_tol=1e-12)
    none = build_instance(np.zeros(3), X, np.full(100, 5.0))
    assert hessian_lower_bound_eig(none, np.zeros(3)) == 0.0


def test_hessian_bound_gaussian_frequency():
    alpha, hits = 0.3, 0
    for seed in range(20):
        inst = gaussian_instance(5000, 5, alpha, seed)
        u = RandomSource(seed, 9).stream().normal(5)
        u *= (1 / 6) / np.linalg.norm(u)
        hits += hessian_lower_bound_eig(inst, u) >= 0.5 * alpha
    assert hits >= 19


def test_probe_exact_quadratic():
    n = 400
    Xo, _ = orthogonalize_columns(gaussian_design(n, 3, 7))
    eta = 0.5 * (2 * RandomSource(8).stream().uniform(n) - 1)
    inst = build_instance(np.array([1.0, -2.0, 0.5]), Xo, eta)
    # |x_i . u| <= ||x_i|| / 6 stays small enough that every residual is quadratic
    assert np.max(np.linalg.norm(Xo, axis=1)) / 6 + 0.5 < 2
    out = local_convexity_probe(inst, radius=1 / 6, samples=200, rng=1)
    np.testing.assert_allclose(out["ratios"], 1.0, atol=1e-6)


def test_probe_identity_design():
    inst = build_instance(np.zeros(4), np.eye(4), np.zeros(4))
    out = local_convexity_probe(inst, radius=0.1, samples=50, rng=2)
    assert abs(out["min_ratio"] - 0.25) < 1e-9  # (1/n) * I with n = 4
    n = 100
    inst = build_instance(np.zeros(2), math.sqrt(n / 2) * np.vstack([np.eye(2)] + [np.zeros((n - 2, 2))]),
                          np.zeros(n))
    assert abs(local_convexity_probe(inst, radius=0.01, samples=20)["min_ratio"] - 0.5) < 1e-9


def test_probe_gaussian_design():
    alpha = 0.5
    inst = gaussian_instance(20_000, 5, alpha, 11)
    out = local_convexity_probe(inst, samples=200, rng=3)
    assert out["min_ratio"] >= 0.5 * alpha * 0.5


def test_probe_validation():
    with pytest.raises(InvalidArgument):
        local_convexity_probe(gaussian_instance(10, 1, 1.0, 0), radius=0.0)


def test_certificate_examples():
    assert error_certificate(0.0, 1.0, 1.0) == 0.0
    assert error_certificate(0.1, 1.0, 1.0) == 0.2
    assert error_certificate(0.6, 1.0, 1.0) is None
    assert error_certificate(0.5, 1.0, 1.0) is None
    with pytest.raises(InvalidArgument):
        error_certificate(0.1, 0.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), kappa_scale=st.floats(0.2, 3.0))
def test_certificate_sound_on_quadratics(seed, kappa_scale):
    # small noise keeps every residual in the quadratic zone, where f is
    # an exact quadratic with curvature kappa = lambda_min(X^T X / n)
    n, d = 300, 3
    src = RandomSource(seed)
    X = gaussian_design(n, d, src.child(0)) * np.array([1.0, kappa_scale, 1.5])
    eta = 0.05 * src.child(1).stream().normal(n)
    inst = build_instance(np.array([0.5, -1.0, 2.0]), X, eta)
    kappa = np.linalg.eigvalsh(X.T @ X / n)[0]
    g = gradient_norm_at_truth(inst)
    res = minimize_huber(inst, HuberParams(grad_tol=1e-12))
    r = inst.X @ res.beta_hat - inst.y
    assert np.max(np.abs(r)) <= 2
    cert = error_certificate(g, kappa, 1e6)
    assert cert is not None
    assert np.linalg.norm(res.beta_hat - inst.truth.beta_star) <= cert * (1 + 1e-9)


# --- orthogonalization ------------------------------------------------------

def test_orthogonalize_fixed_point():
    n = 16
    Q, _ = np.linalg.qr(gaussian_design(n, 3, 0))
    X = math.sqrt(n) * Q * np.sign(np.diag(np.linalg.qr(Q)[1]))
    Xo, T = orthogonalize_columns(X)
    np.testing.assert_allclose(Xo, X, atol=1e-12)
    np.testing.assert_allclose(T, np.eye(3), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(5, 60), d=st.integers(1, 5))
def test_orthogonalize_gram(seed, n, d):
    X = gaussian_design(n, d, seed)
    Xo, T = orthogonalize_columns(X)
    np.testing.assert_allclose(Xo.T @ Xo / n, np.eye(d), atol=1e-10)
    np.testing.assert_allclose(X @ T, Xo, atol=1e-10)


def test_orthogonalize_single_column():
    Xo, T = orthogonalize_columns(np.array([[2.0], [0.0]]))
    np.testing.assert_allclose(Xo[:, 0], [math.sqrt(2), 0.0])
    assert math.isclose(float(Xo[:, 0] @ Xo[:, 0]), 2.0)


def test_orthogonalize_rank_deficient():
    X = gaussian_design(10, 2, 0)
    with pytest.raises(SingularMatrixError):
        orthogonalize_columns(np.column_stack([X, X[:, 0] + X[:, 1]]))
    with pytest.raises(SingularMatrixError):
        orthogonalize_columns(np.ones((2, 3)))
