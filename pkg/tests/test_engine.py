import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import is_spd, random_linear_problem, random_spd, seeds
from kalman_inversion import forward_models as fm
from kalman_inversion.engine import (
    InverseProblem,
    InversionPolicy,
    check_stationarity,
    exki_step,
    predict,
    run_inversion,
    uki_step,
)
from kalman_inversion.errors import (
    DivergenceDetected,
    DomainError,
    ForwardModelFailure,
    JacobianUnavailable,
    NonPositiveDefinite,
)
from kalman_inversion.gaussian import GaussianBelief


def closed_form_precision(G, sigma, C0, n):
    """C_n^-1 for a linear map under Sigma_omega = C_n, Sigma_nu = 2 Sigma_eta."""
    H = G.T @ np.linalg.solve(sigma, G)
    return (1 - 2.0 ** -n) * H + 2.0 ** -n * np.linalg.inv(C0)


def scalar_linear(g=1.0, y=1.0, s=0.01):
    return fm.linear_problem(np.array([[g]]), s, [y])


class TestPredict:
    def test_adaptive_doubles(self):
        b = GaussianBelief([1.0], [[0.3]])
        p = predict(b, InversionPolicy(initial=b))
        assert p.cov[0, 0] == 0.6
        assert p.mean[0] == 1.0

    def test_fixed_adds_initial(self):
        init = GaussianBelief([0.0], [[1.0]])
        p = predict(GaussianBelief([0.5], [[0.1]]), InversionPolicy(initial=init, omega_policy="fixed"))
        assert p.cov[0, 0] == pytest.approx(1.1)


def test_scalar_linear_step():
    b = GaussianBelief([0.0], [[1.0]])
    post, rec = uki_step(b, scalar_linear(), InversionPolicy(initial=b))
    assert post.mean[0] == pytest.approx(0.990099, abs=1e-6)
    assert post.cov[0, 0] == pytest.approx(0.019802, abs=1e-6)
    assert rec.forward_evaluations == 3


def test_constant_map_leaves_mean_and_doubles_cov():
    prob = InverseProblem(forward=lambda t: np.array([3.0]), y=[1.0], sigma_eta=0.01)
    b = GaussianBelief([0.7], [[0.2]])
    post, _ = uki_step(b, prob, InversionPolicy(initial=b))
    assert post.mean[0] == pytest.approx(0.7)
    assert post.cov[0, 0] == pytest.approx(0.4)


@settings(max_examples=20, deadline=None)
@given(seed=seeds)
def test_closed_form_precision_trajectory(seed):
    rng = np.random.default_rng(seed)
    G, sigma, y = random_linear_problem(rng)
    n = G.shape[1]
    C0 = random_spd(rng, n)
    policy = InversionPolicy(initial=GaussianBelief(rng.standard_normal(n), C0), max_iterations=20)
    for rec in run_inversion(fm.linear_problem(G, sigma, y), policy):
        P = np.linalg.inv(rec.cov)
        ref = closed_form_precision(G, sigma, C0, rec.iteration)
        assert np.linalg.norm(P - ref) / np.linalg.norm(ref) < 1e-9


@settings(max_examples=20, deadline=None)
@given(seed=seeds)
def test_uki_equals_exki_on_linear(seed):
    rng = np.random.default_rng(seed)
    G, sigma, y = random_linear_problem(rng)
    n = G.shape[1]
    init = GaussianBelief(rng.standard_normal(n), random_spd(rng, n))
    prob = fm.linear_problem(G, sigma, y)
    u = run_inversion(prob, InversionPolicy(initial=init, max_iterations=10))
    e = run_inversion(prob, InversionPolicy(initial=init, algorithm="exki", max_iterations=10))
    for a, b in zip(u, e):
        np.testing.assert_allclose(a.mean, b.mean, atol=1e-9, rtol=1e-9)
        np.testing.assert_allclose(a.cov, b.cov, atol=1e-9, rtol=1e-9)
    assert [r.forward_evaluations for r in u[1:]] == [2 * n + 1] * 10
    assert [r.forward_evaluations for r in e[1:]] == [1] * 10


def test_linear_mean_limit():
    rng = np.random.default_rng(7)
    G, sigma, y = random_linear_problem(rng, n_theta=3, n_y=5)
    # least-squares solution weighted by sigma^-1
    W = np.linalg.inv(sigma)
    m_star = np.linalg.solve(G.T @ W @ G, G.T @ W @ y)
    init = GaussianBelief(np.zeros(3), np.eye(3))
    recs = run_inversion(fm.linear_problem(G, sigma, y), InversionPolicy(initial=init, max_iterations=60))
    np.testing.assert_allclose(recs[-1].mean, m_star, atol=1e-8)


def test_spd_preserved_over_random_runs():
    rng = np.random.default_rng(2024)
    kinds = ["linear", "elliptic2", "exponential"]
    for k in range(50):
        kind = kinds[k % 3]
        if kind == "linear":
            G, sigma, y = random_linear_problem(rng)
            prob = fm.linear_problem(G, sigma, y)
            n = G.shape[1]
        elif kind == "elliptic2":
            prob, n = fm.elliptic2_problem(), 2
        else:
            prob, n = fm.scalar_problem("exponential"), 1
        init = GaussianBelief(rng.standard_normal(n), random_spd(rng, n))
        try:
            records = run_inversion(prob, InversionPolicy(initial=init, max_iterations=15))
        except NonPositiveDefinite as exc:
            records = exc.records
        assert all(is_spd(r.cov) for r in records)


def test_record_zero_and_history_length():
    b = GaussianBelief([0.0], [[1.0]])
    recs = run_inversion(scalar_linear(), InversionPolicy(initial=b, max_iterations=5))
    assert [r.iteration for r in recs] == list(range(6))
    assert recs[0].forward_evaluations == 1
    # Phi at m_0 = 0 with Sigma_nu = 0.02: 0.5 * 1 / 0.02
    assert recs[0].optimization_error == pytest.approx(25.0)


def test_forward_failure_names_point():
    def forward(t):
        if t[0] > 0.5:
            raise DomainError("outside")
        return np.array([t[0]])

    prob = InverseProblem(forward=forward, y=[0.0], sigma_eta=0.01)
    b = GaussianBelief([0.0], [[1.0]])
    with pytest.raises(ForwardModelFailure) as info:
        uki_step(b, prob, InversionPolicy(initial=b))
    assert info.value.point_index == 1


def test_non_finite_image_is_failure():
    prob = InverseProblem(forward=lambda t: np.array([np.nan if t[0] < 0 else t[0]]), y=[0.0], sigma_eta=0.01)
    b = GaussianBelief([0.0], [[1.0]])
    with pytest.raises(ForwardModelFailure) as info:
        run_inversion(prob, InversionPolicy(initial=b))
    assert info.value.point_index == 2
    assert info.value.iteration == 1
    assert len(info.value.records) == 1


def test_exki_needs_jacobian():
    b = GaussianBelief([0.0], [[1.0]])
    with pytest.raises(JacobianUnavailable):
        exki_step(b, InverseProblem(forward=lambda t: t, y=[0.0], sigma_eta=0.01),
                  InversionPolicy(initial=b, algorithm="exki"))


def test_divergence_carries_partial_history():
    b = GaussianBelief([-1.0], [[0.25]])
    with pytest.raises(DivergenceDetected) as info:
        run_inversion(fm.scalar_problem("hyperbola"), InversionPolicy(initial=b, max_iterations=100))
    recs = info.value.records
    assert len(recs) == info.value.iteration + 1
    assert recs[-1].iteration == info.value.iteration


def test_stationarity_exact_at_fixed_point():
    # exponential: m* = G^-1(y), C* = sigma / G'(m*)^2
    prob = fm.scalar_problem("exponential")
    d = fm.scalar_jacobian("exponential", 2.0)
    b = GaussianBelief([2.0], [[0.01 / d ** 2]])
    mean_res, prec_res = check_stationarity(b, prob)
    assert mean_res < 1e-8 and prec_res < 1e-8


def test_stationarity_needs_jacobian():
    prob = InverseProblem(forward=lambda t: t, y=[0.0], sigma_eta=0.01)
    with pytest.raises(JacobianUnavailable):
        check_stationarity(GaussianBelief([0.0], [[1.0]]), prob)


def test_parallel_matches_serial():
    init = GaussianBelief([0.0, 0.0], np.diag([1.0, 100.0]))
    prob = fm.elliptic2_problem()
    a = run_inversion(prob, InversionPolicy(initial=init, max_iterations=10))
    b = run_inversion(prob, InversionPolicy(initial=init, max_iterations=10, n_workers=4))
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.mean, rb.mean)
        np.testing.assert_array_equal(ra.cov, rb.cov)


@pytest.mark.parametrize("kwargs", [
    {"nu_factor": 0.0}, {"max_iterations": 0}, {"n_workers": 0}, {"algorithm": "enkf"},
])
def test_policy_validation(kwargs):
    with pytest.raises(ValueError):
        InversionPolicy(initial=GaussianBelief([0.0], [[1.0]]), **kwargs)


def test_problem_rejects_bad_noise():
    with pytest.raises(np.linalg.LinAlgError):
        InverseProblem(forward=lambda t: t, y=[0.0, 0.0], sigma_eta=[[1.0, 2.0], [2.0, 1.0]])


def test_degenerate_posterior_is_reported_not_recorded():
    # a run that drifts into the stiff region of the elliptic map
    init = GaussianBelief([0.91126085, -0.36021397], [[4.41775492, -1.07098768], [-1.07098768, 3.69957424]])
    with pytest.raises(NonPositiveDefinite) as info:
        run_inversion(fm.elliptic2_problem(), InversionPolicy(initial=init, max_iterations=15))
    assert all(is_spd(r.cov) for r in info.value.records)


def test_singular_map_covariance_bounded_by_doubling():
    # null-space direction gets no information, so C_n grows but stays below 2^n C_0
    G = np.array([[1.0, 1.0], [2.0, 2.0]])
    C0 = np.diag([0.5, 2.0])
    prob = fm.linear_problem(G, 0.01, [1.0, 2.0])
    recs = run_inversion(prob, InversionPolicy(initial=GaussianBelief([0.0, 0.0], C0), max_iterations=25))
    for rec in recs:
        assert np.linalg.eigvalsh(2.0 ** rec.iteration * C0 - rec.cov).min() > -1e-9 * 2.0 ** rec.iteration
    null = np.array([1.0, -1.0]) / np.sqrt(2)
    assert null @ recs[-1].cov @ null > 1e6


@pytest.mark.parametrize("algorithm, tol", [("exki", 1e-2), ("uki", 5e-2)])
def test_elliptic2_limit_is_stationary(algorithm, tol):
    # UKI keeps a curvature term in its predicted covariance, so its
    # precision residual is looser than the linearised ExKI one
    init = GaussianBelief([0.0, 0.0], np.diag([1.0, 100.0]))
    recs = run_inversion(fm.elliptic2_problem(),
                         InversionPolicy(initial=init, algorithm=algorithm, max_iterations=40))
    mean_res, prec_res = check_stationarity(recs[-1].belief, fm.elliptic2_problem())
    assert mean_res < 1e-6
    assert prec_res < tol
