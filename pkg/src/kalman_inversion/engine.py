"""Iterative Kalman inversion: prediction, UKI / ExKI analysis, run loop."""
from __future__ import annotations

import enum
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    DimensionMismatch,
    DivergenceDetected,
    DomainError,
    ForwardModelFailure,
    InversionError,
    JacobianUnavailable,
    NonPositiveDefinite,
)
from .gaussian import GaussianBelief, JointGaussian, cholesky_factor, condition_gaussian
from .unscented import generate_sigma_points, transform_estimate


class Algorithm(str, enum.Enum):
    UKI = "uki"
    EXKI = "exki"


class OmegaPolicy(str, enum.Enum):
    ADAPTIVE = "adaptive"  # Sigma_omega = C_n
    FIXED = "fixed"  # Sigma_omega = C_0


@dataclass(frozen=True, eq=False)
class InverseProblem:
    """y = G(theta) + eta with eta ~ N(0, sigma_eta).

    ``forward`` maps a length-N_theta vector to a length-N_y vector.
    ``forward_batch`` (optional) maps a (k, N_theta) array to (k, N_y) and
    may return non-finite rows where the map is undefined; samplers use it
    to evaluate many chains at once.
    """

    forward: Callable[[np.ndarray], np.ndarray]
    y: np.ndarray
    sigma_eta: np.ndarray
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    forward_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    n_theta: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if not np.all(np.isfinite(y)):
            raise ValueError("observation vector must be finite")
        s = np.asarray(self.sigma_eta, dtype=float)
        if s.ndim == 0:
            s = s * np.eye(y.size)
        elif s.ndim == 1:
            s = np.diag(s)
        if s.shape != (y.size, y.size):
            raise DimensionMismatch(f"sigma_eta shape {s.shape} does not match N_y={y.size}")
        np.linalg.cholesky(0.5 * (s + s.T))  # raises LinAlgError when not SPD
        y.flags.writeable = False
        s = np.array(s)
        s.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma_eta", s)

    @property
    def n_y(self) -> int:
        return self.y.size

    def evaluate_batch(self, thetas: np.ndarray) -> np.ndarray:
        """Forward map on every row; non-finite rows mark undefined points."""
        thetas = np.atleast_2d(thetas)
        if self.forward_batch is not None:
            return np.asarray(self.forward_batch(thetas), dtype=float).reshape(len(thetas), -1)
        out = np.empty((len(thetas), self.n_y))
        for i, t in enumerate(thetas):
            try:
                out[i] = self.forward(t)
            except DomainError:
                out[i] = np.nan
        return out

    def misfit(self, g) -> float:
        """Phi = 0.5 * ||sigma_eta^{-1/2} (y - g)||^2."""
        L = np.linalg.cholesky(self.sigma_eta)
        r = solve_triangular(L, self.y - np.asarray(g, dtype=float), lower=True)
        return 0.5 * float(r @ r)


@dataclass(frozen=True, eq=False)
class InversionPolicy:
    initial: GaussianBelief
    algorithm: Algorithm = Algorithm.UKI
    omega_policy: OmegaPolicy = OmegaPolicy.ADAPTIVE
    nu_factor: float = 2.0
    max_iterations: int = 20
    divergence_threshold: float = 1e8
    n_workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "omega_policy", OmegaPolicy(self.omega_policy))
        if not self.nu_factor > 0:
            raise ValueError("nu_factor must be positive")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")


@dataclass(frozen=True, eq=False)
class IterationRecord:
    iteration: int
    belief: GaussianBelief
    optimization_error: float
    cov_frobenius: float
    forward_evaluations: int

    @property
    def mean(self) -> np.ndarray:
        return self.belief.mean

    @property
    def cov(self) -> np.ndarray:
        return self.belief.cov


def _optimization_error(y, y_hat, sigma_nu) -> float:
    L = np.linalg.cholesky(sigma_nu)
    r = solve_triangular(L, y - y_hat, lower=True)
    return 0.5 * float(r @ r)


def _make_record(iteration, belief, y, y_hat, sigma_nu, n_evals) -> IterationRecord:
    return IterationRecord(
        iteration=iteration,
        belief=belief,
        optimization_error=_optimization_error(y, y_hat, sigma_nu),
        cov_frobenius=float(np.linalg.norm(belief.cov, "fro")),
        forward_evaluations=n_evals,
    )


def _require_spd(belief: GaussianBelief) -> GaussianBelief:
    # strict: no jitter, a record must never hold an indefinite covariance
    try:
        np.linalg.cholesky(belief.cov)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinite("posterior covariance is not positive definite") from None
    return belief


def _checked_forward(forward, theta, index) -> np.ndarray:
    try:
        g = np.atleast_1d(np.asarray(forward(theta), dtype=float))
    except DomainError as exc:
        raise ForwardModelFailure(index, f"forward model failed at sigma point {index}: {exc}") from exc
    if not np.all(np.isfinite(g)):
        raise ForwardModelFailure(index)
    return g


def _evaluate_points(forward, points, executor: Optional[Executor]) -> np.ndarray:
    idx = range(len(points))
    if executor is None:
        images = [_checked_forward(forward, points[i], i) for i in idx]
    else:
        # map preserves order, so the reduction downstream is unaffected
        images = list(executor.map(lambda i: _checked_forward(forward, points[i], i), idx))
    return np.vstack(images)


def predict(belief: GaussianBelief, policy: InversionPolicy) -> GaussianBelief:
    if policy.omega_policy is OmegaPolicy.ADAPTIVE:
        sigma_omega = belief.cov
    else:
        sigma_omega = policy.initial.cov
    return GaussianBelief(belief.mean, belief.cov + sigma_omega)


def uki_step(belief: GaussianBelief, problem: InverseProblem, policy: InversionPolicy,
             iteration: int = 1, executor: Optional[Executor] = None):
    """One UKI iteration. Returns the updated belief and its record."""
    prior = predict(belief, policy)
    ensemble = generate_sigma_points(prior)
    images = _evaluate_points(problem.forward, ensemble.points, executor)
    if images.shape[1] != problem.n_y:
        raise DimensionMismatch(f"forward map returned {images.shape[1]} values, expected {problem.n_y}")
    y_hat, cross, cov_pp = transform_estimate(ensemble, images)
    sigma_nu = policy.nu_factor * problem.sigma_eta
    joint = JointGaussian(prior.mean, y_hat, prior.cov, cross, cov_pp + sigma_nu)
    posterior = _require_spd(condition_gaussian(joint, problem.y))
    record = _make_record(iteration, posterior, problem.y, y_hat, sigma_nu, len(images))
    return posterior, record


def exki_step(belief: GaussianBelief, problem: InverseProblem, policy: InversionPolicy,
              iteration: int = 1, executor: Optional[Executor] = None):
    """One ExKI iteration using the analytic Jacobian of the problem."""
    if problem.jacobian is None:
        raise JacobianUnavailable("ExKI requires problem.jacobian")
    prior = predict(belief, policy)
    y_hat = _checked_forward(problem.forward, prior.mean, 0)
    dG = np.atleast_2d(np.asarray(problem.jacobian(prior.mean), dtype=float))
    if dG.shape != (problem.n_y, prior.dim):
        raise DimensionMismatch(f"jacobian shape {dG.shape} != {(problem.n_y, prior.dim)}")
    sigma_nu = policy.nu_factor * problem.sigma_eta
    cross = prior.cov @ dG.T
    joint = JointGaussian(prior.mean, y_hat, prior.cov, cross, dG @ cross + sigma_nu)
    posterior = _require_spd(condition_gaussian(joint, problem.y))
    record = _make_record(iteration, posterior, problem.y, y_hat, sigma_nu, 1)
    return posterior, record


def _diverged(belief: GaussianBelief, threshold: float) -> bool:
    # sqrt(||C||_F) keeps both tests in parameter units; once G stops carrying
    # information the covariance grows like 2^n while the mean may stall
    scale = max(np.linalg.norm(belief.mean), np.sqrt(np.linalg.norm(belief.cov)))
    return not np.isfinite(scale) or scale > threshold


_STEPS = {Algorithm.UKI: uki_step, Algorithm.EXKI: exki_step}


def run_inversion(problem: InverseProblem, policy: InversionPolicy) -> list[IterationRecord]:
    """Iterate for ``policy.max_iterations`` steps; no early stopping.

    Record 0 holds the initial belief (its error uses G(m_0)). Record n holds
    the belief after step n, with the optimization error evaluated at that
    step's predicted observation. Raises :class:`DivergenceDetected` carrying
    the partial history once the mean norm, or the square root of the
    covariance Frobenius norm, exceeds ``policy.divergence_threshold``.
    """
    step = _STEPS[policy.algorithm]
    belief = policy.initial
    sigma_nu = policy.nu_factor * problem.sigma_eta
    y0 = _checked_forward(problem.forward, belief.mean, 0)
    records = [_make_record(0, belief, problem.y, y0, sigma_nu, 1)]
    executor = ThreadPoolExecutor(policy.n_workers) if policy.n_workers > 1 else None
    try:
        for n in range(1, policy.max_iterations + 1):
            try:
                belief, record = step(belief, problem, policy, iteration=n, executor=executor)
            except InversionError as exc:
                exc.iteration = n
                exc.records = records
                raise
            records.append(record)
            if _diverged(belief, policy.divergence_threshold):
                raise DivergenceDetected(n, records)
    finally:
        if executor is not None:
            executor.shutdown()
    return records


def check_stationarity(belief: GaussianBelief, problem: InverseProblem,
                       jacobian: Optional[Callable] = None):
    """Residuals of the stationarity conditions G(m) = y and C^-1 = dG^T S^-1 dG.

    Returns ``(||y - G(m)||, ||C^-1 - H||_F / ||H||_F)`` with
    H = dG(m)^T sigma_eta^-1 dG(m).
    """
    jac = jacobian or problem.jacobian
    if jac is None:
        raise JacobianUnavailable("stationarity check requires a Jacobian")
    m = belief.mean
    mean_res = float(np.linalg.norm(problem.y - np.asarray(problem.forward(m), dtype=float)))
    dG = np.atleast_2d(np.asarray(jac(m), dtype=float))
    Ls = np.linalg.cholesky(problem.sigma_eta)
    W = solve_triangular(Ls, dG, lower=True)
    H = W.T @ W
    Lc = cholesky_factor(belief.cov)
    Linv = solve_triangular(Lc, np.eye(belief.dim), lower=True)
    precision = Linv.T @ Linv
    prec_res = float(np.linalg.norm(precision - H, "fro") / np.linalg.norm(H, "fro"))
    return mean_res, prec_res
