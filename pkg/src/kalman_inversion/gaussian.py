"""Dense Gaussian algebra: SPD factorization, conditioning and KL divergence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DimensionMismatch, NonPositiveDefinite

JITTER_LEVELS = (1e-12, 1e-10, 1e-8)


def symmetrize(C: np.ndarray) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    return 0.5 * (C + C.T)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Gaussian N(mean, cov) over the parameter vector.

    Arrays are copied, symmetrized (covariance) and made read-only on
    construction. Positive definiteness is enforced lazily by
    :func:`cholesky_factor`.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise DimensionMismatch(f"mean must be a vector, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(symmetrize(cov)))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


@dataclass(frozen=True, eq=False)
class JointGaussian:
    """Joint Gaussian of (theta, y) stored by blocks."""

    mean_theta: np.ndarray
    mean_y: np.ndarray
    cov_theta: np.ndarray
    cov_cross: np.ndarray
    cov_y: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean_theta, dtype=float))
        my = np.atleast_1d(np.asarray(self.mean_y, dtype=float))
        n, k = m.size, my.size
        c = np.atleast_2d(np.asarray(self.cov_theta, dtype=float))
        cx = np.asarray(self.cov_cross, dtype=float).reshape(n, k)
        cy = np.atleast_2d(np.asarray(self.cov_y, dtype=float))
        if c.shape != (n, n) or cy.shape != (k, k):
            raise DimensionMismatch("joint covariance blocks have inconsistent shapes")
        for name, val in (("mean_theta", m), ("mean_y", my), ("cov_theta", symmetrize(c)),
                          ("cov_cross", cx), ("cov_y", symmetrize(cy))):
            object.__setattr__(self, name, _frozen(val))

    @classmethod
    def from_full(cls, mean, cov, n_theta: int) -> "JointGaussian":
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        return cls(mean[:n_theta], mean[n_theta:], cov[:n_theta, :n_theta],
                   cov[:n_theta, n_theta:], cov[n_theta:, n_theta:])

    @property
    def mean(self) -> np.ndarray:
        return np.concatenate([self.mean_theta, self.mean_y])

    @property
    def cov(self) -> np.ndarray:
        return np.block([[self.cov_theta, self.cov_cross],
                         [self.cov_cross.T, self.cov_y]])


def cholesky_factor(C) -> np.ndarray:
    """Lower-triangular L with L @ L.T == C.

    The input is symmetrized first. If the factorization fails, a diagonal
    jitter ``delta * trace(C) / n`` is added with ``delta`` escalating through
    ``JITTER_LEVELS``.
    """
    C = symmetrize(np.atleast_2d(C))
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise NonPositiveDefinite("covariance contains non-finite entries")
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        pass
    n = C.shape[0]
    scale = np.trace(C) / n
    if scale > 0:
        eye = np.eye(n)
        for delta in JITTER_LEVELS:
            try:
                return np.linalg.cholesky(C + delta * scale * eye)
            except np.linalg.LinAlgError:
                continue
    raise NonPositiveDefinite("matrix is not positive definite after maximum jitter")


def condition_gaussian(joint: JointGaussian, y) -> GaussianBelief:
    """Condition the joint Gaussian on the observed value ``y``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != joint.mean_y.shape:
        raise DimensionMismatch(f"observation length {y.size} != {joint.mean_y.size}")
    L = cholesky_factor(joint.cov_y)
    factor = (L, True)
    mean = joint.mean_theta + joint.cov_cross @ cho_solve(factor, y - joint.mean_y)
    cov = joint.cov_theta - joint.cov_cross @ cho_solve(factor, joint.cov_cross.T)
    return GaussianBelief(mean, cov)


def gaussian_kl(p: GaussianBelief, q: GaussianBelief) -> float:
    """KL(p || q) for two Gaussians, in nats."""
    if p.dim != q.dim:
        raise DimensionMismatch(f"dimensions differ: {p.dim} vs {q.dim}")
    Lp = cholesky_factor(p.cov)
    Lq = cholesky_factor(q.cov)
    # tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
    A = solve_triangular(Lq, Lp, lower=True)
    b = solve_triangular(Lq, q.mean - p.mean, lower=True)
    logdet_q = 2.0 * np.sum(np.log(np.diag(Lq)))
    logdet_p = 2.0 * np.sum(np.log(np.diag(Lp)))
    kl = 0.5 * (np.sum(A * A) + b @ b - p.dim + logdet_q - logdet_p)
    return max(float(kl), 0.0)
