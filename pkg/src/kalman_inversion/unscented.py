"""Modified unscented transform with 2N+1 symmetric sigma points."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidDimension
from .gaussian import GaussianBelief, cholesky_factor, symmetrize


@dataclass(frozen=True)
class UnscentedWeights:
    n_theta: int
    a: float
    lam: float
    c: float
    w_c: float

    @property
    def n_points(self) -> int:
        return 2 * self.n_theta + 1


def compute_weights(n_theta: int) -> UnscentedWeights:
    """Scaling and covariance weight for ``n_theta`` parameters (kappa = 0).

    >>> compute_weights(100).c
    2.0
    """
    if int(n_theta) != n_theta or n_theta < 1:
        raise InvalidDimension(f"n_theta must be a positive integer, got {n_theta}")
    n = int(n_theta)
    kappa = 0.0
    a = min(math.sqrt(4.0 / (n + kappa)), 1.0)
    lam = a * a * (n + kappa) - n
    c = math.sqrt(n + lam)
    w_c = 1.0 / (2.0 * (n + lam))
    return UnscentedWeights(n_theta=n, a=a, lam=lam, c=c, w_c=w_c)


@dataclass(frozen=True, eq=False)
class SigmaEnsemble:
    """Sigma points as rows of ``points``; row 0 is the mean."""

    points: np.ndarray
    weights: UnscentedWeights

    @property
    def mean(self) -> np.ndarray:
        return self.points[0]


def generate_sigma_points(belief: GaussianBelief) -> SigmaEnsemble:
    n = belief.dim
    weights = compute_weights(n)
    L = cholesky_factor(belief.cov)
    m = belief.mean
    points = np.empty((2 * n + 1, n))
    points[0] = m
    # columns of the lower factor
    points[1:n + 1] = m + weights.c * L.T
    points[n + 1:] = m - weights.c * L.T
    return SigmaEnsemble(points=points, weights=weights)


def transform_estimate(ensemble: SigmaEnsemble, images):
    """Mean, cross-covariance and covariance of the transformed ensemble.

    The mean is the image of the central point. Both covariances are
    accumulated over points 1..2N in ascending order so results do not depend
    on BLAS threading.
    """
    images = np.asarray(images, dtype=float)
    if images.ndim == 1:
        images = images[:, None]
    n_pts = ensemble.points.shape[0]
    if images.shape[0] != n_pts:
        raise DimensionMismatch(f"expected {n_pts} images, got {images.shape[0]}")
    w = ensemble.weights.w_c
    y_mean = images[0].copy()
    d_theta = ensemble.points - ensemble.points[0]
    d_y = images - y_mean
    cross = np.zeros((d_theta.shape[1], d_y.shape[1]))
    cov = np.zeros((d_y.shape[1], d_y.shape[1]))
    for j in range(1, n_pts):
        cross += w * np.outer(d_theta[j], d_y[j])
        cov += w * np.outer(d_y[j], d_y[j])
    return y_mean, cross, symmetrize(cov)
