"""Reference posterior moments used to check Kalman inversion output.

Three independent routes: random-walk Metropolis, pull-back sampling
theta = G^-1(y - eta), and deterministic quadrature for 1D problems.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import solve_triangular

from .engine import InverseProblem
from .errors import DimensionMismatch, DomainExhausted, TruncationSuspect
from .gaussian import GaussianBelief, cholesky_factor


@dataclass(frozen=True)
class McmcConfig:
    """Random-walk Metropolis settings.

    Every chain runs ``n_samples`` steps and discards the first ``burn_in``.
    Chains are advanced together, so the total number of retained draws is
    ``n_chains * (n_samples - burn_in)``.
    """

    step_size: float
    n_samples: int
    burn_in: int = 0
    seed: int = 0
    init: Optional[tuple] = None
    n_chains: int = 1
    init_spread: float = 0.0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.n_samples < 1 or self.n_chains < 1:
            raise ValueError("n_samples and n_chains must be positive")
        if not 0 <= self.burn_in < self.n_samples:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_samples")


@dataclass(frozen=True, eq=False)
class MomentSummary:
    mean: np.ndarray
    covariance: np.ndarray
    count: int
    mean_se: Optional[np.ndarray] = None
    std_se: Optional[np.ndarray] = None
    acceptance_rate: Optional[float] = None
    n_rejected: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def as_belief(self) -> GaussianBelief:
        return GaussianBelief(self.mean, self.covariance)


def acceptance_probability(log_current: float, log_proposal: float) -> float:
    if log_proposal == -np.inf:
        return 0.0
    return float(min(1.0, math.exp(min(0.0, log_proposal - log_current))))


def _log_target_fn(problem: InverseProblem, prior: Optional[GaussianBelief]):
    Ls = np.linalg.cholesky(problem.sigma_eta)
    if prior is not None:
        Lp = cholesky_factor(prior.cov)

    def log_target(thetas):
        g = problem.evaluate_batch(thetas)
        with np.errstate(invalid="ignore", over="ignore"):
            r = solve_triangular(Ls, (problem.y - g).T, lower=True, check_finite=False)
            out = -0.5 * np.sum(r * r, axis=0)
        out = np.where(np.all(np.isfinite(g), axis=1) & np.isfinite(out), out, -np.inf)
        if prior is not None:
            z = solve_triangular(Lp, (thetas - prior.mean).T, lower=True)
            out = out - 0.5 * np.sum(z * z, axis=0)
        return out

    return log_target


def _batch_errors(samples: np.ndarray, min_batches: int = 50):
    """Batch-means standard errors of the pooled mean and std.

    ``samples`` has shape (n_keep, n_chains, dim). Each chain is cut into
    equal batches so there are at least ``min_batches`` in total. The std
    error goes through the batch means of squared deviations from the pooled
    mean (delta method), which stays valid when chains sit in different modes.
    """
    n_keep, n_chains, dim = samples.shape
    per_chain = max(1, math.ceil(min_batches / n_chains))
    size = n_keep // per_chain
    if size < 1 or per_chain * n_chains < 2:
        return None, None
    trimmed = samples[: size * per_chain]
    batches = trimmed.reshape(per_chain, size, n_chains, dim).transpose(0, 2, 1, 3)
    batches = batches.reshape(per_chain * n_chains, size, dim)
    b = len(batches)
    pooled_mean = batches.mean(axis=(0, 1))
    means = batches.mean(axis=1)
    sq = ((batches - pooled_mean) ** 2).mean(axis=1)
    std = np.sqrt(sq.mean(axis=0))
    mean_se = means.std(axis=0, ddof=1) / math.sqrt(b)
    var_se = sq.std(axis=0, ddof=1) / math.sqrt(b)
    return mean_se, var_se / (2.0 * std)


def rwm_sample(problem: InverseProblem, prior: Optional[GaussianBelief],
               config: McmcConfig) -> MomentSummary:
    """Random-walk Metropolis targeting exp(-Phi(theta, y)) * prior(theta).

    ``prior=None`` means a flat (improper) prior. Proposals where the forward
    map is undefined or non-finite get log density -inf and are rejected.
    Chains start at ``config.init`` (or the prior mean), optionally jittered by
    ``init_spread`` times a standard normal draw.
    """
    rng = np.random.default_rng(config.seed)
    if config.init is not None:
        init = np.atleast_1d(np.asarray(config.init, dtype=float))
    elif prior is not None:
        init = prior.mean.copy()
    else:
        raise ValueError("init is required with a flat prior")
    dim = init.size
    if problem.n_theta is not None and problem.n_theta != dim:
        raise DimensionMismatch(f"init has length {dim}, problem expects {problem.n_theta}")
    K = config.n_chains
    state = np.tile(init, (K, 1))
    if config.init_spread > 0:
        state = state + config.init_spread * rng.standard_normal((K, dim))
    log_target = _log_target_fn(problem, prior)
    logp = log_target(state)
    n_keep = config.n_samples - config.burn_in
    kept = np.empty((n_keep, K, dim))
    accepted = 0
    for i in range(config.n_samples):
        proposal = state + config.step_size * rng.standard_normal((K, dim))
        logp_new = log_target(proposal)
        log_u = np.log(rng.random(K))
        accept = log_u < logp_new - logp
        state = np.where(accept[:, None], proposal, state)
        logp = np.where(accept, logp_new, logp)
        if i >= config.burn_in:
            kept[i - config.burn_in] = state
            accepted += int(accept.sum())
    flat = kept.reshape(-1, dim)
    mean_se, std_se = _batch_errors(kept)
    return MomentSummary(
        mean=flat.mean(axis=0),
        covariance=np.atleast_2d(np.cov(flat, rowvar=False)),
        count=flat.shape[0],
        mean_se=mean_se,
        std_se=std_se,
        acceptance_rate=accepted / (n_keep * K),
    )


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def pullback_moments(problem: InverseProblem, inverse: Callable, n_samples: int,
                     seed: int = 0) -> MomentSummary:
    """Moments of theta = G^-1(y - eta), eta ~ N(0, sigma_eta).

    ``inverse`` maps an (n, N_y) array of data to (n, N_theta) parameters and
    returns non-finite rows outside its domain; those draws are rejected.
    """
    rng = np.random.default_rng(seed)
    root = _psd_sqrt(problem.sigma_eta)
    eta = rng.standard_normal((n_samples, problem.n_y)) @ root.T
    thetas = np.asarray(inverse(problem.y - eta), dtype=float).reshape(n_samples, -1)
    ok = np.all(np.isfinite(thetas), axis=1)
    n_rejected = int(n_samples - ok.sum())
    if n_rejected > n_samples / 2:
        raise DomainExhausted(f"{n_rejected} of {n_samples} pull-back draws left the domain")
    good = thetas[ok]
    cov = np.atleast_2d(np.cov(good, rowvar=False))
    n = len(good)
    std = np.sqrt(np.diag(cov))
    return MomentSummary(mean=good.mean(axis=0), covariance=cov, count=n,
                         mean_se=std / math.sqrt(n), std_se=std / math.sqrt(2 * (n - 1)),
                         n_rejected=n_rejected)


def posterior_moments_quadrature(problem: InverseProblem, interval, n_nodes: int = 200001,
                                 prior: Optional[GaussianBelief] = None) -> MomentSummary:
    """Posterior mean and variance of a scalar problem by composite Simpson.

    The density must be negligible outside ``interval``: both endpoint
    densities are required to be below 1e-12 of the peak.
    """
    if n_nodes < 1001 or n_nodes % 2 == 0:
        raise ValueError("n_nodes must be odd and at least 1001")
    lo, hi = map(float, interval)
    x = np.linspace(lo, hi, n_nodes)
    logp = _log_target_fn(problem, prior)(x[:, None])
    peak = logp.max()
    if not np.isfinite(peak):
        raise TruncationSuspect("density vanishes on the whole interval")
    dens = np.exp(logp - peak)
    if max(dens[0], dens[-1]) >= 1e-12:
        raise TruncationSuspect(
            f"endpoint density {max(dens[0], dens[-1]):.3e} of peak on [{lo}, {hi}]")
    z = simpson(dens, x=x)
    mean = simpson(x * dens, x=x) / z
    var = simpson((x - mean) ** 2 * dens, x=x) / z
    return MomentSummary(mean=np.array([mean]), covariance=np.array([[var]]), count=n_nodes)
