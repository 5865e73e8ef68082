"""Benchmark forward maps.

* five scalar maps with reference value theta_ref = 2,
* the two-parameter elliptic problem with closed-form solution,
* 1D Darcy flow with a KL-expanded log-permeability, solved by finite
  differences,
* generic linear maps.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .engine import InverseProblem
from .errors import DomainError, SolverFailure

SIGMA_ETA = 0.1 ** 2
THETA_REF_SCALAR = 2.0
ELLIPTIC2_Y = (27.5, 79.7)
ELLIPTIC2_X = (0.25, 0.75)


class ScalarProblemKind(str, enum.Enum):
    EXPONENTIAL = "exponential"
    QUADRATIC = "quadratic"
    CUBIC = "cubic"
    SIGN_CUBIC = "sign_cubic"
    HYPERBOLA = "hyperbola"


def _scalar_map(kind, t):
    """Elementwise map; inf where undefined (hyperbola at 0)."""
    kind = ScalarProblemKind(kind)
    t = np.asarray(t, dtype=float)
    if kind is ScalarProblemKind.EXPONENTIAL:
        return np.exp(t / 10.0)
    if kind is ScalarProblemKind.QUADRATIC:
        return t ** 2
    if kind is ScalarProblemKind.CUBIC:
        return t ** 3
    if kind is ScalarProblemKind.SIGN_CUBIC:
        return np.sign(t) + t ** 3
    with np.errstate(divide="ignore"):
        return 1.0 / t


def _scalar_derivative(kind, t):
    kind = ScalarProblemKind(kind)
    t = np.asarray(t, dtype=float)
    if kind is ScalarProblemKind.EXPONENTIAL:
        return np.exp(t / 10.0) / 10.0
    if kind is ScalarProblemKind.QUADRATIC:
        return 2.0 * t
    if kind in (ScalarProblemKind.CUBIC, ScalarProblemKind.SIGN_CUBIC):
        # sign() contributes a Dirac mass at 0 that is deliberately dropped
        return 3.0 * t ** 2
    with np.errstate(divide="ignore"):
        return -1.0 / t ** 2


def scalar_forward(kind, theta: float) -> float:
    if ScalarProblemKind(kind) is ScalarProblemKind.HYPERBOLA and theta == 0:
        raise DomainError("hyperbola map is undefined at theta = 0")
    return float(_scalar_map(kind, theta))


def scalar_jacobian(kind, theta: float) -> float:
    if ScalarProblemKind(kind) is ScalarProblemKind.HYPERBOLA and theta == 0:
        raise DomainError("hyperbola map is undefined at theta = 0")
    return float(_scalar_derivative(kind, theta))


def scalar_inverse(kind, z):
    """Analytic inverse, NaN/inf outside the range of the map."""
    kind = ScalarProblemKind(kind)
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind is ScalarProblemKind.EXPONENTIAL:
            return np.where(z > 0, 10.0 * np.log(np.where(z > 0, z, 1.0)), np.nan)
        if kind is ScalarProblemKind.CUBIC:
            return np.cbrt(z)
        if kind is ScalarProblemKind.HYPERBOLA:
            return 1.0 / z
    raise ValueError(f"{kind.value} map has no global inverse")


def scalar_problem(kind, theta_ref: float = THETA_REF_SCALAR, sigma_eta: float = SIGMA_ETA,
                   y=None) -> InverseProblem:
    kind = ScalarProblemKind(kind)
    if y is None:
        y = [scalar_forward(kind, theta_ref)]

    def forward(theta):
        return np.array([scalar_forward(kind, float(np.asarray(theta).reshape(-1)[0]))])

    def jacobian(theta):
        return np.array([[scalar_jacobian(kind, float(np.asarray(theta).reshape(-1)[0]))]])

    def forward_batch(thetas):
        return _scalar_map(kind, np.asarray(thetas, dtype=float).reshape(-1, 1))

    return InverseProblem(forward=forward, y=y, sigma_eta=sigma_eta, jacobian=jacobian,
                          forward_batch=forward_batch, n_theta=1, name=kind.value)


# -- two-parameter elliptic problem ------------------------------------------

def elliptic2_forward(theta) -> np.ndarray:
    """Pressure p(x) = theta_2 x + exp(-theta_1)(x - x^2)/2 at x = 0.25, 0.75."""
    t = np.asarray(theta, dtype=float)
    x = np.array(ELLIPTIC2_X)
    return t[..., 1, None] * x + np.exp(-t[..., 0, None]) * (-x ** 2 / 2 + x / 2)


def elliptic2_jacobian(theta) -> np.ndarray:
    t = np.asarray(theta, dtype=float)
    x = np.array(ELLIPTIC2_X)
    return np.column_stack([-np.exp(-t[0]) * (-x ** 2 / 2 + x / 2), x])


def elliptic2_problem(y=ELLIPTIC2_Y, sigma_eta=SIGMA_ETA) -> InverseProblem:
    return InverseProblem(forward=elliptic2_forward, y=y, sigma_eta=sigma_eta,
                          jacobian=elliptic2_jacobian, forward_batch=elliptic2_forward,
                          n_theta=2, name="elliptic2")


# -- Darcy flow ----------------------------------------------------------------

@dataclass(frozen=True)
class DarcyConfig:
    n_cells: int = 512
    n_kl: int = 32
    tau: float = 3.0
    d: float = 1.0
    source_left: float = 1000.0
    source_right: float = 2000.0
    n_obs: int = 63

    def __post_init__(self):
        if self.n_cells % (self.n_obs + 1):
            raise ValueError("n_obs + 1 must divide n_cells so measurements sit on grid faces")

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def obs_locations(self) -> np.ndarray:
        return np.arange(1, self.n_obs + 1) / (self.n_obs + 1)


def kl_eigenvalues(config: DarcyConfig = DarcyConfig()) -> np.ndarray:
    l = np.arange(1, config.n_kl + 1)
    return (np.pi ** 2 * l ** 2 + config.tau ** 2) ** (-config.d)


def _kl_basis(x, config: DarcyConfig) -> np.ndarray:
    """Matrix B with B[i, l] = sqrt(lambda_l) psi_l(x_i)."""
    l = np.arange(1, config.n_kl + 1)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.sqrt(2.0 * kl_eigenvalues(config)) * np.cos(np.pi * np.outer(x, l))


def kl_log_permeability(theta, x, config: DarcyConfig = DarcyConfig()):
    """Truncated KL sum  sum_l theta_l sqrt(lambda_l) sqrt(2) cos(pi l x)."""
    theta = np.asarray(theta, dtype=float)
    out = _kl_basis(x, config) @ theta
    return float(out[0]) if np.ndim(x) == 0 else out


@functools.lru_cache(maxsize=8)
def _grid(config: DarcyConfig):
    n = config.n_cells
    faces = np.arange(n + 1) * config.h
    centers = (np.arange(n) + 0.5) * config.h
    source = np.where(centers <= 0.5, config.source_left, config.source_right)
    basis = _kl_basis(faces, config)
    basis.flags.writeable = False
    source.flags.writeable = False
    obs_faces = np.arange(1, config.n_obs + 1) * (n // (config.n_obs + 1))
    return basis, source, obs_faces


def darcy_pressure(theta, config: DarcyConfig = DarcyConfig(), source_scale: float = 1.0):
    """Cell-centred pressure for -(a p')' = f, p(0) = p(1) = 0.

    Face permeabilities are evaluated pointwise from the continuous field.
    Dirichlet values enter through half-cell fluxes at both boundary faces.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (config.n_kl,) or not np.all(np.isfinite(theta)):
        raise SolverFailure(f"theta must be a finite vector of length {config.n_kl}")
    basis, source, _ = _grid(config)
    a = np.exp(basis @ theta)
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise SolverFailure("permeability is not finite and positive")
    n = config.n_cells
    t = a.copy()
    t[0] *= 2.0
    t[-1] *= 2.0
    ab = np.zeros((3, n))
    ab[0, 1:] = -t[1:n]
    ab[1] = t[:n] + t[1:]
    ab[2, :-1] = -t[1:n]
    rhs = config.h ** 2 * source_scale * source
    try:
        p = solve_banded((1, 1), ab, rhs, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise SolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(p)):
        raise SolverFailure("tridiagonal solve produced non-finite pressure")
    return p


def darcy_face_pressure(theta, config: DarcyConfig = DarcyConfig(), source_scale: float = 1.0):
    """Pressure at all n_cells + 1 faces, boundary zeros included."""
    p = darcy_pressure(theta, config, source_scale)
    out = np.zeros(config.n_cells + 1)
    out[1:-1] = 0.5 * (p[:-1] + p[1:])
    return out


def darcy_solve(theta, config: DarcyConfig = DarcyConfig(), source_scale: float = 1.0) -> np.ndarray:
    """Pressure at the n_obs equidistant interior points k / (n_obs + 1)."""
    p = darcy_pressure(theta, config, source_scale)
    _, _, obs = _grid(config)
    return 0.5 * (p[obs - 1] + p[obs])


def _read_vector(name: str) -> np.ndarray:
    text = resources.files("kalman_inversion").joinpath("data", name).read_text()
    return np.array([float(v) for v in text.split()])


def darcy_theta_ref() -> np.ndarray:
    return _read_vector("darcy_theta_ref.txt")


def darcy_y_ref() -> np.ndarray:
    return _read_vector("darcy_y_ref.txt")


def darcy_problem(config: DarcyConfig = DarcyConfig(), y=None, sigma_eta=SIGMA_ETA) -> InverseProblem:
    if y is None:
        y = darcy_y_ref() if config == DarcyConfig() else darcy_solve(darcy_theta_ref(), config)
    return InverseProblem(forward=functools.partial(darcy_solve, config=config), y=y,
                          sigma_eta=sigma_eta, n_theta=config.n_kl, name="darcy")


# -- linear ----------------------------------------------------------------------

def linear_problem(G, sigma_eta, y) -> InverseProblem:
    G = np.atleast_2d(np.asarray(G, dtype=float))
    G.flags.writeable = False
    return InverseProblem(forward=lambda t: G @ np.asarray(t, dtype=float),
                          jacobian=lambda t: G, forward_batch=lambda ts: np.asarray(ts) @ G.T,
                          y=y, sigma_eta=sigma_eta, n_theta=G.shape[1], name="linear")


# -- registry ------------------------------------------------------------------

PROBLEM_DESCRIPTIONS = {
    "exponential": "G(theta) = exp(theta/10), theta_ref = 2",
    "quadratic": "G(theta) = theta^2, theta_ref = 2 (bimodal posterior)",
    "cubic": "G(theta) = theta^3, theta_ref = 2",
    "sign_cubic": "G(theta) = sign(theta) + theta^3, theta_ref = 2",
    "hyperbola": "G(theta) = 1/theta, theta_ref = 2",
    "elliptic2": "two-parameter elliptic BVP observed at x = 0.25, 0.75",
    "darcy": "1D Darcy flow, 32 KL modes, 63 pressure observations",
    "linear": "G(theta) = A theta with user-supplied A, sigma_eta, y",
}


def forward_map(problem_id: str):
    """Single-point forward map for a registered nonlinear problem."""
    if problem_id in ScalarProblemKind._value2member_map_:
        return lambda t: np.array([scalar_forward(problem_id, float(np.reshape(t, -1)[0]))])
    if problem_id == "elliptic2":
        return elliptic2_forward
    if problem_id == "darcy":
        return darcy_solve
    raise ValueError(f"unknown problem id {problem_id!r}")


def make_reference_observation(problem_id: str, theta_ref, seed=None, noise: str = "none",
                               sigma_eta=None) -> np.ndarray:
    """G(theta_ref), optionally perturbed by a seeded N(0, sigma_eta) draw."""
    y = np.atleast_1d(np.asarray(forward_map(problem_id)(np.atleast_1d(theta_ref)), dtype=float))
    if noise == "none":
        return y
    if noise != "gaussian":
        raise ValueError(f"noise must be 'none' or 'gaussian', got {noise!r}")
    s = SIGMA_ETA if sigma_eta is None else sigma_eta
    s = np.asarray(s, dtype=float)
    if s.ndim == 0:
        s = s * np.eye(y.size)
    L = np.linalg.cholesky(s)
    rng = np.random.default_rng(seed)
    return y + L @ rng.standard_normal(y.size)


def kl_log_permeability_bound(config: DarcyConfig = DarcyConfig()) -> float:
    return float(np.sum(np.sqrt(2.0 * kl_eigenvalues(config))))

