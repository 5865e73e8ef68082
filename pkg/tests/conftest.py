import numpy as np
import pytest
from hypothesis import strategies as st


def fd_jacobian(forward, theta, rel_step=1e-6):
    """Central finite differences with step rel_step * (|theta_k| + 1)."""
    theta = np.asarray(theta, dtype=float)
    g0 = np.atleast_1d(forward(theta))
    J = np.empty((g0.size, theta.size))
    for k in range(theta.size):
        h = rel_step * (abs(theta[k]) + 1.0)
        e = np.zeros_like(theta)
        e[k] = h
        J[:, k] = (np.atleast_1d(forward(theta + e)) - np.atleast_1d(forward(theta - e))) / (2 * h)
    return J


def is_spd(C):
    """Exactly symmetric and Cholesky-factorizable without jitter."""
    if not np.array_equal(C, C.T):
        return False
    try:
        np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        return False
    return True


def random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(rng.uniform(0, np.log(cond), n))
    return (Q * w) @ Q.T


def random_linear_problem(rng, n_theta=None, n_y=None):
    n_theta = n_theta or int(rng.integers(1, 6))
    n_y = n_y or int(rng.integers(n_theta, 6))
    G = rng.standard_normal((n_y, n_theta))
    while np.linalg.cond(G) > 50:
        G = rng.standard_normal((n_y, n_theta))
    sigma = 0.1 * random_spd(rng, n_y)
    y = rng.standard_normal(n_y)
    return G, sigma, y


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
