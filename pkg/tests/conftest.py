import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def expm_taylor(a, t=1.0):
    """Reference exponential: scaling and squaring around a truncated Taylor series."""
    a = np.asarray(a, dtype=float) * t
    norm = np.abs(a).sum(axis=1).max(initial=0.0)
    k = max(0, int(np.ceil(np.log2(norm))) + 4) if norm > 0 else 0
    b = a / 2.0**k
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for j in range(1, 30):
        term = term @ b / j
        out = out + term
    for _ in range(k):
        out = out @ out
    return out


def m_norm(matrix, mass):
    """Reference weighted operator norm by power iteration on ``B^* B`` in l^2_m."""
    b = np.asarray(matrix, dtype=float)
    mass = np.asarray(mass, dtype=float)
    # adjoint in l^2_m is M^{-1} B^T M
    gram = (b.T * mass) @ b / mass[:, None]
    x = np.random.default_rng(0).standard_normal(b.shape[0])
    val = 0.0
    for _ in range(5000):
        y = gram @ x
        nrm = np.sqrt(np.sum(mass * y * y))
        if nrm == 0:
            return 0.0
        x = y / nrm
        new = float(np.sum(mass * x * (gram @ x)))
        if abs(new - val) < 1e-15 * max(1.0, new):
            break
        val = new
    return float(np.sqrt(max(val, 0.0)))


@pytest.fixture
def path3():
    from switchdiff import build_graph

    return build_graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def k3():
    from switchdiff import build_graph

    return build_graph(3, [(0, 1), (1, 2), (0, 2)])
