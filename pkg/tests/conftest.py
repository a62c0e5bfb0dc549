import numpy as np
import pytest


def rand_normalized(rng, n, c):
    """Random row-normalized matrix (rejection-free: gaussian rows)."""
    m = rng.standard_normal((n, c))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def rand_orthogonal(rng, c):
    """Haar-ish random orthogonal matrix via QR."""
    q, r = np.linalg.qr(rng.standard_normal((c, c)))
    return q * np.sign(np.diag(r))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
