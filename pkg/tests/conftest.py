import matplotlib

matplotlib.use("Agg")

import numpy as np
import pytest

from tlshrink.core import RngStream, SufficientStats


@pytest.fixture
def rng():
    return RngStream(20240817)


def make_stats(seed=0, p=50, n1=1000, n2=1, sigma=1.0, q=10, signal=3.0):
    """Sparse-difference sufficient statistics for sampler tests."""
    gen = RngStream(seed).generator()
    q = min(q, max(p // 3, 1))
    beta1 = gen.uniform(-3, 3, p)
    delta = np.zeros(p)
    delta[:q] = gen.normal(signal, 1.0, q)
    ybar1 = beta1 + gen.normal(0, sigma / np.sqrt(n1), p)
    ybar2 = beta1 + delta + gen.normal(0, sigma / np.sqrt(n2), p)
    return SufficientStats(ybar1, ybar2, n1=n1, n2=n2, sigma=sigma), beta1, delta
