"""Getting-it-right tests: the samplers' conditionals must leave their
stated joints invariant.  Each test compares marginal-conditional and
successive-conditional simulation on five bounded test functions."""

import numpy as np
import pytest

from geweke_utils import hs_geweke_zscores, pcp_geweke_zscores


@pytest.mark.slow
def test_hs_sampler_getting_it_right():
    z = hs_geweke_zscores(n_sweeps=50_000, seed=99)
    assert np.all(np.abs(z) < 4.0), f"z-scores {z}"


@pytest.mark.slow
def test_pcp_sampler_getting_it_right():
    z = pcp_geweke_zscores(n_sweeps=50_000, sigma2_shape="derived", seed=123)
    assert np.all(np.abs(z) < 4.0), f"z-scores {z}"


@pytest.mark.slow
def test_pcp_printed_shape_fails_getting_it_right():
    # the as-printed variance-update shape (a + 2p) does not leave the
    # joint invariant; the test documents why "derived" is the default
    z = pcp_geweke_zscores(n_sweeps=20_000, sigma2_shape="printed", seed=123)
    assert np.max(np.abs(z)) > 10.0, f"z-scores {z}"
