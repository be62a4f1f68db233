import numpy as np
import pytest

from tlshrink.core import RngStream, SufficientStats, mcse_columns
from tlshrink.hs_gibbs import HsOptions, HsState, hs_gibbs_run, hs_gibbs_step

from conftest import make_stats


def base_state(p, tau2=1.0, sigma2=1.0):
    return HsState(
        delta=np.zeros(p),
        lambda2=np.ones(p),
        tau2=tau2,
        sigma2=sigma2,
        zeta=np.ones(p),
        nu=1.0,
    )


class TestOptions:
    def test_validation(self):
        with pytest.raises(ValueError):
            HsOptions(iterations=100, burn_in=100)
        with pytest.raises(ValueError):
            HsOptions(thin=0)
        with pytest.raises(ValueError):
            HsOptions(fix_tau=-1.0)


class TestStep:
    def test_difference_conditional_moments(self):
        # Z = 2, tau = 0.5, lambda^2 = 4 with sigma_n^2 = 1: the conditional
        # is Normal(1, 0.5) since tau^2 lambda^2 / (1 + tau^2 lambda^2) = 1/2
        p = 1
        z = np.array([2.0])
        opts = HsOptions(iterations=2, burn_in=1, fix_tau=0.5, fix_sigma=1.0)
        root = RngStream(42)
        draws = np.empty(4000)
        for i in range(draws.size):
            st = HsState(
                delta=np.zeros(p), lambda2=np.full(p, 4.0), tau2=0.25,
                sigma2=1.0, zeta=np.ones(p), nu=1.0,
            )
            # n1=n2=2 gives c = 1, so sigma_n^2 = sigma^2 = 1
            out = hs_gibbs_step(st, z, 2, 2, opts, root.child(i))
            draws[i] = out.delta[0]
        assert draws.mean() == pytest.approx(1.0, abs=0.05)
        assert draws.var(ddof=1) == pytest.approx(0.5, rel=0.1)

    def test_extreme_scale_limits(self):
        z = np.array([3.0])
        opts = HsOptions(iterations=2, burn_in=1, fix_tau=1.0, fix_sigma=1.0)
        big = HsState(np.zeros(1), np.full(1, 1e12), 1.0, 1.0, np.ones(1), 1.0)
        small = HsState(np.zeros(1), np.full(1, 1e-12), 1.0, 1.0, np.ones(1), 1.0)
        outs_big = [
            hs_gibbs_step(big, z, 2, 2, opts, RngStream(0).child(i)).delta[0]
            for i in range(400)
        ]
        outs_small = [
            hs_gibbs_step(small, z, 2, 2, opts, RngStream(1).child(i)).delta[0]
            for i in range(400)
        ]
        assert np.mean(outs_big) == pytest.approx(3.0, abs=0.2)
        assert abs(np.mean(outs_small)) < 1e-5

    def test_nonfinite_state_reported_with_coordinate(self):
        st = base_state(3)
        st.delta[1] = np.inf
        with pytest.raises(ValueError, match=r"delta\[1\]"):
            hs_gibbs_step(st, np.zeros(3), 2, 2, HsOptions(), RngStream(0))


class TestRun:
    def test_zero_data_posterior_centered_at_zero(self):
        p = 30
        stats = SufficientStats(np.zeros(p), np.zeros(p), n1=50, n2=5, sigma=1.0)
        draws = hs_gibbs_run(
            stats, HsOptions(iterations=6000, burn_in=1000, fix_sigma=1.0), RngStream(2)
        )
        pm = draws.draws.mean(axis=0)
        se = mcse_columns(draws.draws)
        assert np.all(np.abs(pm) < 3.0 * np.maximum(se, 1e-12))

    def test_all_scale_draws_positive(self):
        stats, _, _ = make_stats(seed=3, p=20)
        draws = hs_gibbs_run(stats, HsOptions(iterations=800, burn_in=100), RngStream(3))
        assert np.all(draws.scalar_draws["sigma2"] > 0)
        assert np.all(draws.scalar_draws["tau2"] > 0)

    def test_fixed_parameters_stay_fixed(self):
        stats, _, _ = make_stats(seed=4, p=10)
        opts = HsOptions(iterations=500, burn_in=50, fix_tau=0.2, fix_sigma=1.5)
        draws = hs_gibbs_run(stats, opts, RngStream(4))
        assert np.all(draws.scalar_draws["tau2"] == 0.2**2)
        assert np.all(draws.scalar_draws["sigma2"] == 1.5**2)

    def test_thinning_and_burn_in_counts(self):
        stats, _, _ = make_stats(seed=5, p=8)
        draws = hs_gibbs_run(
            stats, HsOptions(iterations=1000, burn_in=200, thin=4), RngStream(5)
        )
        assert draws.n_draws == 200
        assert draws.burn_in == 200 and draws.thin == 4

    def test_reproducible_bitwise(self):
        stats, _, _ = make_stats(seed=6, p=12)
        opts = HsOptions(iterations=400, burn_in=100)
        a = hs_gibbs_run(stats, opts, RngStream(9, 1))
        b = hs_gibbs_run(stats, opts, RngStream(9, 1))
        np.testing.assert_array_equal(a.draws, b.draws)

    def test_dump_csv(self, tmp_path):
        stats, _, _ = make_stats(seed=7, p=3)
        path = tmp_path / "dump.csv"
        opts = HsOptions(iterations=40, burn_in=20, dump_path=str(path))
        hs_gibbs_run(stats, opts, RngStream(6))
        lines = path.read_text().splitlines()
        assert lines[0] == "iter,j,delta,lambda2,tau2,sigma2"
        assert len(lines) == 1 + 20 * 3
        first = lines[1].split(",")
        assert first[0] == "20" and first[1] == "0"
        float(first[2]), float(first[3])
