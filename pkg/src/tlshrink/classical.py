"""Closed-form estimators: MLE, James-Stein variants, and two-stage assembly."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import EstimateResult, Method, RngStream, SufficientStats
from .shrinkage import WeightParams, hs_posterior_mean_fixed_tau

__all__ = [
    "TwoStageConfig",
    "js_shrink",
    "mle_target",
    "js_target",
    "two_stage_estimate",
]

_FIRST_STAGES = (Method.MLE, Method.JS)
_SECOND_STAGES = (Method.MLE, Method.JS, Method.HS_ANALYTIC, Method.HS_GIBBS)


@dataclass(frozen=True)
class TwoStageConfig:
    """Which estimator runs in each stage of the two-stage procedure."""

    first_stage: Method = Method.MLE
    second_stage: Method = Method.HS_GIBBS

    def __post_init__(self):
        if self.first_stage not in _FIRST_STAGES:
            raise ValueError(f"first_stage must be one of {_FIRST_STAGES}")
        if self.second_stage not in _SECOND_STAGES:
            raise ValueError(f"second_stage must be one of {_SECOND_STAGES}")


def js_shrink(est: np.ndarray, noise_var: float) -> np.ndarray:
    """Plain James-Stein shrinkage toward zero.

    Multiplies ``est`` by 1 - (p - 2) * noise_var / ||est||^2.  The factor is
    deliberately not clamped at zero: when ||est||^2 < (p - 2) * noise_var
    the output flips the sign of the input, which is the known over-shrinkage
    pathology of the unclamped rule and is kept (and tested) as-is.
    """
    est = np.asarray(est, dtype=float)
    p = est.size
    if p < 3:
        raise ValueError("JS requires p >= 3")
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    norm2 = float(est @ est)
    if norm2 == 0.0:
        raise ValueError("JS undefined for the zero vector")
    factor = 1.0 - (p - 2) * noise_var / norm2
    return factor * est


def mle_target(stats: SufficientStats) -> EstimateResult:
    """Target-data MLE: the target sample mean itself."""
    return EstimateResult(point=stats.ybar2.copy(), method=Method.MLE)


def js_target(stats: SufficientStats) -> EstimateResult:
    """James-Stein applied directly to the target sample mean (no transfer)."""
    point = js_shrink(stats.ybar2, stats.sigma**2 / stats.n2)
    return EstimateResult(point=point, method=Method.JS, diagnostics={"target_only": 1.0})


def two_stage_estimate(
    stats: SufficientStats,
    cfg: TwoStageConfig,
    hs_opts=None,
    tau: Optional[float] = None,
    rng: Optional[RngStream] = None,
) -> EstimateResult:
    """Source estimate plus an estimated task difference.

    The first stage estimates the source means (MLE, or James-Stein with
    noise variance sigma^2/n1).  The second stage always works on the
    residual difference z = ybar2 - beta1_hat recomputed against the chosen
    first-stage estimate, never against ybar1 unconditionally:

    - ``MLE``: the difference itself (collapsing both stages to ybar2 when
      the first stage is also the MLE);
    - ``JS``: James-Stein on z with noise variance sigma_n^2;
    - ``HS_ANALYTIC``: fixed-scale shrinkage weight, ``tau`` defaulting to
      1/p when not supplied;
    - ``HS_GIBBS``: posterior mean from the full Gibbs sampler (requires
      ``rng``; ``hs_opts`` forwards sampler options).
    """
    y1, y2 = stats.ybar1, stats.ybar2
    if cfg.first_stage == Method.MLE:
        beta1 = y1
    else:
        beta1 = js_shrink(y1, stats.sigma**2 / stats.n1)
    z = y2 - beta1

    diagnostics = {"first_stage": cfg.first_stage.value}
    if cfg.second_stage == Method.MLE:
        # beta1 + (ybar2 - beta1) telescopes exactly for any first stage
        return EstimateResult(
            point=y2.copy(), method=Method.MLE, diagnostics=diagnostics
        )
    if cfg.second_stage == Method.JS:
        delta = js_shrink(z, stats.sigma_n2)
    elif cfg.second_stage == Method.HS_ANALYTIC:
        params = WeightParams(
            tau=tau if tau is not None else 1.0 / stats.p, sigma_n2=stats.sigma_n2
        )
        shifted = SufficientStats(beta1, y2, stats.n1, stats.n2, stats.sigma)
        res = hs_posterior_mean_fixed_tau(shifted, params)
        delta = res.point - beta1
        diagnostics.update(res.diagnostics)
    else:  # HS_GIBBS
        from .hs_gibbs import HsOptions, hs_gibbs_run

        if rng is None:
            raise ValueError("HS_GIBBS second stage requires an RngStream")
        opts = hs_opts if hs_opts is not None else HsOptions()
        shifted = SufficientStats(beta1, y2, stats.n1, stats.n2, stats.sigma)
        draws = hs_gibbs_run(shifted, opts, rng)
        delta = draws.draws.mean(axis=0)
        diagnostics["n_draws"] = float(draws.n_draws)

    return EstimateResult(
        point=beta1 + delta, method=cfg.second_stage, diagnostics=diagnostics
    )
