"""Competing transfer methods: thresholding on pooled-then-residual means,
and joint least squares with a ridge penalty on the task difference."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import EstimateResult, Method, SufficientStats

__all__ = [
    "TransLassoConfig",
    "SpsConfig",
    "soft_threshold",
    "sure_soft_threshold",
    "trans_lasso_means",
    "sps_ridge",
]


def soft_threshold(x, t: float):
    """sign(x) * max(|x| - t, 0); the lasso solution for a single mean."""
    if t < 0:
        raise ValueError("threshold must be >= 0")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    return float(out) if out.ndim == 0 else out


def sure_soft_threshold(x: np.ndarray, noise_var: float) -> float:
    """Threshold minimizing Stein's unbiased risk estimate for soft thresholding.

    For y ~ Normal(theta, s^2 I), SURE(t) = sum min(y_i^2, t^2)
    + 2 s^2 #{|y_i| > t} - n s^2; the minimizer lies on the grid of sorted
    |y_i| (plus zero), so the search is exact and deterministic.  This is
    the data-driven tuner used when only sufficient statistics are
    available and sample splitting is impossible.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    a = np.sort(np.abs(x))
    candidates = np.concatenate([[0.0], a])
    a2 = a * a
    csum = np.concatenate([[0.0], np.cumsum(a2)])
    # for t = candidates[i]: values below are |x|_(1..k) with k = i
    ks = np.arange(n + 1)
    sure = csum[ks] + (n - ks) * candidates**2 + 2.0 * noise_var * (n - ks)
    return float(candidates[int(np.argmin(sure))])


@dataclass(frozen=True)
class TransLassoConfig:
    """Thresholds for the pooled stage and the target-residual stage.

    With ``auto=True`` thresholds come from a rule instead of the fixed
    values: ``tuning="universal"`` uses sigma*sqrt(2 log p / n_T) and
    sigma*sqrt(2 log p / n_2); ``tuning="sure"`` picks each threshold by
    minimizing SURE on the corresponding stage, which is the only
    data-driven option open here because sufficient statistics cannot be
    split for cross-validation.
    """

    lambda_w: float = 0.0
    lambda_delta: float = 0.0
    auto: bool = True
    tuning: str = "universal"

    def __post_init__(self):
        if self.lambda_w < 0 or self.lambda_delta < 0:
            raise ValueError("penalties must be >= 0")
        if self.tuning not in ("universal", "sure"):
            raise ValueError("tuning must be 'universal' or 'sure'")


@dataclass(frozen=True)
class SpsConfig:
    """Ridge penalty for joint soft parameter sharing.

    ``lambda_ridge=None`` selects the penalty by minimizing an unbiased
    risk estimate over the implied family of linear shrinkers (see
    ``sps_ridge``).
    """

    lambda_ridge: Optional[float] = None

    def __post_init__(self):
        if self.lambda_ridge is not None and self.lambda_ridge < 0:
            raise ValueError("lambda_ridge must be >= 0")


def trans_lasso_means(stats: SufficientStats, cfg: TransLassoConfig) -> EstimateResult:
    """Two-step thresholding: pooled means first, target residuals second.

    Step one soft-thresholds the precision-weighted pooled mean; step two
    soft-thresholds the target-minus-pooled residual; the estimate is the
    sum of the two.  With both thresholds zero this reduces exactly to the
    target MLE.
    """
    n_t = stats.n1 + stats.n2
    pooled = (stats.n1 * stats.ybar1 + stats.n2 * stats.ybar2) / n_t
    p = stats.p
    if cfg.auto:
        if cfg.tuning == "universal":
            lam_w = stats.sigma * math.sqrt(2.0 * math.log(p) / n_t)
            lam_d = stats.sigma * math.sqrt(2.0 * math.log(p) / stats.n2)
        else:
            lam_w = sure_soft_threshold(pooled, stats.sigma**2 / n_t)
            lam_d = None  # tuned after the residual is formed
    else:
        lam_w, lam_d = cfg.lambda_w, cfg.lambda_delta

    w_hat = soft_threshold(pooled, lam_w)
    resid = stats.ybar2 - w_hat
    if cfg.auto and cfg.tuning == "sure":
        lam_d = sure_soft_threshold(resid, stats.sigma**2 / stats.n2)
    delta_hat = soft_threshold(resid, lam_d)
    return EstimateResult(
        point=w_hat + delta_hat,
        method=Method.TRANS_LASSO,
        diagnostics={"lambda_w": float(lam_w), "lambda_delta": float(lam_d)},
    )


def sps_ridge(stats: SufficientStats, cfg: SpsConfig) -> EstimateResult:
    """Joint least squares with a ridge penalty on the task difference.

    Minimizes n1 ||ybar1 - b1||^2 + n2 ||ybar2 - b1 - d||^2 + lam ||d||^2 in
    closed form: d_j = z_j * h / (h + lam) with h = n1 n2 / n_T, then
    b1 = (n1 ybar1 + n2 (ybar2 - d)) / n_T, and the estimate b1 + d.  As
    lam runs from 0 to infinity the estimate moves monotonically from the
    target mean to the pooled mean.

    When ``lambda_ridge`` is unset, the penalty is chosen by minimizing an
    unbiased estimate of the risk of the implied family
    b2(s) = ybar1 + s_tilde z over the reachable shrinkage factors.
    """
    n1, n2 = stats.n1, stats.n2
    n_t = n1 + n2
    h = n1 * n2 / n_t
    z = stats.z
    lam = cfg.lambda_ridge
    if lam is None:
        lam = _sps_sure_lambda(stats, h)
    fac = 0.0 if math.isinf(lam) else h / (h + lam)
    delta = fac * z
    beta1 = (n1 * stats.ybar1 + n2 * (stats.ybar2 - delta)) / n_t
    return EstimateResult(
        point=beta1 + delta,
        method=Method.SPS,
        diagnostics={"lambda_ridge": lam, "shrink_factor": fac},
    )


def _sps_sure_lambda(stats: SufficientStats, h: float) -> float:
    """Penalty minimizing the unbiased risk estimate of the ridge path.

    The ridge estimate equals ybar1 + s_tilde z with
    s_tilde = q_n + (1 - q_n) h/(h + lam); its risk is
    (1-s_tilde)^2 (||d||^2 + p s1sq) + s_tilde^2 p s2sq, and
    ||d||^2 is estimated unbiasedly by ||z||^2 - p sigma_n^2.
    """
    p = stats.p
    s1sq = stats.sigma**2 / stats.n1
    s2sq = stats.sigma**2 / stats.n2
    qn = stats.n2 / (stats.n1 + stats.n2)
    amp = max(float(stats.z @ stats.z) - p * stats.sigma_n2, 0.0) + p * s1sq
    s_tilde = amp / (amp + p * s2sq) if amp + p * s2sq > 0 else 0.0
    s_tilde = min(max(s_tilde, qn), 1.0)
    s = (s_tilde - qn) / (1.0 - qn) if qn < 1.0 else 1.0
    if s <= 0.0:
        return math.inf
    return h * (1.0 - s) / s
