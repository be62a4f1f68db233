"""Shared domain types, the random-number contract, and posterior summaries.

Everything downstream (closed-form estimators, Gibbs samplers, the Monte
Carlo harness) is built on the types in this module.  All types are
immutable after construction and safe to share across threads; an
``RngStream`` is owned by exactly one worker at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

__all__ = [
    "Method",
    "SufficientStats",
    "EstimateResult",
    "PosteriorDraws",
    "RngStream",
    "summarize",
    "mcse",
    "batch_means_se",
]


class Method(str, Enum):
    """Tags identifying how a point estimate was produced."""

    MLE = "MLE"
    JS = "JS"
    HS_ANALYTIC = "HS_ANALYTIC"
    HS_GIBBS = "HS_GIBBS"
    PCP = "PCP"
    TRANS_LASSO = "TRANS_LASSO"
    SPS = "SPS"
    OLS = "OLS"


def _as_1d_float(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SufficientStats:
    """Per-task sample means plus sample sizes and the shared noise scale.

    The two sample-mean vectors, together with ``n1``, ``n2`` and ``sigma``,
    are the entire input to every means-problem method: the model only sees
    the data through them.  The noise standard deviation ``sigma`` is shared
    by the source and target tasks and treated as a known input by the
    closed-form estimators (both MCMC samplers re-sample the variance).
    """

    ybar1: np.ndarray
    ybar2: np.ndarray
    n1: int
    n2: int
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "ybar1", _as_1d_float(self.ybar1, "ybar1"))
        object.__setattr__(self, "ybar2", _as_1d_float(self.ybar2, "ybar2"))
        if self.ybar1.shape != self.ybar2.shape:
            raise ValueError(
                f"ybar1 and ybar2 must have equal length, got "
                f"{self.ybar1.shape[0]} and {self.ybar2.shape[0]}"
            )
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("n1 and n2 must be >= 1")
        if not (self.sigma > 0):
            raise ValueError("sigma must be > 0")
        self.ybar1.flags.writeable = False
        self.ybar2.flags.writeable = False

    @property
    def p(self) -> int:
        return self.ybar1.shape[0]

    @property
    def z(self) -> np.ndarray:
        """Componentwise difference of target and source sample means."""
        return self.ybar2 - self.ybar1

    @property
    def sigma_n2(self) -> float:
        """Variance of each component of ``z``: sigma^2 (1/n1 + 1/n2)."""
        return self.sigma**2 * (1.0 / self.n1 + 1.0 / self.n2)


@dataclass(frozen=True)
class EstimateResult:
    """A point estimate with optional componentwise 95% intervals."""

    point: np.ndarray
    method: Method
    lower95: Optional[np.ndarray] = None
    upper95: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "point", _as_1d_float(self.point, "point"))
        for name in ("lower95", "upper95"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, _as_1d_float(val, name))
        if (self.lower95 is None) != (self.upper95 is None):
            raise ValueError("lower95 and upper95 must be given together")
        if self.lower95 is not None:
            if not (
                np.all(self.lower95 <= self.point + 1e-12)
                and np.all(self.point <= self.upper95 + 1e-12)
            ):
                raise ValueError("intervals must satisfy lower95 <= point <= upper95")


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained MCMC draws (after burn-in and thinning) plus scalar series."""

    draws: np.ndarray  # (iterations, p)
    scalar_draws: dict  # name -> 1-D array aligned with draws
    burn_in: int
    thin: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=float)
        if draws.ndim != 2 or draws.shape[0] < 1:
            raise ValueError("draws must be a non-empty (iterations x p) matrix")
        object.__setattr__(self, "draws", draws)
        if self.burn_in < 0 or self.thin < 1:
            raise ValueError("burn_in must be >= 0 and thin >= 1")
        for name, series in self.scalar_draws.items():
            if len(series) != draws.shape[0]:
                raise ValueError(f"scalar series {name!r} length mismatch")

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]


# Multiplier-free 64-bit mixing (splitmix64 finalizer).  Child streams are
# derived by mixing the parent id with the child index so that the same
# (seed, stream_id) always yields the same generator no matter which worker
# or schedule instantiates it.
_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


@dataclass(frozen=True)
class RngStream:
    """A reproducible, splittable random stream.

    Identical ``(seed, stream_id)`` pairs yield identical draw sequences on
    every run and under any parallel schedule.  ``child(i)`` derives a new
    independent stream deterministically, so replications and chains can be
    assigned streams up front and executed in any order.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 bits")
        if not (0 <= self.stream_id < 2**64):
            raise ValueError("stream_id must fit in 64 bits")

    def child(self, *indices: int) -> "RngStream":
        sid = self.stream_id
        for i in indices:
            sid = _splitmix64((sid ^ _splitmix64(i & _MASK64)) & _MASK64)
        return RngStream(self.seed, sid)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.seed,
            spawn_key=(self.stream_id & 0xFFFFFFFF, self.stream_id >> 32),
        )
        return np.random.Generator(np.random.PCG64(ss))


def summarize(
    draws: PosteriorDraws, level: float = 0.95, method: Method = Method.HS_GIBBS
) -> EstimateResult:
    """Posterior mean and equal-tailed interval from retained draws.

    Quantiles use linear interpolation between order statistics (numpy's
    default), at probabilities (1-level)/2 and (1+level)/2.  For heavily
    skewed draws the columnwise mean is clipped into the interval so the
    ``EstimateResult`` ordering invariant always holds.
    """
    if not (0.0 < level < 1.0):
        raise ValueError("level must be in (0, 1)")
    if draws is None or draws.n_draws == 0:
        raise ValueError("no posterior draws")
    lo = (1.0 - level) / 2.0
    point = draws.draws.mean(axis=0)
    lower = np.quantile(draws.draws, lo, axis=0, method="linear")
    upper = np.quantile(draws.draws, 1.0 - lo, axis=0, method="linear")
    return EstimateResult(
        point=point,
        method=method,
        lower95=np.minimum(lower, point),
        upper95=np.maximum(upper, point),
        diagnostics={"n_draws": float(draws.n_draws), **draws.diagnostics},
    )


def batch_means_se(series: np.ndarray) -> float:
    """Batch-means standard error of the mean of a (possibly correlated) series."""
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 values")
    b = max(1, int(np.sqrt(n)))
    m = n // b
    if m < 2:
        b, m = 1, n
    means = x[: m * b].reshape(m, b).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(m))


def mcse(series: np.ndarray) -> float:
    """Monte Carlo standard error of the mean, via batch means.

    For an autocorrelated chain this inflates the naive sd/sqrt(n) estimate
    by grouping the series into ~sqrt(n) batches, which is the estimator
    behind the per-row "largest standard error" column in the benchmark
    reports.
    """
    return batch_means_se(series)


def mcse_columns(draws: np.ndarray) -> np.ndarray:
    """Batch-means MCSE of each column of an (iterations x p) draw matrix."""
    x = np.asarray(draws, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a (iterations x p) matrix with >= 2 rows")
    n = x.shape[0]
    b = max(1, int(np.sqrt(n)))
    m = n // b
    if m < 2:
        b, m = 1, n
    means = x[: m * b].reshape(m, b, x.shape[1]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(m)
