"""Synthetic scenario generation for the sparse and bounded-difference cases."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import RngStream, SufficientStats

__all__ = [
    "Case",
    "ScenarioConfig",
    "ScenarioTruth",
    "gen_truth",
    "gen_observed",
    "export_scenario_csv",
    "load_scenario_csv",
]


class Case:
    SPARSE = "SPARSE"
    BOUNDED = "BOUNDED"


@dataclass(frozen=True)
class ScenarioConfig:
    """Generator parameters for one simulated scenario.

    Derived quantities: the number of nonzero differences
    q = ceil(p^(1-alpha)) and the source sample size n1 = ceil(p^(1+gamma)),
    so gamma > 0 gives abundant source data, gamma = 0 gives n1 = p, and
    gamma < 0 gives source-starved scenarios.  In the bounded case the
    differences live in the ball of radius C = c_factor * sqrt(p).
    """

    p: int
    alpha: float = 0.2
    gamma: float = 0.2
    n2: int = 1
    sigma: float = 1.0
    case: str = Case.SPARSE
    c_factor: float = 3.0
    signal_mean: float = 5.0
    signal_sd: float = 1.0
    beta_range: float = 3.0
    permute_support: bool = False

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must be in (0, 1)")
        if not (-1.0 < self.gamma < 1.0):
            raise ValueError("gamma must be in (-1, 1)")
        if self.n2 < 1:
            raise ValueError("n2 must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.case not in (Case.SPARSE, Case.BOUNDED):
            raise ValueError("case must be SPARSE or BOUNDED")
        if self.c_factor <= 0 or self.signal_sd <= 0:
            raise ValueError("c_factor and signal_sd must be > 0")
        if not (1 <= self.q <= self.p) or self.n1 < 1:
            raise ValueError("derived q or n1 out of range")

    @property
    def q(self) -> int:
        return math.ceil(self.p ** (1.0 - self.alpha))

    @property
    def n1(self) -> int:
        return math.ceil(self.p ** (1.0 + self.gamma))

    @property
    def radius(self) -> float:
        return self.c_factor * math.sqrt(self.p)


@dataclass(frozen=True)
class ScenarioTruth:
    """Simulated ground truth; target means are source means plus differences."""

    beta1_0: np.ndarray
    delta_0: np.ndarray
    beta2_0: np.ndarray

    def __post_init__(self):
        if not np.array_equal(self.beta2_0, self.beta1_0 + self.delta_0):
            raise ValueError("beta2_0 must equal beta1_0 + delta_0 exactly")


def gen_truth(cfg: ScenarioConfig, rng: RngStream) -> ScenarioTruth:
    """Draw ground-truth means for one replication.

    Source means are uniform on (-beta_range, beta_range).  Sparse case:
    the first q differences are Normal(signal_mean, signal_sd^2) and the
    rest exactly zero (optionally permuted; estimators are permutation
    equivariant, so benchmark tables keep the fixed support for
    comparability).  Bounded case: the difference vector is drawn uniformly
    from the ball of radius C via C * U^(1/p) * W/||W||.
    """
    gen = rng.generator()
    p = cfg.p
    beta1 = gen.uniform(-cfg.beta_range, cfg.beta_range, size=p)
    if cfg.case == Case.SPARSE:
        q = cfg.q
        delta = np.zeros(p)
        delta[:q] = gen.normal(cfg.signal_mean, cfg.signal_sd, size=q)
        if cfg.permute_support:
            delta = gen.permutation(delta)
    else:
        w = gen.standard_normal(p)
        u = gen.uniform()
        delta = cfg.radius * u ** (1.0 / p) * w / np.linalg.norm(w)
    return ScenarioTruth(beta1_0=beta1, delta_0=delta, beta2_0=beta1 + delta)


def gen_observed(
    truth: ScenarioTruth, cfg: ScenarioConfig, rng: RngStream
) -> SufficientStats:
    """Sample the source and target sample means around the truth.

    Only the sufficient statistics are generated (never n1 raw draws): the
    model depends on the data solely through the sample means, and n1 can
    reach ceil(p^1.2) at p = 10^4.
    """
    gen = rng.generator()
    n1 = cfg.n1
    p = cfg.p
    ybar1 = truth.beta1_0 + gen.normal(0.0, cfg.sigma / math.sqrt(n1), size=p)
    ybar2 = truth.beta2_0 + gen.normal(0.0, cfg.sigma / math.sqrt(cfg.n2), size=p)
    return SufficientStats(ybar1=ybar1, ybar2=ybar2, n1=n1, n2=cfg.n2, sigma=cfg.sigma)


_CSV_COLUMNS = "j,beta1_0,delta_0,beta2_0,ybar1,ybar2"


def export_scenario_csv(
    path, cfg: ScenarioConfig, truth: ScenarioTruth, stats: SufficientStats
) -> None:
    """Write one scenario to CSV with the config as a JSON comment header."""
    header = dict(asdict(cfg), schema_version=1)
    lines = [f"# config: {json.dumps(header, sort_keys=True)}", _CSV_COLUMNS]
    for j in range(cfg.p):
        vals = (
            truth.beta1_0[j], truth.delta_0[j], truth.beta2_0[j],
            stats.ybar1[j], stats.ybar2[j],
        )
        lines.append(f"{j}," + ",".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def load_scenario_csv(path):
    """Read a scenario CSV back into (config, truth, stats)."""
    text = Path(path).read_text().strip().splitlines()
    if not text or not text[0].startswith("# config: "):
        raise ValueError("scenario file missing '# config:' header line")
    raw = json.loads(text[0][len("# config: ") :])
    raw.pop("schema_version", None)
    cfg = ScenarioConfig(**raw)
    if text[1] != _CSV_COLUMNS:
        raise ValueError(f"unexpected scenario columns: {text[1]!r}")
    data = np.array(
        [[float(v) for v in line.split(",")] for line in text[2:]], dtype=float
    )
    if data.shape[0] != cfg.p:
        raise ValueError("scenario row count does not match config p")
    truth = ScenarioTruth(
        beta1_0=data[:, 1], delta_0=data[:, 2], beta2_0=data[:, 3]
    )
    stats = SufficientStats(
        ybar1=data[:, 4], ybar2=data[:, 5], n1=cfg.n1, n2=cfg.n2, sigma=cfg.sigma
    )
    return cfg, truth, stats
