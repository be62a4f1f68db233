"""Monte Carlo experiment runner: replication loops, metrics, theory checks,
and CSV report emission.

Determinism contract: every (scenario, replication) pair owns streams
derived from the plan seed by index, and results are merged in replication
order, so reports are byte-identical for any worker count and across
re-runs (wall-clock timings are recorded as comment lines, outside the
data rows, to keep the rows reproducible).
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .baselines import SpsConfig, TransLassoConfig, sps_ridge, trans_lasso_means
from .classical import TwoStageConfig, js_target, mle_target, two_stage_estimate
from .core import EstimateResult, Method, RngStream, summarize
from .hs_gibbs import HsOptions
from .pcp import PcpOptions, pcp_run
from .simgen import Case, ScenarioConfig, gen_observed, gen_truth

__all__ = [
    "MethodSpec",
    "ExperimentPlan",
    "ExperimentRow",
    "mse",
    "run_experiment",
    "risk_bound_check",
    "RiskBoundResult",
    "emit_report",
    "load_plan",
]


def mse(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Per-component average squared error.

    The per-component normalization is pinned by the target-MLE anchor: at
    n2 = 1 and sigma = 1 its value is ~1.0 for any p.
    """
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError(
            f"length mismatch: {estimate.shape} vs {truth.shape}"
        )
    diff = estimate - truth
    return float(diff @ diff) / truth.size


@dataclass(frozen=True)
class MethodSpec:
    """One benchmark method: a kind tag, a display label, and parameters.

    Kinds: "mle", "js_target", "two_stage" (params: first_stage,
    second_stage, tau, hs options), "trans_lasso", "sps", "pcp".
    """

    kind: str
    label: str
    params: dict = field(default_factory=dict)

    _KINDS = ("mle", "js_target", "two_stage", "trans_lasso", "sps", "pcp")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"method kind must be one of {self._KINDS}")


@dataclass(frozen=True)
class ExperimentPlan:
    scenarios: tuple
    methods: tuple
    replications: int
    seed: int
    output_path: str = ""

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.methods:
            raise ValueError("method list must be non-empty")
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "methods", tuple(self.methods))


@dataclass(frozen=True)
class ExperimentRow:
    """One (scenario x method) cell of a benchmark table."""

    p: int
    q: Optional[int]
    n1: int
    n2: int
    case: str
    method: str
    mse: float
    mcse: float
    coverage: Optional[float]
    wall_time_s: float
    error: str = ""


def _resolve_fix_sigma(value, cfg: ScenarioConfig):
    """The sentinel "known" pins the sampler at the scenario's noise scale."""
    if value == "known":
        return cfg.sigma
    return value


def _hs_options_for(cfg: ScenarioConfig, params: dict) -> HsOptions:
    """Sampler options with automatic thinning so retained draws stay ~1e3
    for very large p (memory control; the posterior mean is unaffected)."""
    opts = params.get("hs", {})
    iterations = int(opts.get("iterations", 10_000))
    burn_in = int(opts.get("burn_in", 2_000))
    thin = int(opts.get("thin", 0))
    if thin < 1:
        thin = max(1, (iterations - burn_in) // 1000) if cfg.p >= 5000 else 1
    return HsOptions(
        iterations=iterations,
        burn_in=burn_in,
        thin=thin,
        a=float(opts.get("a", 0.5)),
        b=float(opts.get("b", 0.5)),
        fix_tau=opts.get("fix_tau"),
        fix_sigma=_resolve_fix_sigma(opts.get("fix_sigma"), cfg),
    )


def _pcp_options_for(cfg: ScenarioConfig, params: dict) -> PcpOptions:
    opts = params.get("pcp", {})
    iterations = int(opts.get("iterations", 10_000))
    burn_in = int(opts.get("burn_in", 2_000))
    thin = int(opts.get("thin", 0))
    if thin < 1:
        thin = max(1, (iterations - burn_in) // 1000) if cfg.p >= 5000 else 1
    return PcpOptions(
        lam=float(opts.get("lam", 1.0)),
        iterations=iterations,
        burn_in=burn_in,
        thin=thin,
        a=float(opts.get("a", 0.5)),
        b=float(opts.get("b", 0.5)),
        target_accept=float(opts.get("target_accept", 0.44)),
        sigma2_shape=opts.get("sigma2_shape", "derived"),
        fix_sigma=_resolve_fix_sigma(opts.get("fix_sigma"), cfg),
    )


def apply_method(
    spec: MethodSpec, cfg: ScenarioConfig, stats, rng: RngStream
) -> EstimateResult:
    """Run one method on one replication's sufficient statistics."""
    params = spec.params
    if spec.kind == "mle":
        return mle_target(stats)
    if spec.kind == "js_target":
        return js_target(stats)
    if spec.kind == "two_stage":
        ts = TwoStageConfig(
            first_stage=Method(params.get("first_stage", "MLE")),
            second_stage=Method(params.get("second_stage", "HS_GIBBS")),
        )
        return two_stage_estimate(
            stats, ts,
            hs_opts=_hs_options_for(cfg, params),
            tau=params.get("tau"),
            rng=rng,
        )
    if spec.kind == "trans_lasso":
        tl = TransLassoConfig(
            lambda_w=float(params.get("lambda_w", 0.0)),
            lambda_delta=float(params.get("lambda_delta", 0.0)),
            auto=bool(params.get("auto", True)),
            tuning=params.get("tuning", "universal"),
        )
        return trans_lasso_means(stats, tl)
    if spec.kind == "sps":
        return sps_ridge(stats, SpsConfig(lambda_ridge=params.get("lambda_ridge")))
    if spec.kind == "pcp":
        draws = pcp_run(stats, _pcp_options_for(cfg, params), rng)
        return summarize(draws, method=Method.PCP)
    raise ValueError(f"unknown method kind {spec.kind!r}")


def _run_replication(plan: ExperimentPlan, scen_idx: int, rep: int):
    """All methods on one replication; returns per-method (mse, coverage, sec)."""
    cfg = plan.scenarios[scen_idx]
    root = RngStream(plan.seed).child(scen_idx, rep)
    truth = gen_truth(cfg, root.child(0))
    stats = gen_observed(truth, cfg, root.child(1))
    out = []
    for m_idx, spec in enumerate(plan.methods):
        t0 = time.perf_counter()
        try:
            est = apply_method(spec, cfg, stats, root.child(2 + m_idx))
            cell_mse = mse(est.point, truth.beta2_0)
            cover = None
            if est.lower95 is not None:
                inside = (est.lower95 <= truth.beta2_0) & (
                    truth.beta2_0 <= est.upper95
                )
                cover = float(np.mean(inside))
            out.append((cell_mse, cover, time.perf_counter() - t0, ""))
        except Exception as exc:  # recorded, aborts the cell
            out.append((math.nan, None, time.perf_counter() - t0, repr(exc)))
    return out


def run_experiment(plan: ExperimentPlan, workers: int = 1) -> list:
    """Execute the plan and aggregate one row per (scenario x method).

    Replications are independent tasks with pre-assigned streams; with
    ``workers > 1`` they run in separate processes, and the merge by
    replication index keeps results identical to a serial run.
    """
    rows = []
    for scen_idx, cfg in enumerate(plan.scenarios):
        reps = range(plan.replications)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                per_rep = list(
                    pool.map(
                        _run_replication,
                        [plan] * plan.replications,
                        [scen_idx] * plan.replications,
                        reps,
                        chunksize=max(1, plan.replications // (4 * workers)),
                    )
                )
        else:
            per_rep = [_run_replication(plan, scen_idx, r) for r in reps]

        q = cfg.q if cfg.case == Case.SPARSE else None
        for m_idx, spec in enumerate(plan.methods):
            vals = np.array([per_rep[r][m_idx][0] for r in reps])
            covers = [per_rep[r][m_idx][1] for r in reps]
            secs = float(sum(per_rep[r][m_idx][2] for r in reps))
            errs = [per_rep[r][m_idx][3] for r in reps if per_rep[r][m_idx][3]]
            if errs:
                rows.append(
                    ExperimentRow(
                        p=cfg.p, q=q, n1=cfg.n1, n2=cfg.n2, case=cfg.case,
                        method=spec.label, mse=math.nan, mcse=math.nan,
                        coverage=None, wall_time_s=secs, error=errs[0],
                    )
                )
                continue
            mean_mse = float(vals.mean())
            se = (
                float(vals.std(ddof=1) / math.sqrt(len(vals)))
                if len(vals) > 1
                else 0.0
            )
            cover = (
                float(np.mean([c for c in covers if c is not None]))
                if any(c is not None for c in covers)
                else None
            )
            rows.append(
                ExperimentRow(
                    p=cfg.p, q=q, n1=cfg.n1, n2=cfg.n2, case=cfg.case,
                    method=spec.label, mse=mean_mse, mcse=se,
                    coverage=cover, wall_time_s=secs,
                )
            )
    return rows


@dataclass(frozen=True)
class RiskBoundResult:
    rhs: float
    satisfied: bool
    assumptions_met: bool
    note: str = ""


def risk_bound_check(
    scenario: ScenarioConfig, empirical_risk: float, slack: float = 1.0
) -> RiskBoundResult:
    """Compare empirical total risk against the sparse-case risk bound.

    The bound's right-hand side is
        (p/n1) sigma^2 + [sigma_n^2 q log(p/q)
                          - (sigma^2/n1) (q + (p-q) tau sqrt(log 1/tau))]
    with tau = (q/p)^alpha_bound and alpha_bound = 1.  ``empirical_risk``
    is per-component (as reported by the harness) and is converted to total
    risk; ``slack`` multiplies the right-hand side to absorb the bound's
    asymptotic 1 + o(1) factor (the acceptance checks use 2).

    Preconditions are checked at runtime: the fraction of nonzero
    differences must vanish (q < p) and the nonzero differences must exceed
    the detection threshold sqrt(2 sigma_n^2 log(p/q)); otherwise the result
    is marked "assumptions unmet" rather than failed.
    """
    p, q = scenario.p, scenario.q
    if scenario.case != Case.SPARSE:
        return RiskBoundResult(math.nan, False, False, "assumptions unmet: not sparse")
    if q >= p:
        return RiskBoundResult(math.nan, False, False, "assumptions unmet: q = p")
    sigma2 = scenario.sigma**2
    n1 = scenario.n1
    sigma_n2 = sigma2 * (1.0 / n1 + 1.0 / scenario.n2)
    threshold = math.sqrt(2.0 * sigma_n2 * math.log(p / q))
    if scenario.signal_mean < threshold:
        return RiskBoundResult(
            math.nan, False, False,
            f"assumptions unmet: signal mean {scenario.signal_mean} below "
            f"threshold {threshold:.3f}",
        )
    tau = q / p
    rhs = (p / n1) * sigma2 + (
        sigma_n2 * q * math.log(p / q)
        - (sigma2 / n1) * (q + (p - q) * tau * math.sqrt(math.log(1.0 / tau)))
    )
    total = empirical_risk * p
    return RiskBoundResult(rhs=rhs, satisfied=total <= slack * rhs, assumptions_met=True)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(float(x))
    return str(x)


REPORT_COLUMNS = ("p", "q", "n1", "n2", "case", "method", "mse", "mcse", "coverage", "error")


def emit_report(rows: list, path, seed: Optional[int] = None) -> None:
    """Write rows as CSV with a provenance comment header.

    Data lines are byte-stable across runs of the same plan; the timestamp
    and per-cell wall-clock timings live in '#' comment lines so they never
    perturb row-level comparisons.
    """
    if not rows:
        raise ValueError("no rows to report")
    lines = [
        f"# tlshrink-{__version__}",
        f"# seed={'' if seed is None else seed}",
        f"# timestamp={time.strftime('%Y-%m-%dT%H:%M:%S%z')}",
    ]
    for row in rows:
        lines.append(
            f"# timing: {row.case},{row.p},{row.n2},{row.method},"
            f"{row.wall_time_s:.3f}s"
        )
    lines.append(",".join(REPORT_COLUMNS))
    for row in rows:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    row.p, row.q, row.n1, row.n2, row.case, row.method,
                    row.mse, row.mcse, row.coverage, row.error,
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_report(path) -> list:
    """Read back the data rows of a report CSV as dictionaries."""
    lines = [
        ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")
    ]
    header = lines[0].split(",")
    if tuple(header) != REPORT_COLUMNS:
        raise ValueError(f"unexpected report columns {header}")
    out = []
    for ln in lines[1:]:
        vals = ln.split(",")
        rec = dict(zip(header, vals))
        for key in ("mse", "mcse", "coverage"):
            rec[key] = float(rec[key]) if rec[key] not in ("", "nan") else math.nan
        for key in ("p", "n1", "n2"):
            rec[key] = int(rec[key])
        rec["q"] = int(rec["q"]) if rec["q"] else None
        out.append(rec)
    return out


def _scenario_from_dict(d: dict, where: str) -> ScenarioConfig:
    try:
        return ScenarioConfig(**d)
    except TypeError as exc:
        raise ValueError(f"{where}: {exc}") from exc


def load_plan(path) -> ExperimentPlan:
    """Parse a JSON experiment plan (schema_version 1).

    Top-level fields: schema_version, seed, replications, output_path,
    scenarios (list of scenario configs by field name), methods (list of
    {kind, label, params}).  Errors name the offending field.
    """
    raw = json.loads(Path(path).read_text())
    if raw.get("schema_version") != 1:
        raise ValueError("config field 'schema_version' must be 1")
    for fld in ("seed", "replications", "scenarios", "methods"):
        if fld not in raw:
            raise ValueError(f"config missing field {fld!r}")
    scenarios = [
        _scenario_from_dict(s, f"scenarios[{i}]")
        for i, s in enumerate(raw["scenarios"])
    ]
    methods = []
    for i, m in enumerate(raw["methods"]):
        if "kind" not in m:
            raise ValueError(f"methods[{i}] missing field 'kind'")
        methods.append(
            MethodSpec(
                kind=m["kind"],
                label=m.get("label", m["kind"]),
                params=m.get("params", {}),
            )
        )
    return ExperimentPlan(
        scenarios=tuple(scenarios),
        methods=tuple(methods),
        replications=int(raw["replications"]),
        seed=int(raw["seed"]),
        output_path=raw.get("output_path", ""),
    )
