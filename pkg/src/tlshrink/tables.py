"""Built-in benchmark table grids (t1..t5) and their consistency checks.

Five tables, each a 15-row grid over p in {100, 500, 1000, 5000, 10000} and
n2 in {1, 5, 30} with sigma = 1 and alpha = 0.2:

- t1: sparse differences, abundant source data (gamma = 0.2); methods MLE,
  two-stage JS, two-stage sparse-prior Gibbs, thresholding baseline.
- t2: sparse, n1 = p (gamma = 0); both first-stage choices for each
  two-stage method.
- t3: sparse, source-starved (gamma = -0.2); same methods as t2.
- t4: bounded differences, gamma = 0.2; ridge sharing, two-stage JS,
  distance-penalized sampler, target-only JS.
- t5: bounded, gamma = 0; same methods as t4.

All sampler methods in these grids treat the noise scale as known
(fix_sigma = "known" resolves to the scenario sigma): the source task pins
sigma to high precision, and with sigma free both samplers can move to a
legitimate but useless posterior mode that explains every task difference
as inflated noise (see the sampler tests).  Free-sigma sampling remains the
library default outside the benchmark grids.
"""

from __future__ import annotations

import math

from .harness import ExperimentPlan, MethodSpec
from .simgen import Case, ScenarioConfig

__all__ = ["TABLES", "build_plan", "check_rows"]

_P_GRID = (100, 500, 1000, 5000, 10_000)
_N2_GRID = (1, 5, 30)

_HS_KNOWN = {"hs": {"fix_sigma": "known"}}
_PCP_KNOWN = {"pcp": {"fix_sigma": "known"}}


def _sparse_methods(both_first_stages: bool) -> tuple:
    methods = [
        MethodSpec("mle", "MLE"),
        MethodSpec("two_stage", "JS", {"first_stage": "MLE", "second_stage": "JS"}),
        MethodSpec(
            "two_stage", "HS",
            {"first_stage": "MLE", "second_stage": "HS_GIBBS", **_HS_KNOWN},
        ),
    ]
    if both_first_stages:
        methods += [
            MethodSpec(
                "two_stage", "JS1_MLE", {"first_stage": "JS", "second_stage": "MLE"}
            ),
            MethodSpec(
                "two_stage", "JS1_JS", {"first_stage": "JS", "second_stage": "JS"}
            ),
            MethodSpec(
                "two_stage", "JS1_HS",
                {"first_stage": "JS", "second_stage": "HS_GIBBS", **_HS_KNOWN},
            ),
        ]
    methods.append(MethodSpec("trans_lasso", "TRANS_LASSO", {"tuning": "sure"}))
    return tuple(methods)


def _bounded_methods() -> tuple:
    return (
        MethodSpec("sps", "SPS"),
        MethodSpec("two_stage", "JS", {"first_stage": "MLE", "second_stage": "JS"}),
        MethodSpec("pcp", "PCP", _PCP_KNOWN),
        MethodSpec("js_target", "JS_TARGET"),
    )


TABLES = {
    "t1": {"case": Case.SPARSE, "gamma": 0.2, "methods": _sparse_methods(False)},
    "t2": {"case": Case.SPARSE, "gamma": 0.0, "methods": _sparse_methods(True)},
    "t3": {"case": Case.SPARSE, "gamma": -0.2, "methods": _sparse_methods(True)},
    "t4": {"case": Case.BOUNDED, "gamma": 0.2, "methods": _bounded_methods()},
    "t5": {"case": Case.BOUNDED, "gamma": 0.0, "methods": _bounded_methods()},
}


def build_plan(
    table: str,
    reps: int = 200,
    seed: int = 0,
    output_path: str = "",
    overrides: dict | None = None,
) -> ExperimentPlan:
    """Experiment plan for one named table at desk scale.

    ``overrides`` updates sampler options by dotted path, e.g.
    {"hs.iterations": 4000} or {"pcp.burn_in": 500}; they apply to every
    method of the matching kind.
    """
    if table not in TABLES:
        raise ValueError(f"table must be one of {sorted(TABLES)}, got {table!r}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    spec = TABLES[table]
    scenarios = tuple(
        ScenarioConfig(
            p=p, alpha=0.2, gamma=spec["gamma"], n2=n2, sigma=1.0, case=spec["case"]
        )
        for p in _P_GRID
        for n2 in _N2_GRID
    )
    methods = spec["methods"]
    if overrides:
        methods = tuple(_apply_overrides(m, overrides) for m in methods)
    return ExperimentPlan(
        scenarios=scenarios,
        methods=methods,
        replications=reps,
        seed=seed,
        output_path=output_path,
    )


def _apply_overrides(spec: MethodSpec, overrides: dict) -> MethodSpec:
    params = {k: dict(v) if isinstance(v, dict) else v for k, v in spec.params.items()}
    for path, value in overrides.items():
        head, _, tail = path.partition(".")
        if head in ("hs", "pcp") and tail:
            if head in params:
                params[head][tail] = value
        elif not tail:
            params[head] = value
    return MethodSpec(spec.kind, spec.label, params)


def _cells(rows, method):
    return {(r["p"], r["n2"]): r["mse"] for r in rows if r["method"] == method}


def check_rows(table: str, rows: list) -> list:
    """Reference-behavior checks for a table's rows; returns failure strings.

    t1/t3 check the core transfer claim (sparse-prior column beats the MLE
    in every row).  t2 and t5 additionally encode reference values from the
    original study of this design (a first-stage-bias blowup and a bounded-
    case negative-transfer regime) that are not derivable from the printed
    estimator definitions; those checks are expected to fail and say so.
    """
    failures = []
    if table in ("t1", "t2", "t3"):
        hs = _cells(rows, "HS")
        mle = _cells(rows, "MLE")
        for key in sorted(mle):
            if not (hs[key] < mle[key]):
                failures.append(
                    f"{table}: HS {hs[key]:.3f} !< MLE {mle[key]:.3f} at (p,n2)={key}"
                )
    if table == "t2":
        js1hs = _cells(rows, "JS1_HS")
        for (p, n2), v in sorted(js1hs.items()):
            if n2 == 1 and not (v > 4.0):
                failures.append(
                    f"t2: first-stage-JS HS column {v:.3f} !> 4 at p={p} "
                    "(reference value not reproducible from the printed "
                    "estimator; see README)"
                )
    if table == "t4":
        pcp = _cells(rows, "PCP")
        tjs = _cells(rows, "JS_TARGET")
        for key in sorted(pcp):
            if not (pcp[key] <= tjs[key] * 1.1):
                failures.append(
                    f"t4: PCP {pcp[key]:.3f} not <= 1.1x target-JS {tjs[key]:.3f} "
                    f"at (p,n2)={key}"
                )
    if table == "t5":
        pcp = _cells(rows, "PCP")
        tjs = _cells(rows, "JS_TARGET")
        for (p, n2), v in sorted(pcp.items()):
            if n2 == 30 and not (v > tjs[(p, n2)]):
                failures.append(
                    f"t5: PCP {v:.3f} !> target-JS {tjs[(p, n2)]:.3f} at p={p} "
                    "(reference negative-transfer regime not reproducible "
                    "from the printed sampler; see README)"
                )
    if not any(math.isfinite(r["mse"]) for r in rows):
        failures.append(f"{table}: no finite cells")
    return failures
