"""Command-line surface: thin wrappers binding JSON configs to library calls.

Subcommands: simulate, estimate, sample, reproduce, report.  No numerical
logic lives here; every code path delegates to a library function with the
parsed configuration.  Exit codes: 0 success, 1 configuration error,
2 numerical failure, 3 reproduction-check failure (reproduce --check).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import Method, RngStream, summarize
from .classical import TwoStageConfig, js_target, mle_target, two_stage_estimate
from .baselines import SpsConfig, TransLassoConfig, sps_ridge, trans_lasso_means
from .harness import emit_report, run_experiment
from .hs_gibbs import HsOptions, hs_gibbs_run
from .pcp import PcpOptions, pcp_run
from .simgen import ScenarioConfig, export_scenario_csv, gen_observed, gen_truth, load_scenario_csv
from .tables import build_plan, check_rows

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_CHECK = 3


class ConfigError(ValueError):
    pass


def _load_json_config(path: str, overrides) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if raw.get("schema_version") != 1:
        raise ConfigError("config field 'schema_version' must be 1")
    for item in overrides or []:
        key, _, value = item.partition("=")
        if not _:
            raise ConfigError(f"override {item!r} is not key=value")
        _set_dotted(raw, key, _parse_literal(value))
    return raw


def _parse_literal(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_dotted(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {dotted!r} crosses non-object field")
    node[parts[-1]] = value


def _scenario_from_config(raw: dict) -> ScenarioConfig:
    fields = {k: v for k, v in raw.items() if k != "schema_version"}
    try:
        return ScenarioConfig(**fields)
    except TypeError as exc:
        # argument name is embedded in the TypeError text
        raise ConfigError(f"bad scenario config: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad scenario config: {exc}") from exc


def _cmd_simulate(args) -> int:
    raw = _load_json_config(args.config, args.set)
    cfg = _scenario_from_config(raw)
    rng = RngStream(args.seed)
    truth = gen_truth(cfg, rng.child(0))
    stats = gen_observed(truth, cfg, rng.child(1))
    out = args.out or "scenario.csv"
    export_scenario_csv(out, cfg, truth, stats)
    print(f"wrote {out}")
    return EXIT_OK


def _estimate_from_method(raw_method: dict, stats, seed: int):
    kind = raw_method.get("method")
    params = raw_method.get("params", {})
    rng = RngStream(seed)
    if kind == "MLE":
        return mle_target(stats), None
    if kind == "JS_TARGET":
        return js_target(stats), None
    if kind in ("JS", "HS_ANALYTIC", "HS_GIBBS"):
        ts = TwoStageConfig(
            first_stage=Method(params.get("first_stage", "MLE")),
            second_stage=Method(kind),
        )
        hs_opts = HsOptions(**params.get("hs", {})) if "hs" in params else None
        return (
            two_stage_estimate(stats, ts, hs_opts=hs_opts, tau=params.get("tau"), rng=rng),
            None,
        )
    if kind == "TRANS_LASSO":
        return trans_lasso_means(stats, TransLassoConfig(**params)), None
    if kind == "SPS":
        return sps_ridge(stats, SpsConfig(**params)), None
    if kind == "PCP":
        draws = pcp_run(stats, PcpOptions(**params.get("pcp", {})), rng)
        return summarize(draws, method=Method.PCP), draws
    raise ConfigError(f"unknown 'method' field value: {kind!r}")


def _cmd_estimate(args) -> int:
    raw = _load_json_config(args.config, args.set)
    if "scenario_csv" not in raw:
        raise ConfigError("config missing field 'scenario_csv'")
    if "method" not in raw:
        raise ConfigError("config missing field 'method'")
    _, _, stats = load_scenario_csv(raw["scenario_csv"])
    est, _ = _estimate_from_method(raw, stats, args.seed)
    lines = ["j,estimate" + (",lower95,upper95" if est.lower95 is not None else "")]
    for j in range(stats.p):
        row = f"{j},{float(est.point[j])!r}"
        if est.lower95 is not None:
            row += f",{float(est.lower95[j])!r},{float(est.upper95[j])!r}"
        lines.append(row)
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    diag = {"method": est.method.value, **est.diagnostics}
    print(json.dumps({"diagnostics": diag}), file=sys.stderr)
    return EXIT_OK


def _cmd_sample(args) -> int:
    raw = _load_json_config(args.config, args.set)
    for fld in ("scenario_csv", "sampler"):
        if fld not in raw:
            raise ConfigError(f"config missing field {fld!r}")
    _, _, stats = load_scenario_csv(raw["scenario_csv"])
    rng = RngStream(args.seed)
    out = args.out or "draws.csv"
    sampler = raw["sampler"]
    if sampler == "hs":
        opts = HsOptions(**{**raw.get("hs", {}), "dump_path": out})
        draws = hs_gibbs_run(stats, opts, rng)
    elif sampler == "pcp":
        opts = PcpOptions(**{**raw.get("pcp", {}), "dump_path": out})
        draws = pcp_run(stats, opts, rng)
    else:
        raise ConfigError("config field 'sampler' must be 'hs' or 'pcp'")
    print(json.dumps({"n_draws": draws.n_draws, "diagnostics": draws.diagnostics}))
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    if args.reps < 50:
        raise ConfigError("reproduce needs --reps >= 50 for meaningful tables")
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        overrides[key] = _parse_literal(value)
    plan = build_plan(args.table, reps=args.reps, seed=args.seed, overrides=overrides)
    rows = run_experiment(plan, workers=args.workers)
    out = args.out or f"{args.table}.csv"
    emit_report(rows, out, seed=args.seed)
    print(f"wrote {out}")
    if any(r.error for r in rows):
        for r in rows:
            if r.error:
                print(f"cell error: {r.method} p={r.p} n2={r.n2}: {r.error}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.check:
        from .harness import load_report

        failures = check_rows(args.table, load_report(out))
        for f in failures:
            print(f"CHECK FAIL {f}", file=sys.stderr)
        if failures:
            return EXIT_CHECK
        print("all checks passed")
    return EXIT_OK


def _cmd_report(args) -> int:
    from .report import render_report

    written = render_report(args.input, args.out or ".")
    for w in written:
        print(f"wrote {w}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tlshrink",
        description="Two-stage Bayesian shrinkage estimators for transfer "
        "learning, with a Monte Carlo benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a scenario CSV from a config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", default=None)
    sim.add_argument("--set", action="append", metavar="KEY=VALUE")
    sim.set_defaults(func=_cmd_simulate)

    est = sub.add_parser("estimate", help="run one estimator on a scenario file")
    est.add_argument("--config", required=True)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--out", default=None)
    est.add_argument("--set", action="append", metavar="KEY=VALUE")
    est.set_defaults(func=_cmd_estimate)

    smp = sub.add_parser("sample", help="run a sampler and dump its draws to CSV")
    smp.add_argument("--config", required=True)
    smp.add_argument("--seed", type=int, default=0)
    smp.add_argument("--out", default=None)
    smp.add_argument("--set", action="append", metavar="KEY=VALUE")
    smp.set_defaults(func=_cmd_sample)

    rep = sub.add_parser("reproduce", help="run a built-in benchmark table grid")
    rep.add_argument("table", choices=["t1", "t2", "t3", "t4", "t5"])
    rep.add_argument("--reps", type=int, default=200)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--out", default=None)
    rep.add_argument("--workers", type=int, default=1)
    rep.add_argument("--check", action="store_true")
    rep.add_argument("--set", action="append", metavar="KEY=VALUE")
    rep.set_defaults(func=_cmd_reproduce)

    rpt = sub.add_parser("report", help="render summary CSV and figures from rows")
    rpt.add_argument("--in", dest="input", required=True)
    rpt.add_argument("--out", default=None)
    rpt.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
