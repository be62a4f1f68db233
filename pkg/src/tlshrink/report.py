"""Rendering of experiment reports: summary tables and static figures.

Takes the row CSV written by the harness and produces, side by side in the
output directory, a pivoted summary CSV (one column per method) and one PNG
per target sample size plotting MSE against dimension for every method.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import load_report  # noqa: E402

__all__ = ["render_report"]


def _pivot(rows):
    methods = sorted({r["method"] for r in rows})
    keys = sorted({(r["case"], r["n2"], r["p"]) for r in rows})
    table = {}
    for r in rows:
        table[(r["case"], r["n2"], r["p"], r["method"])] = r
    return methods, keys, table


def render_report(rows_csv, out_dir) -> list:
    """Write summary.csv and mse_vs_p_*.png next to each other; returns paths."""
    rows = load_report(rows_csv)
    if not rows:
        raise ValueError("report has no data rows")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    methods, keys, table = _pivot(rows)
    written = []

    summary = out / "summary.csv"
    lines = ["case,n2,p," + ",".join(methods)]
    for case, n2, p in keys:
        cells = []
        for m in methods:
            r = table.get((case, n2, p, m))
            cells.append("" if r is None else f"{r['mse']:.6g}")
        lines.append(f"{case},{n2},{p}," + ",".join(cells))
    summary.write_text("\n".join(lines) + "\n")
    written.append(summary)

    for case in sorted({k[0] for k in keys}):
        for n2 in sorted({k[1] for k in keys if k[0] == case}):
            fig, ax = plt.subplots(figsize=(6.0, 4.0))
            for m in methods:
                pts = [
                    (p, table[(case, n2, p, m)]["mse"], table[(case, n2, p, m)]["mcse"])
                    for (c2, nn, p) in keys
                    if c2 == case and nn == n2 and (case, n2, p, m) in table
                ]
                if not pts:
                    continue
                ps = [t[0] for t in pts]
                ms = [t[1] for t in pts]
                es = [t[2] for t in pts]
                ax.errorbar(ps, ms, yerr=es, marker="o", capsize=2, label=m)
            ax.set_xscale("log")
            ax.set_xlabel("dimension p")
            ax.set_ylabel("MSE per component")
            ax.set_title(f"{case.lower()} case, n2 = {n2}")
            ax.legend(fontsize=8)
            fig.tight_layout()
            png = out / f"mse_vs_p_{case.lower()}_n2_{n2}.png"
            fig.savefig(png, dpi=150)
            plt.close(fig)
            written.append(png)
    return [str(w) for w in written]
