#!/usr/bin/env python3
"""Empirical exceedance of the sup-Psi statistic against its exponential tail bound.

Usage:
    uv run scripts/martingale.py --config tail.toml --set M=200
"""

from __future__ import annotations

import sys
from pathlib import Path

# Add parent directory to path for internal imports
sys.path.insert(0, str(Path(__file__).parent))

from internal.cli import RunContext, script_main
from internal.stats import gamma0, martingale_tail, run_trajectories


def run_martingale(ctx: RunContext) -> dict:
    """Run M trajectories and tabulate tail frequencies per R.

    Raises:
        ReportError: Zero noise, where the tail rate is undefined
    """
    # fail before spending time on the ensemble
    g = gamma0(ctx.params, ctx.basis)
    records = run_trajectories(ctx.ensemble_config(), workers=ctx.workers)
    sigma_sq = ctx.basis.sup_norm_sq
    excess = [r.psi_excess_sup for r in records]
    fixed = [r.psi_sup - r.E0 - 0.5 * sigma_sq * ctx.config.T for r in records]
    report = martingale_tail(excess, ctx.params, ctx.basis, ctx.config.R_grid, fixed_horizon_excess=fixed)
    rows = [v.as_row() for v in report.verdicts()]
    payload = {**report.to_dict(), "excess": excess}
    artifacts = ctx.write_report("martingale", payload, rows)
    return {
        "gamma0": g,
        "frequency": report.frequency,
        "bound": report.bound,
        "verdicts": rows,
        "artifacts": [str(p) for p in artifacts],
        "passed": all(r["passed"] for r in rows),
    }


def main(argv: list[str] | None = None) -> None:
    script_main("martingale", "Exponential martingale tail of sup Psi", run_martingale, argv)


if __name__ == "__main__":
    main()
