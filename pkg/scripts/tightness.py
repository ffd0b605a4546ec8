#!/usr/bin/env python3
"""Time-averaged measure of a long trajectory: tightness, dissipation budget, stationarity.

Usage:
    uv run scripts/tightness.py --config long.toml --set T=200 --set T0=50
    uv run scripts/tightness.py --config long.toml --set M=5 --set T=125 --set T0=50
"""

from __future__ import annotations

import sys
from pathlib import Path

# Add parent directory to path for internal imports
sys.path.insert(0, str(Path(__file__).parent))

from internal.cli import RunContext, script_main
from internal.persist import write_trajectory_csv
from internal.stats import (
    StatVerdict,
    dissipation_budget,
    run_trajectories,
    stationarity_trend,
    tightness_report,
    time_averaged_measure,
)

STATIONARITY_OBSERVABLE = "grad_u_sq"


def run_tightness(ctx: RunContext) -> dict:
    """Build the measure of trajectory 0 over (T0, T] and report on it.

    With M >= 2 the KS stationarity trend is computed over all trajectories,
    using window lengths (T - T0) / 3 and twice that.
    """
    config = ctx.config
    records = run_trajectories(ctx.ensemble_config(), workers=ctx.workers)
    measure = time_averaged_measure(records[0], config.T0, config.T)
    tightness = tightness_report(measure, ctx.params, ctx.basis, config.R_grid)
    budget = dissipation_budget(measure, ctx.params, ctx.basis)

    rows = [v.as_row() for v in tightness.verdicts()]
    rows.append(budget.verdict.as_row())
    payload = {
        "samples": measure.count,
        "tightness": tightness.to_dict(),
        "budget": budget.to_dict(),
    }
    if len(records) >= 2:
        short = (config.T - config.T0) / 3
        trend = stationarity_trend(records, STATIONARITY_OBSERVABLE, config.T0, short, 2 * short)
        rows.append(StatVerdict("stationarity_trend", "invariance of the limit measure",
                                float(trend.required), float(trend.decreases)).as_row())
        payload["stationarity"] = trend.to_dict()

    artifacts = [write_trajectory_csv(r, ctx.out_dir / f"trajectory_{r.trajectory_id}.csv", ctx.digest) for r in records]
    artifacts.extend(ctx.write_report("tightness", payload, rows))
    return {
        **payload,
        "verdicts": rows,
        "artifacts": [str(p) for p in artifacts],
        "passed": all(r["passed"] for r in rows),
    }


def main(argv: list[str] | None = None) -> None:
    script_main("tightness", "Tightness and dissipation budget of the time-averaged measure", run_tightness, argv)


if __name__ == "__main__":
    main()
