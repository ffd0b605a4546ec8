#!/usr/bin/env python3
"""Run M trajectories and check the entropy and energy inequalities in expectation.

Usage:
    uv run scripts/ensemble.py --config ensemble.toml
    uv run scripts/ensemble.py --config ensemble.toml --workers 8 --set M=50
"""

from __future__ import annotations

import sys
from pathlib import Path

# Add parent directory to path for internal imports
sys.path.insert(0, str(Path(__file__).parent))

from internal.cli import RunContext, script_main
from internal.persist import write_trajectory_csv
from internal.stats import run_ensemble


def run_ensemble_command(ctx: RunContext) -> dict:
    """Run the ensemble and write the summary record set.

    Returns:
        Dictionary with the verdicts, sup-Psi moments and artifact paths
    """
    summary = run_ensemble(ctx.ensemble_config(), workers=ctx.workers)
    artifacts = [
        write_trajectory_csv(r, ctx.out_dir / "trajectories" / f"trajectory_{r.trajectory_id}.csv", ctx.digest)
        for r in summary.records
    ]
    payload = summary.to_dict()
    rows = payload.pop("verdicts")
    if summary.exp_moment is not None:
        rows.append(summary.exp_moment.as_row())
    artifacts.extend(ctx.write_report("ensemble", payload, rows))
    return {
        "M": ctx.config.M,
        "verdicts": rows,
        "psi_sup_moments": payload["psi_sup_moments"],
        "artifacts": [str(p) for p in artifacts],
        "passed": summary.passed,
    }


def main(argv: list[str] | None = None) -> None:
    script_main("ensemble", "Ensemble expectations of the entropy and energy inequalities", run_ensemble_command, argv)


if __name__ == "__main__":
    main()
