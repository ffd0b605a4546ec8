#!/usr/bin/env python3
"""Scan the pressure coefficient A with noise scaled by (A / A_base)^(-eta).

Usage:
    uv run scripts/lowmach.py --config lowmach.toml --set 'A_list=[1, 2, 4, 8]' --set eta=1.0
"""

from __future__ import annotations

import sys
from pathlib import Path

# Add parent directory to path for internal imports
sys.path.insert(0, str(Path(__file__).parent))

from internal.cli import RunContext, script_main
from internal.stats import low_mach_scan


def run_lowmach(ctx: RunContext) -> dict:
    """One ensemble per A; the configured A is the base of the scaling."""
    config = ctx.config
    scan = low_mach_scan(config.A_list, config.eta, ctx.ensemble_config(), A_base=config.A, workers=ctx.workers)
    rows = [v.as_row() for v in scan.verdicts()]
    artifacts = ctx.write_report("lowmach", scan.to_dict(), rows)
    return {
        **scan.to_dict(),
        "verdicts": rows,
        "artifacts": [str(p) for p in artifacts],
        "passed": all(r["passed"] for r in rows),
    }


def main(argv: list[str] | None = None) -> None:
    script_main("lowmach", "Low-Mach scan over the pressure coefficient", run_lowmach, argv)


if __name__ == "__main__":
    main()
