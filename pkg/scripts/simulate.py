#!/usr/bin/env python3
"""Integrate one trajectory and write its CSV, snapshots and checkpoint.

Usage:
    uv run scripts/simulate.py --config run.toml
    uv run scripts/simulate.py --config run.toml --set sigma0=0.2 --out runs/forced
    uv run scripts/simulate.py --config run.toml --resume runs/forced/checkpoint.json
"""

from __future__ import annotations

import sys
from pathlib import Path

# Add parent directory to path for internal imports
sys.path.insert(0, str(Path(__file__).parent))

from internal.cli import RunContext, script_main
from internal.persist import load_checkpoint, save_checkpoint, write_snapshot, write_trajectory_csv
from internal.solver import PathCheckpoint, integrate_path

TRAJECTORY_ID = 0


def run_simulate(ctx: RunContext) -> dict:
    """Run trajectory 0 of the configured seed.

    Returns:
        Dictionary with the record scalars and the written artifact paths
    """
    config = ctx.config
    checkpoint_path = ctx.out_dir / "checkpoint.json"
    resume = load_checkpoint(ctx.resume, ctx.digest, ctx.grid) if ctx.resume else None

    def on_checkpoint(checkpoint: PathCheckpoint) -> None:
        path = ctx.out_dir / f"checkpoint_step_{checkpoint.step_index}.json"
        save_checkpoint(checkpoint, path, ctx.digest)

    record = integrate_path(
        ctx.init,
        ctx.params,
        ctx.step,
        ctx.basis,
        config.seed,
        config.T,
        trajectory_id=TRAJECTORY_ID,
        sample_every=config.sample_every,
        snapshot_every=config.steps_per(config.snapshot_stride),
        resume=resume,
        checkpoint_every=config.steps_per(config.checkpoint_stride),
        on_checkpoint=on_checkpoint,
    )

    artifacts = [write_trajectory_csv(record, ctx.out_dir / f"trajectory_{TRAJECTORY_ID}.csv", ctx.digest)]
    for state in record.snapshots:
        step_index = round(state.time / config.dt)
        path = ctx.out_dir / "snapshots" / f"trajectory_{TRAJECTORY_ID}_step_{step_index}.json"
        artifacts.append(write_snapshot(state, path, ctx.digest, TRAJECTORY_ID))

    assert record.final_state is not None
    final = PathCheckpoint(record=record, state=record.final_state)
    artifacts.append(save_checkpoint(final, checkpoint_path, ctx.digest))
    artifacts.extend(ctx.write_report("simulate", {"record": record.scalars()}, []))
    return {
        "record": record.scalars(),
        "artifacts": [str(p) for p in artifacts],
        "passed": True,
    }


def main(argv: list[str] | None = None) -> None:
    script_main("simulate", "Integrate one stochastic trajectory", run_simulate, argv)


if __name__ == "__main__":
    main()
