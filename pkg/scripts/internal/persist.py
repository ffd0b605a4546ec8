"""Artifact persistence: state snapshots, trajectory CSVs and versioned checkpoints."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import orjson

from .errors import CheckpointError
from .field import GridSpec, State, make_grid
from .output import write_json
from .solver import CSV_COLUMNS, SAMPLE_COLUMNS, PathCheckpoint, TrajectoryRecord

CHECKPOINT_VERSION = 1
ACCUMULATORS = (
    "E0", "H0", "diss_u_cum", "diss_logrho_cum", "weighted_h2_cum", "balance_residual_cum",
    "energy_path_sup", "density_path_sup", "grad_u_sup", "mass_drift_max",
)


def state_to_dict(state: State) -> dict[str, Any]:
    return {
        "time": state.time,
        "n_cells": state.grid.n_cells,
        "rho": state.rho,
        "u": state.u,
    }


def state_from_dict(data: dict[str, Any], grid: GridSpec | None = None) -> State:
    grid = grid or make_grid(int(data["n_cells"]))
    return State(
        grid=grid,
        rho=np.asarray(data["rho"], dtype=np.float64),
        u=np.asarray(data["u"], dtype=np.float64),
        time=float(data["time"]),
    )


def write_snapshot(state: State, path: Path, digest: str, trajectory_id: int) -> Path:
    return write_json(
        {"config_hash": digest, "trajectory_id": trajectory_id, **state_to_dict(state)},
        path,
    )


def csv_text(record: TrajectoryRecord, digest: str) -> str:
    lines = [f"# config_hash={digest} trajectory_id={record.trajectory_id}", ",".join(CSV_COLUMNS)]
    columns = [record.samples[c] for c in CSV_COLUMNS]
    for row in zip(*columns):
        lines.append(",".join("%.17g" % v for v in row))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(record: TrajectoryRecord, path: Path, digest: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(record, digest))
    return path


def read_trajectory_csv(path: Path) -> tuple[str, dict[str, np.ndarray]]:
    """Return (config hash, columns) of a trajectory CSV."""
    with open(path) as f:
        first = f.readline().strip()
        header = f.readline().strip().split(",")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    digest = first.split("config_hash=", 1)[1].split()[0] if "config_hash=" in first else ""
    return digest, {name: data[:, i] for i, name in enumerate(header)}


def checkpoint_to_dict(checkpoint: PathCheckpoint, digest: str) -> dict[str, Any]:
    rec = checkpoint.record
    return {
        "version": CHECKPOINT_VERSION,
        "config_hash": digest,
        "trajectory_id": rec.trajectory_id,
        "step_index": checkpoint.step_index,
        "seed": rec.seed,
        "dt": rec.dt,
        "sample_every": rec.sample_every,
        "sigma_sup_sq": rec.sigma_sup_sq,
        "state": state_to_dict(checkpoint.state),
        "accumulators": {name: getattr(rec, name) for name in ACCUMULATORS},
        "psi_sup": rec.psi_sup,
        "psi_excess_sup": rec.psi_excess_sup,
        "samples": rec.samples,
        "snapshots": [state_to_dict(s) for s in rec.snapshots],
    }


def save_checkpoint(checkpoint: PathCheckpoint, path: Path, digest: str) -> Path:
    return write_json(checkpoint_to_dict(checkpoint, digest), path)


def load_checkpoint(path: Path, expected_hash: str, grid: GridSpec | None = None) -> PathCheckpoint:
    """Restore a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: Unreadable file, other version or a different config hash
    """
    try:
        data = orjson.loads(Path(path).read_bytes())
    except (OSError, orjson.JSONDecodeError) as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    version = data.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})",
            details={"version": version},
        )
    if data.get("config_hash") != expected_hash:
        raise CheckpointError(
            "Checkpoint was written for a different configuration",
            details={"checkpoint_hash": data.get("config_hash"), "config_hash": expected_hash},
        )
    missing = [c for c in SAMPLE_COLUMNS if c not in data["samples"]]
    if "snapshots" not in data:
        missing.append("snapshots")
    if missing:
        raise CheckpointError("Checkpoint is incomplete", details={"missing": missing})

    record = TrajectoryRecord(
        trajectory_id=int(data["trajectory_id"]),
        seed=int(data["seed"]),
        dt=float(data["dt"]),
        sample_every=int(data["sample_every"]),
        sigma_sup_sq=float(data["sigma_sup_sq"]),
        samples={c: [float(v) for v in data["samples"][c]] for c in SAMPLE_COLUMNS},
        steps=int(data["step_index"]),
        psi_sup=float(data["psi_sup"]),
        psi_excess_sup=float(data["psi_excess_sup"]),
        **{name: float(data["accumulators"][name]) for name in ACCUMULATORS},
    )
    state = state_from_dict(data["state"], grid)
    record.snapshots = [state_from_dict(s, state.grid) for s in data["snapshots"]]
    return PathCheckpoint(record=record, state=state)
