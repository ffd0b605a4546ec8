#!/usr/bin/env python3
"""Deterministic and pathwise inequality checks of the discretization.

Checks, each one verdict row:
    entropy balance residual halves with dt (noise off)
    mass conservation and positivity of a forced run
    density/energy bounds, weighted Poincare and relative-entropy sandwich on snapshots
    identical initial data under identical noise stay bitwise equal
    a small density perturbation stays under twice its Gronwall envelope
    smaller perturbations give smaller relative entropy at every sample time

Usage:
    uv run scripts/verify.py --config verify.toml
    uv run scripts/verify.py --config verify.toml --set verify_T=0.1 --set n_cells=256
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

# Add parent directory to path for internal imports
sys.path.insert(0, str(Path(__file__).parent))

from internal.cli import RunContext, script_main
from internal.field import State, new_state
from internal.functionals import enbounds_check, relative_entropy_bounds, weighted_poincare_verdict
from internal.noise import build_noise
from internal.solver import PairedResult, StepSpec, integrate_path, paired_paths, steps_for
from internal.stats import StatVerdict

BALANCE_RATIO_WINDOW = (1.6, 2.4)
MASS_GATE = 1e-11
BOUND_SLACK = 1e-6
ENVELOPE_FACTOR = 2.0
RELATIVE_ENTROPY_CEILING = 1e-9


def perturbed_state(state: State, amplitude: float) -> State:
    """Add amplitude * sqrt(2) cos(2 pi x), of unit L^2 norm, to the density."""
    shape = math.sqrt(2.0) * np.cos(2.0 * np.pi * state.grid.centers)
    perturbed, _ = new_state(state.grid, state.rho + amplitude * shape, state.u, state.time)
    return perturbed


def _tagged(row: dict, time: float) -> dict:
    return {**row, "name": f"{row['name']}@t={time:g}"}


def balance_rows(ctx: RunContext) -> tuple[list[dict], dict]:
    """Entropy balance residual at dt and dt/2 with the noise switched off."""
    config = ctx.config
    quiet = build_noise(ctx.grid, config.K, 0.0, config.p)
    residuals = []
    for dt in (config.dt, config.dt / 2):
        step = StepSpec(dt=dt, cfl_max=config.cfl_max)
        record = integrate_path(
            ctx.init, ctx.params, step, quiet, config.seed, config.verify_T,
            sample_every=steps_for(config.verify_T, dt),
            track_balance=True,
        )
        residuals.append(record.balance_residual_cum)

    coarse, fine = residuals
    low, high = BALANCE_RATIO_WINDOW
    if coarse == 0.0:
        # equilibrium: the scheme is exact
        ratio = 0.0
        rows = [StatVerdict("entropy_balance_exact", "entropy balance", coarse, 0.0).as_row()]
    else:
        ratio = coarse / fine if fine > 0 else math.inf
        rows = [
            StatVerdict("entropy_balance_ratio_low", "entropy balance", low, ratio).as_row(),
            StatVerdict("entropy_balance_ratio_high", "entropy balance", ratio, high).as_row(),
        ]
    return rows, {"residual_dt": coarse, "residual_half_dt": fine, "ratio": ratio}


def forced_rows(ctx: RunContext) -> tuple[list[dict], dict]:
    """Gates and snapshot inequalities along one forced trajectory."""
    config = ctx.config
    record = integrate_path(
        ctx.init, ctx.params, ctx.step, ctx.basis, config.seed, config.verify_T,
        sample_every=config.sample_every,
        snapshot_every=config.sample_every,
    )
    min_rho = float(record.column("min_rho").min())
    rows = [
        StatVerdict("mass_conservation", "mass conservation", record.mass_drift_max, MASS_GATE).as_row(),
        StatVerdict("positivity", "positivity of density", 0.0, min_rho).as_row(),
    ]
    for state in [ctx.init, *record.snapshots]:
        rows.append(_tagged(enbounds_check(state, ctx.params, BOUND_SLACK).as_row("density bounds from energy"), state.time))
        rows.append(_tagged(weighted_poincare_verdict(state, BOUND_SLACK).as_row("weighted Poincare"), state.time))
    for state in record.snapshots:
        sandwich = relative_entropy_bounds(state, ctx.init, ctx.params, BOUND_SLACK)
        rows.append(_tagged(sandwich.as_row("relative entropy sandwich"), state.time))
    return rows, {"min_rho": min_rho, **record.scalars()}


def ordering_verdict(small: np.ndarray, big: np.ndarray) -> StatVerdict:
    """Smaller perturbation, smaller relative entropy at every matched time."""
    gap = float(np.max(np.asarray(small) - np.asarray(big)))
    return StatVerdict("perturbation_ordering", "continuous dependence", gap, 0.0)


def paired_rows(ctx: RunContext) -> tuple[list[dict], dict]:
    """Uniqueness and continuous dependence under a shared noise path."""
    config = ctx.config

    def run(init: State) -> PairedResult:
        return paired_paths(
            init, ctx.init, ctx.params, ctx.step, ctx.basis, config.seed, config.verify_T,
            sample_every=config.sample_every,
        )

    identical = run(ctx.init)
    rows = [
        StatVerdict(
            "paired_identical_bitwise", "pathwise uniqueness",
            0.0 if identical.bitwise_equal else 1.0, 0.0,
        ).as_row()
    ]

    big = run(perturbed_state(ctx.init, config.perturbation))
    small = run(perturbed_state(ctx.init, config.perturbation / 10))

    positive = big.envelope > 0
    envelope_ratio = float(np.max(big.relative_entropy[positive] / big.envelope[positive])) if positive.any() else 0.0
    final_big = float(big.relative_entropy[-1])
    rows += [
        StatVerdict("gronwall_envelope", "continuous dependence", envelope_ratio, ENVELOPE_FACTOR).as_row(),
        StatVerdict("relative_entropy_final", "continuous dependence", final_big, RELATIVE_ENTROPY_CEILING).as_row(),
        ordering_verdict(small.relative_entropy, big.relative_entropy).as_row(),
    ]
    return rows, {
        "times": big.times,
        "relative_entropy": big.relative_entropy,
        "envelope": big.envelope,
        "relative_entropy_small": small.relative_entropy,
    }


def run_verify(ctx: RunContext) -> dict:
    """Run every check and write the verdict table."""
    rows: list[dict] = []
    details: dict = {}
    for name, check in (("balance", balance_rows), ("forced", forced_rows), ("paired", paired_rows)):
        check_rows, check_details = check(ctx)
        rows.extend(check_rows)
        details[name] = check_details

    artifacts = ctx.write_report("verify", details, rows)
    failed = [r["name"] for r in rows if not r["passed"]]
    return {
        "checks": len(rows),
        "failed": failed,
        "verdicts": rows,
        "artifacts": [str(p) for p in artifacts],
        "passed": not failed,
    }


def main(argv: list[str] | None = None) -> None:
    script_main("verify", "Inequality checks of the discretization", run_verify, argv)


if __name__ == "__main__":
    main()
