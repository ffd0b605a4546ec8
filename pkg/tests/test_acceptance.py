"""Long-running acceptance experiments (run with: pytest -m slow)."""

import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

# Add scripts to path for direct imports
TESTS_DIR = Path(__file__).parent
PROJECT_ROOT = TESTS_DIR.parent
SCRIPTS_DIR = PROJECT_ROOT / "scripts"
sys.path.insert(0, str(SCRIPTS_DIR))

from internal.field import ModelParams, make_grid, new_state
from internal.functionals import enbounds_check
from internal.noise import build_noise, sigma0_for_sup_norm
from internal.solver import StepSpec, integrate_path, paired_paths
from internal.stats import (
    EnsembleConfig,
    dissipation_budget,
    low_mach_scan,
    martingale_tail,
    run_ensemble,
    run_trajectories,
    stationarity_trend,
    tightness_report,
    time_averaged_measure,
)

pytestmark = pytest.mark.slow

PARAMS = ModelParams(1.0)
DT = 1e-4
SAMPLE_EVERY = 100


def profile(n, rho_amp=0.0, u_amp=0.0):
    grid = make_grid(n)
    rho = 1.0 + rho_amp * np.sin(2 * np.pi * grid.centers)
    u = u_amp * np.sin(np.pi * grid.faces)
    u[0] = u[-1] = 0.0
    state, _ = new_state(grid, rho, u)
    return state


def forced_basis(grid, sigma_sup_sq=0.1):
    return build_noise(grid, 4, sigma0_for_sup_norm(grid, 4, 3.0, sigma_sup_sq), 3.0)


def forced_config(M, T, T0=0.0, seed=2024):
    init = profile(128)
    return EnsembleConfig(
        M=M, T=T, T0=T0, sample_every=SAMPLE_EVERY,
        params=PARAMS, step=StepSpec(dt=DT), basis=forced_basis(init.grid), init=init, seed=seed,
    )


@pytest.fixture(scope="module")
def long_record():
    config = forced_config(M=1, T=200.0, T0=50.0)
    return run_trajectories(config, workers=1)[0]


class TestDeterministicEntropyBalance:
    """Balance residual converges at first order in dt."""

    def test_halving_ratio(self):
        init = profile(256, rho_amp=0.2, u_amp=0.1)
        quiet = build_noise(init.grid, 4, 0.0, 3.0)
        residuals = [
            integrate_path(init, PARAMS, StepSpec(dt=dt), quiet, 1, 0.1, sample_every=1000).balance_residual_cum
            for dt in (1e-5, 5e-6)
        ]
        assert 1.6 <= residuals[0] / residuals[1] <= 2.4


class TestConservationAndBounds:
    """Mass, positivity and snapshot bounds over 10^5 forced steps."""

    def test_forced_run(self):
        init = profile(128)
        record = integrate_path(
            init, PARAMS, StepSpec(dt=DT), forced_basis(init.grid), 3, 10.0,
            sample_every=SAMPLE_EVERY, snapshot_every=10_000,
        )
        assert record.steps == 100_000
        assert record.mass_drift_max <= 1e-11
        assert record.column("min_rho").min() > 0.0
        assert len(record.snapshots) == 10
        for state in record.snapshots:
            assert enbounds_check(state, PARAMS, 1e-6).holds


class TestContinuousDependence:
    """Paired runs under a shared noise path."""

    def test_identical_and_perturbed(self):
        init = profile(128, rho_amp=0.1, u_amp=0.05)
        grid = init.grid
        basis = forced_basis(grid)
        identical = paired_paths(init, init, PARAMS, StepSpec(dt=DT), basis, 5, 0.05, sample_every=10)
        assert identical.bitwise_equal

        bump = 1e-6 * math.sqrt(2) * np.cos(2 * np.pi * grid.centers)
        perturbed, _ = new_state(grid, init.rho + bump, init.u)
        result = paired_paths(perturbed, init, PARAMS, StepSpec(dt=DT), basis, 5, 0.05, sample_every=10)
        assert np.all(result.relative_entropy <= 2.0 * result.envelope)
        assert result.relative_entropy[-1] <= 1e-9


class TestEnergyInequalityInExpectation:
    """Ensemble energy inequality at t = 5, 10, 20."""

    def test_energy_inequality(self):
        config = forced_config(M=50, T=20.0)
        config = replace(config, check_times=(5.0, 10.0, 20.0))
        summary = run_ensemble(config)
        energy = [v for v in summary.verdicts if v.name.startswith("energy_expectation")]
        assert len(energy) == 3
        assert all(v.passed for v in energy)
        assert all(math.isfinite(m) for m in summary.psi_sup_moments.values())


class TestInvariantMeasure:
    """Dissipation budget and tightness of the time-averaged measure."""

    def test_dissipation_budget(self, long_record):
        measure = time_averaged_measure(long_record, 50.0, 200.0)
        basis = forced_basis(make_grid(128))
        budget = dissipation_budget(measure, PARAMS, basis)
        assert budget.verdict.passed

    def test_burn_in_insensitive(self, long_record):
        basis = forced_basis(make_grid(128))
        early = dissipation_budget(time_averaged_measure(long_record, 20.0, 200.0), PARAMS, basis)
        late = dissipation_budget(time_averaged_measure(long_record, 100.0, 200.0), PARAMS, basis)
        assert abs(early.mean - late.mean) < 3 * max(early.stderr, late.stderr)

    def test_tightness(self, long_record):
        measure = time_averaged_measure(long_record, 50.0, 200.0)
        report = tightness_report(measure, PARAMS, forced_basis(make_grid(128)), [1.0, 2.0])
        for k, c, bound in zip(report.mu_K, report.mu_C, report.bound):
            assert c >= k
            assert c >= bound - 0.05


class TestMartingaleTail:
    """Exceedance frequencies against exp(-gamma0 R)."""

    def test_tail(self):
        config = forced_config(M=200, T=10.0)
        records = run_trajectories(config)
        report = martingale_tail([r.psi_excess_sup for r in records], PARAMS, config.basis, [1.0, 2.0, 3.0])
        assert report.gamma0 == pytest.approx(5.0)
        assert all(v.passed for v in report.verdicts())


class TestStationarity:
    """KS distance shrinks as the window doubles."""

    def test_trend(self):
        records = [
            run_trajectories(forced_config(M=1, T=85.0, seed=seed), workers=1)[0]
            for seed in range(5)
        ]
        trend = stationarity_trend(records, "grad_u_sq", 10.0, 25.0, 50.0)
        assert trend.decreases >= 4


class TestLowMach:
    """Density fluctuations shrink as A grows with scaled noise."""

    def test_scan(self):
        scan = low_mach_scan([1.0, 2.0, 4.0, 8.0], 1.0, forced_config(M=10, T=50.0, T0=10.0))
        assert all(v.passed for v in scan.verdicts())
