"""Unit tests for ensembles, measures and statistical reports."""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add scripts to path for direct imports
TESTS_DIR = Path(__file__).parent
PROJECT_ROOT = TESTS_DIR.parent
SCRIPTS_DIR = PROJECT_ROOT / "scripts"
sys.path.insert(0, str(SCRIPTS_DIR))

from internal.errors import ReportError
from internal.field import ModelParams, make_grid, new_state
from internal.noise import build_noise, sigma0_for_sup_norm
from internal.solver import StepSpec, integrate_path
from internal.stats import (
    EnsembleConfig,
    EmpiricalMeasure,
    OBSERVABLES,
    batch_means_stderr,
    compactness_radius,
    dissipation_budget,
    gamma0,
    low_mach_scan,
    martingale_tail,
    run_ensemble,
    stationarity_diagnostic,
    tightness_report,
    time_averaged_measure,
)

GRID = make_grid(32)
PARAMS = ModelParams(1.0)
QUIET = build_noise(GRID, 4, 0.0, 3.0)


def rest_state():
    state, _ = new_state(GRID, np.ones(32), np.zeros(33))
    return state


def forced_basis(sigma_sup_sq=0.1):
    return build_noise(GRID, 4, sigma0_for_sup_norm(GRID, 4, 3.0, sigma_sup_sq), 3.0)


def ensemble_config(basis=QUIET, M=2, T=0.1, T0=0.0, seed=7):
    return EnsembleConfig(
        M=M, T=T, T0=T0, sample_every=10,
        params=PARAMS, step=StepSpec(dt=1e-3), basis=basis, init=rest_state(), seed=seed,
    )


def quiet_record(T=1.0, sample_every=10):
    return integrate_path(rest_state(), PARAMS, StepSpec(dt=1e-3), QUIET, 1, T, sample_every=sample_every)


def forced_record(T=1.0, sample_every=10, trajectory_id=0):
    return integrate_path(
        rest_state(), PARAMS, StepSpec(dt=1e-3), forced_basis(), 1, T,
        sample_every=sample_every, trajectory_id=trajectory_id,
    )


class TestGamma0:
    """Tail rate arithmetic."""

    def test_value(self):
        basis = forced_basis(0.5)
        assert gamma0(PARAMS, basis) == pytest.approx(1.0)

    def test_small_A(self):
        basis = forced_basis(0.5)
        assert gamma0(ModelParams(0.25), basis) == pytest.approx(0.25)

    def test_zero_noise_refused(self):
        with pytest.raises(ReportError, match="undefined"):
            gamma0(PARAMS, QUIET)


class TestEnsembleConfig:
    """Config validation."""

    def test_rejects_empty(self):
        with pytest.raises(ReportError):
            ensemble_config(M=0)

    def test_rejects_burn_in_past_horizon(self):
        with pytest.raises(ReportError):
            ensemble_config(T0=0.1)


class TestRunEnsemble:
    """Ensemble reduction."""

    def test_equilibrium_is_degenerate(self):
        summary = run_ensemble(ensemble_config(), workers=1)
        for name in ("H", "E", "diss_u_cum", "diss_logrho_cum"):
            assert np.all(summary.means[name] == 0.0)
        assert all(v.lhs == 0.0 and v.rhs == 0.0 and v.passed for v in summary.verdicts)
        assert summary.exp_moment is None
        assert summary.passed

    def test_ids_are_ordered(self):
        summary = run_ensemble(ensemble_config(basis=forced_basis(), M=3), workers=1)
        assert [r.trajectory_id for r in summary.records] == [0, 1, 2]

    def test_pool_size_does_not_change_result(self):
        config = ensemble_config(basis=forced_basis(), M=3)
        serial = run_ensemble(config, workers=1)
        pooled = run_ensemble(config, workers=2)
        for name in serial.means:
            assert np.array_equal(serial.means[name], pooled.means[name])
        assert serial.psi_sup_moments == pooled.psi_sup_moments

    def test_moments_reported(self):
        summary = run_ensemble(ensemble_config(basis=forced_basis(), M=2), workers=1)
        assert set(summary.psi_sup_moments) == {1, 2, 4}
        assert all(math.isfinite(v) for v in summary.psi_sup_moments.values())
        assert summary.exp_moment is not None


class TestTimeAveragedMeasure:
    """Sampling windows and uniform sample weights."""

    def test_sample_count(self):
        measure = time_averaged_measure(quiet_record(), 0.2, 1.0)
        assert measure.count == 80
        assert measure.probability(np.ones(measure.count, dtype=bool)) == 1.0

    def test_doubling_stride_halves_count(self):
        fine = time_averaged_measure(forced_record(sample_every=10), 0.0, 1.0)
        coarse = time_averaged_measure(forced_record(sample_every=20), 0.0, 1.0)
        assert coarse.count * 2 == fine.count
        se = fine.stderr("grad_u_sq") + coarse.stderr("grad_u_sq")
        assert abs(fine.mean("grad_u_sq") - coarse.mean("grad_u_sq")) <= 3 * se + 1e-12

    def test_equilibrium_point_mass(self):
        measure = time_averaged_measure(quiet_record(), 0.0, 1.0)
        for name in ("grad_u_sq", "grad_logrho_sq", "rho_x_sq", "H", "E"):
            assert np.all(measure.samples[name] == 0.0)

    def test_span_mismatch(self):
        with pytest.raises(ReportError):
            time_averaged_measure(quiet_record(T=0.5), 0.0, 1.0)
        with pytest.raises(ReportError):
            time_averaged_measure(quiet_record(), 0.0, 0.005)

    def test_mean_matches_accumulator(self):
        record = forced_record(sample_every=1)
        measure = time_averaged_measure(record, 0.0, 1.0)
        # right-endpoint samples against the left-endpoint accumulator
        assert measure.mean("grad_u_sq") == pytest.approx(record.diss_u_cum, rel=0.05)


class TestTightness:
    """Compact-set masses."""

    def test_S_R(self):
        assert compactness_radius(1.0) == pytest.approx(4 * math.e**2)
        assert compactness_radius(1.0) == pytest.approx(29.556, abs=1e-3)

    def test_equilibrium_full_mass(self):
        measure = time_averaged_measure(quiet_record(), 0.0, 1.0)
        report = tightness_report(measure, PARAMS, QUIET, [1.0, 2.0])
        assert report.mu_K == [1.0, 1.0]
        assert report.mu_C == [1.0, 1.0]

    def test_inclusion_and_monotone(self):
        measure = time_averaged_measure(forced_record(), 0.0, 1.0)
        report = tightness_report(measure, PARAMS, forced_basis(), [1.0, 1.5, 2.0, 3.0])
        assert all(c >= k for k, c in zip(report.mu_K, report.mu_C))
        assert report.mu_K == sorted(report.mu_K)
        assert all(v.passed for v in report.verdicts() if v.name.startswith("compact_inclusion"))

    def test_rejects_small_R(self):
        measure = time_averaged_measure(quiet_record(), 0.0, 1.0)
        with pytest.raises(ReportError):
            tightness_report(measure, PARAMS, QUIET, [0.5])


class TestMartingaleTail:
    """Exceedance frequencies."""

    def test_frequencies(self):
        basis = forced_basis(0.5)
        report = martingale_tail([0.0, 0.5, 1.5, 2.5], PARAMS, basis, [1.0, 2.0, 3.0])
        assert report.frequency == [0.5, 0.25, 0.0]
        assert report.stderr[0] == pytest.approx(math.sqrt(0.25 / 4))
        assert report.bound == pytest.approx([math.exp(-1), math.exp(-2), math.exp(-3)])

    def test_nonincreasing_in_R(self):
        rng = np.random.default_rng(0)
        report = martingale_tail(rng.exponential(size=100), PARAMS, forced_basis(0.5), [1, 2, 3, 4])
        assert report.frequency == sorted(report.frequency, reverse=True)

    def test_zero_noise(self):
        with pytest.raises(ReportError):
            martingale_tail([0.0], PARAMS, QUIET, [1.0])


class TestStationarity:
    """KS window distances."""

    def test_zero_shift(self):
        assert stationarity_diagnostic(forced_record(), "grad_u_sq", 0.4, 0.0) == 0.0

    def test_equilibrium(self):
        assert stationarity_diagnostic(quiet_record(), "grad_u_sq", 0.4, 0.3) == 0.0

    def test_bounded(self):
        d = stationarity_diagnostic(forced_record(), "grad_u_sq", 0.4, 0.5)
        assert 0.0 <= d <= 1.0

    def test_insufficient_span(self):
        with pytest.raises(ReportError):
            stationarity_diagnostic(forced_record(), "grad_u_sq", 0.6, 0.6)

    def test_zero_shift_still_checks_span(self):
        with pytest.raises(ReportError):
            stationarity_diagnostic(forced_record(), "grad_u_sq", 2.0, 0.0)


class TestDissipationBudget:
    """Budget against the noise strength."""

    def test_equilibrium(self):
        measure = time_averaged_measure(quiet_record(), 0.0, 1.0)
        budget = dissipation_budget(measure, PARAMS, QUIET)
        assert budget.mean == 0.0
        assert budget.verdict.passed

    def test_synthetic_measure(self):
        samples = {name: np.zeros(4) for name in OBSERVABLES}
        samples["grad_u_sq"] = np.array([0.1, 0.2, 0.3, 0.4])
        samples["grad_logrho_sq"] = np.full(4, 0.1)
        measure = EmpiricalMeasure(samples=samples, T0=0.0, T=1.0, stride=0.25)
        budget = dissipation_budget(measure, ModelParams(2.0), forced_basis(0.5))
        assert budget.mean == pytest.approx(0.25 + 0.4)
        assert not budget.verdict.passed


class TestBatchMeans:
    """Batch-means standard error."""

    def test_constant_series(self):
        assert batch_means_stderr(np.ones(100)) == 0.0

    def test_iid_close_to_naive(self):
        x = np.random.default_rng(1).normal(size=10000)
        assert batch_means_stderr(x) == pytest.approx(0.01, rel=0.3)


class TestLowMachScan:
    """A scan with scaled noise."""

    def test_zero_noise_rows_are_zero(self):
        scan = low_mach_scan([1.0, 2.0], 1.0, ensemble_config(T=0.1), workers=1)
        assert [row.rho_dev_l2 for row in scan.rows] == [0.0, 0.0]
        assert [row.u_l2 for row in scan.rows] == [0.0, 0.0]
        assert all(v.passed for v in scan.verdicts())

    def test_noise_scaled_by_A(self):
        base = ensemble_config(basis=forced_basis(), M=1, T=0.1)
        scan = low_mach_scan([1.0, 2.0], 1.0, base, workers=1)
        assert scan.rows[1].sigma0 == pytest.approx(scan.rows[0].sigma0 / 2)

    def test_single_base_row_matches_plain_ensemble(self):
        base = ensemble_config(basis=forced_basis(), M=2, T=0.1)
        scan = low_mach_scan([1.0], 1.0, base, workers=1)
        plain = run_ensemble(base, workers=1)
        expected = np.mean([time_averaged_measure(r, 0.0, 0.1).mean("rho_dev_l2") for r in plain.records])
        assert scan.rows[0].rho_dev_l2 == pytest.approx(expected, rel=1e-15)

    def test_rejects_non_positive_eta(self):
        with pytest.raises(ReportError):
            low_mach_scan([1.0], 0.0, ensemble_config(), workers=1)
