"""Ensemble orchestration and the statistical verdicts built on it."""

from __future__ import annotations

import math
import os
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace

import numpy as np
import structlog
from scipy.stats import ks_2samp

from .errors import CnsError, ReportError, StepError
from .field import ModelParams, State
from .noise import NoiseBasis, build_noise
from .solver import StepSpec, TrajectoryRecord, integrate_path

logger = structlog.get_logger(__name__)

OBSERVABLES = (
    "grad_u_sq", "grad_logrho_sq", "rho_x_sq", "max_rho", "max_inv_rho", "H", "E",
    "rho_dev_l2", "u_l2",
)
EXPECTATION_SLACK_SE = 3.0
TAIL_SLACK_SE = 2.0
MOMENT_ORDERS = (1, 2, 4)
SPAN_TOL = 1e-9


@dataclass(frozen=True)
class StatVerdict:
    """lhs <= rhs + slack."""

    name: str
    anchor: str
    lhs: float
    rhs: float
    slack: float = 0.0

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.slack

    def as_row(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "passed": self.passed,
        }


def _stderr(values: np.ndarray) -> float:
    n = values.shape[0]
    if n < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(n))


def batch_means_stderr(series: np.ndarray) -> float:
    """Standard error of a correlated time series by non-overlapping batch means."""
    n = series.shape[0]
    b = int(math.floor(math.sqrt(n)))
    a = n // b if b else 0
    if a < 2:
        return _stderr(series)
    batches = series[: a * b].reshape(a, b).mean(axis=1)
    var = b * float(np.sum((batches - batches.mean()) ** 2)) / (a - 1)
    return math.sqrt(var / n)


def gamma0(params: ModelParams, basis: NoiseBasis) -> float:
    """Exponential tail rate min{1, 4A^2} / (2 ||sigma||^2_inf).

    Raises:
        ReportError: The noise is identically zero
    """
    if basis.sup_norm_sq <= 0:
        raise ReportError(
            "gamma0 is undefined for zero noise (||sigma||^2_inf = 0)",
            details={"sigma0": basis.sigma0},
        )
    return min(1.0, 4.0 * params.A2) / (2.0 * basis.sup_norm_sq)


@dataclass(frozen=True)
class EnsembleConfig:
    M: int
    T: float
    T0: float
    sample_every: int
    params: ModelParams
    step: StepSpec
    basis: NoiseBasis
    init: State
    seed: int
    check_times: tuple[float, ...] = ()

    def __post_init__(self):
        if self.M < 1:
            raise ReportError(f"Ensemble size M must be >= 1, got {self.M}")
        if not 0 <= self.T0 < self.T:
            raise ReportError(f"Burn-in must satisfy 0 <= T0 < T, got T0={self.T0}, T={self.T}")
        if self.sample_every < 1:
            raise ReportError(f"sample_every must be >= 1, got {self.sample_every}")


def _run_trajectory(config: EnsembleConfig, trajectory_id: int) -> TrajectoryRecord:
    """Worker entry point; must stay importable at module level for pickling."""
    return integrate_path(
        config.init,
        config.params,
        config.step,
        config.basis,
        config.seed,
        config.T,
        trajectory_id=trajectory_id,
        sample_every=config.sample_every,
    )


def run_trajectories(config: EnsembleConfig, workers: int | None = None) -> list[TrajectoryRecord]:
    """Run trajectories 0..M-1 and return their records ordered by id.

    Raises:
        StepError: From the first failing trajectory, annotated with its id and step
    """
    workers = workers or os.cpu_count() or 1
    ids = range(config.M)
    if workers == 1 or config.M == 1:
        return [_run_trajectory(config, tid) for tid in ids]

    results: dict[int, TrajectoryRecord] = {}
    with ProcessPoolExecutor(max_workers=min(workers, config.M)) as executor:
        futures = {executor.submit(_run_trajectory, config, tid): tid for tid in ids}
        for future in as_completed(futures):
            tid = futures[future]
            try:
                results[tid] = future.result()
            except CnsError:
                for pending in futures:
                    pending.cancel()
                raise
            except Exception as e:
                for pending in futures:
                    pending.cancel()
                raise StepError(f"Trajectory {tid} failed: {e}", trajectory_id=tid) from e
            logger.info("trajectory_done", trajectory_id=tid, completed=len(results), total=config.M)
    return [results[tid] for tid in ids]


@dataclass
class EnsembleSummary:
    config: EnsembleConfig
    records: list[TrajectoryRecord]
    times: np.ndarray
    means: dict[str, np.ndarray]
    stderrs: dict[str, np.ndarray]
    verdicts: list[StatVerdict]
    psi_sup_moments: dict[int, float]
    exp_moment: StatVerdict | None

    @property
    def passed(self) -> bool:
        checks = list(self.verdicts)
        if self.exp_moment is not None:
            checks.append(self.exp_moment)
        return all(v.passed for v in checks) and all(math.isfinite(m) for m in self.psi_sup_moments.values())

    def to_dict(self) -> dict:
        return {
            "M": self.config.M,
            "T": self.config.T,
            "times": self.times,
            "means": self.means,
            "stderrs": self.stderrs,
            "verdicts": [v.as_row() for v in self.verdicts],
            "psi_sup_moments": {str(m): v for m, v in self.psi_sup_moments.items()},
            "exp_moment": self.exp_moment.as_row() if self.exp_moment else None,
            "passed": self.passed,
        }


def _sample_index(record: TrajectoryRecord, t: float) -> int:
    idx = round(t / record.sample_stride)
    if abs(idx * record.sample_stride - t) > SPAN_TOL * max(t, 1.0) or idx >= len(record.samples["t"]):
        raise ReportError(
            f"Time {t} is not a sample time of the record",
            details={"stride": record.sample_stride, "samples": len(record.samples["t"])},
        )
    return idx


def summarize(config: EnsembleConfig, records: Sequence[TrajectoryRecord]) -> EnsembleSummary:
    """Reduce trajectory records, in id order, to means and expectation verdicts."""
    params, basis = config.params, config.basis
    sigma_sq = basis.sup_norm_sq
    columns = ("H", "E", "diss_u_cum", "diss_logrho_cum")
    stacked = {c: np.stack([r.column(c) for r in records]) for c in columns}
    entropy_lhs = stacked["H"] + stacked["diss_u_cum"]
    energy_lhs = stacked["E"] + 0.5 * stacked["diss_u_cum"] + 0.5 * params.A2 * stacked["diss_logrho_cum"]
    stacked["entropy_lhs"] = entropy_lhs
    stacked["energy_lhs"] = energy_lhs

    m = len(records)
    means = {c: v.mean(axis=0) for c, v in stacked.items()}
    stderrs = {
        c: (v.std(axis=0, ddof=1) / math.sqrt(m)) if m > 1 else np.zeros(v.shape[1])
        for c, v in stacked.items()
    }

    H0 = records[0].H0
    E0 = records[0].E0
    verdicts = []
    if config.check_times:
        indices = [_sample_index(records[0], t) for t in config.check_times]
    else:
        last = len(records[0].samples["t"]) - 1
        indices = [last // 4, last // 2, last]
    for i in indices:
        t = float(records[0].samples["t"][i])
        verdicts.append(StatVerdict(
            f"entropy_expectation@t={t:g}", "entropy inequality",
            float(means["entropy_lhs"][i]), H0 + 0.5 * sigma_sq * t,
            EXPECTATION_SLACK_SE * float(stderrs["entropy_lhs"][i]),
        ))
        verdicts.append(StatVerdict(
            f"energy_expectation@t={t:g}", "energy inequality",
            float(means["energy_lhs"][i]), E0 + 0.5 * sigma_sq * t,
            EXPECTATION_SLACK_SE * float(stderrs["energy_lhs"][i]),
        ))

    psi_sup = np.array([r.psi_sup for r in records])
    moments = {order: float(np.mean(psi_sup**order)) for order in MOMENT_ORDERS}

    exp_moment = None
    if sigma_sq > 0:
        g = gamma0(params, basis)
        exp_values = np.exp(0.5 * g * psi_sup)
        # the tail bound integrates to a factor of at most 2
        exp_moment = StatVerdict(
            "psi_sup_exponential_moment", "exponential martingale estimate",
            float(exp_values.mean()), 2.0 * math.exp(0.5 * g * (E0 + 0.5 * sigma_sq * config.T)),
            EXPECTATION_SLACK_SE * _stderr(exp_values),
        )

    return EnsembleSummary(
        config=config,
        records=list(records),
        times=records[0].times,
        means=means,
        stderrs=stderrs,
        verdicts=verdicts,
        psi_sup_moments=moments,
        exp_moment=exp_moment,
    )


def run_ensemble(config: EnsembleConfig, workers: int | None = None) -> EnsembleSummary:
    records = run_trajectories(config, workers)
    return summarize(config, records)


@dataclass
class EmpiricalMeasure:
    """Uniformly weighted samples of the observable vector."""

    samples: dict[str, np.ndarray]
    T0: float
    T: float
    stride: float

    @property
    def count(self) -> int:
        return int(self.samples["grad_u_sq"].shape[0])

    def mean(self, name: str) -> float:
        return float(np.mean(self.samples[name]))

    def stderr(self, name: str) -> float:
        return batch_means_stderr(self.samples[name])

    def probability(self, mask: np.ndarray) -> float:
        return float(np.mean(mask))


def _window(record: TrajectoryRecord, start: float, stop: float) -> slice:
    """Samples at stride times in (start, stop]."""
    stride = record.sample_stride
    i0 = round(start / stride)
    i1 = round(stop / stride)
    span_ok = (
        abs(i0 * stride - start) <= SPAN_TOL * max(start, 1.0)
        and abs(i1 * stride - stop) <= SPAN_TOL * max(stop, 1.0)
        and 0 <= i0 < i1 < len(record.samples["t"])
    )
    if not span_ok:
        raise ReportError(
            f"Window [{start}, {stop}] does not match the record span",
            details={
                "stride": stride,
                "record_end": record.samples["t"][-1] if record.samples["t"] else None,
            },
        )
    return slice(i0 + 1, i1 + 1)


def time_averaged_measure(record: TrajectoryRecord, T0: float, T: float) -> EmpiricalMeasure:
    """Uniform measure over the samples at stride times in (T0, T].

    Raises:
        ReportError: The window is not spanned by the record or misaligned with the stride
    """
    window = _window(record, T0, T)
    samples = {name: record.column(name)[window] for name in OBSERVABLES}
    return EmpiricalMeasure(samples=samples, T0=T0, T=T, stride=record.sample_stride)


def compactness_radius(R: float) -> float:
    """S_R = 4 R^2 exp(2R)."""
    return 4.0 * R * R * math.exp(2.0 * R)


@dataclass
class TightnessReport:
    R_grid: tuple[float, ...]
    S_R: list[float]
    mu_K: list[float]
    mu_C: list[float]
    bound: list[float]
    chebyshev: list[float]
    sigma_sup_sq: float

    def verdicts(self, margin: float = 0.05) -> list[StatVerdict]:
        rows = []
        for R, k, c, b in zip(self.R_grid, self.mu_K, self.mu_C, self.bound):
            rows.append(StatVerdict(f"compact_inclusion@R={R:g}", "K_R subset of C_S_R", k, c))
            rows.append(StatVerdict(f"tightness_bound@R={R:g}", "tightness estimate", b, c, margin))
        return rows

    def to_dict(self) -> dict:
        return {
            "R_grid": list(self.R_grid),
            "S_R": self.S_R,
            "mu_K": self.mu_K,
            "mu_C": self.mu_C,
            "bound": self.bound,
            "chebyshev": self.chebyshev,
        }


def tightness_report(
    measure: EmpiricalMeasure,
    params: ModelParams,
    basis: NoiseBasis,
    R_grid: Sequence[float],
) -> TightnessReport:
    """Mass the measure gives to K_R and C_{S_R} for every R.

    Raises:
        ReportError: Empty measure or some R < 1
    """
    if measure.count == 0:
        raise ReportError("Tightness needs a nonempty measure")
    if any(R < 1 for R in R_grid):
        raise ReportError("Tightness radii must satisfy R >= 1", details={"R_grid": list(R_grid)})
    s = measure.samples
    k_stat = s["grad_u_sq"] + s["grad_logrho_sq"]
    c_stat = s["grad_u_sq"] + s["rho_x_sq"] + s["max_rho"] + s["max_inv_rho"]
    k_mean = float(np.mean(k_stat))
    sigma_sq = basis.sup_norm_sq
    a_min = min(1.0, params.A2)

    S_R, mu_K, mu_C, bound, cheb = [], [], [], [], []
    for R in R_grid:
        S = compactness_radius(R)
        S_R.append(S)
        mu_K.append(measure.probability(k_stat <= R * R))
        mu_C.append(measure.probability(c_stat <= S))
        bound.append(1.0 - sigma_sq / (a_min * R * R))
        cheb.append(1.0 - k_mean / (R * R))
    return TightnessReport(tuple(R_grid), S_R, mu_K, mu_C, bound, cheb, sigma_sq)


@dataclass
class MartingaleReport:
    gamma0: float
    R_grid: tuple[float, ...]
    frequency: list[float]
    stderr: list[float]
    bound: list[float]
    fixed_horizon_frequency: list[float]
    M: int

    def verdicts(self) -> list[StatVerdict]:
        return [
            StatVerdict(f"martingale_tail@R={R:g}", "exponential martingale estimate", f, b, TAIL_SLACK_SE * se)
            for R, f, se, b in zip(self.R_grid, self.frequency, self.stderr, self.bound)
        ]

    def to_dict(self) -> dict:
        return {
            "gamma0": self.gamma0,
            "R_grid": list(self.R_grid),
            "frequency": self.frequency,
            "stderr": self.stderr,
            "bound": self.bound,
            "fixed_horizon_frequency": self.fixed_horizon_frequency,
            "M": self.M,
        }


def martingale_tail(
    excess: Sequence[float],
    params: ModelParams,
    basis: NoiseBasis,
    R_grid: Sequence[float],
    fixed_horizon_excess: Sequence[float] | None = None,
) -> MartingaleReport:
    """Empirical exceedance of sup_t [Psi - 1/2 ||sigma||^2 t] - E0 against exp(-gamma0 R).

    Args:
        excess: One supremum statistic per trajectory
        fixed_horizon_excess: Optional sup_t Psi - E0 - 1/2 ||sigma||^2 T per trajectory

    Raises:
        ReportError: Zero noise, where gamma0 is undefined
    """
    g = gamma0(params, basis)
    values = np.asarray(excess, dtype=np.float64)
    fixed = values if fixed_horizon_excess is None else np.asarray(fixed_horizon_excess, dtype=np.float64)
    m = values.shape[0]
    if m == 0:
        raise ReportError("No trajectories supplied")
    freq, se, bound, fixed_freq = [], [], [], []
    for R in R_grid:
        f = float(np.mean(values > R))
        freq.append(f)
        se.append(math.sqrt(f * (1.0 - f) / m))
        bound.append(math.exp(-g * R))
        fixed_freq.append(float(np.mean(fixed > R)))
    return MartingaleReport(g, tuple(R_grid), freq, se, bound, fixed_freq, m)


def stationarity_diagnostic(
    record: TrajectoryRecord,
    observable: str,
    T: float,
    shift: float,
    start: float = 0.0,
) -> float:
    """Kolmogorov-Smirnov distance between windows [start, start+T] and [start+shift, start+shift+T].

    Raises:
        ReportError: The record does not span either window, even with zero shift
    """
    column = record.column(observable)
    first = column[_window(record, start, start + T)]
    if shift == 0:
        return 0.0
    second = column[_window(record, start + shift, start + shift + T)]
    return float(ks_2samp(first, second).statistic)


@dataclass
class StationarityTrend:
    short: list[float]
    long: list[float]
    required_fraction: float

    @property
    def decreases(self) -> int:
        # identical windows on both scales (a resting state) count as converged
        return sum(1 for s, l in zip(self.short, self.long) if l < s or s == l == 0.0)

    @property
    def required(self) -> int:
        return math.ceil(self.required_fraction * len(self.short))

    @property
    def passed(self) -> bool:
        return self.decreases >= self.required

    def to_dict(self) -> dict:
        return {
            "ks_short": self.short,
            "ks_long": self.long,
            "decreases": self.decreases,
            "passed": self.passed,
            "note": "KS decrease is a heuristic proxy for convergence of time averages",
        }


def stationarity_trend(
    records: Sequence[TrajectoryRecord],
    observable: str,
    T0: float,
    T_short: float,
    T_long: float,
    required_fraction: float = 0.8,
) -> StationarityTrend:
    """KS distance at two window lengths, half-window shift, one value per record."""
    short = [stationarity_diagnostic(r, observable, T_short, T_short / 2, T0) for r in records]
    long = [stationarity_diagnostic(r, observable, T_long, T_long / 2, T0) for r in records]
    return StationarityTrend(short, long, required_fraction)


@dataclass(frozen=True)
class BudgetReport:
    mean: float
    stderr: float
    sigma_sup_sq: float
    margin: float

    @property
    def verdict(self) -> StatVerdict:
        return StatVerdict(
            "dissipation_budget", "invariant-measure dissipation bound",
            self.mean, self.sigma_sup_sq * (1.0 + self.margin),
        )

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "sigma_sup_sq": self.sigma_sup_sq, "margin": self.margin}


def dissipation_budget(
    measure: EmpiricalMeasure,
    params: ModelParams,
    basis: NoiseBasis,
    margin: float = 0.1,
) -> BudgetReport:
    """Mean of A^2 ||(log rho)_x||^2 + ||u_x||^2 under the measure against ||sigma||^2_inf."""
    series = params.A2 * measure.samples["grad_logrho_sq"] + measure.samples["grad_u_sq"]
    return BudgetReport(
        mean=float(np.mean(series)),
        stderr=batch_means_stderr(series),
        sigma_sup_sq=basis.sup_norm_sq,
        margin=margin,
    )


@dataclass
class LowMachRow:
    A: float
    sigma0: float
    sigma_sup_sq: float
    rho_dev_l2: float
    rho_dev_se: float
    u_l2: float
    u_se: float


@dataclass
class LowMachScan:
    eta: float
    A_base: float
    rows: list[LowMachRow] = field(default_factory=list)

    def verdicts(self) -> list[StatVerdict]:
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            slack = TAIL_SLACK_SE * math.sqrt(a.rho_dev_se**2 + b.rho_dev_se**2)
            out.append(StatVerdict(
                f"rho_dev_nonincreasing@A={a.A:g}->{b.A:g}", "low-Mach limit",
                b.rho_dev_l2, a.rho_dev_l2, slack,
            ))
        return out

    def to_dict(self) -> dict:
        return {"eta": self.eta, "A_base": self.A_base, "rows": [vars(r) for r in self.rows]}


def low_mach_scan(
    A_list: Sequence[float],
    eta: float,
    base: EnsembleConfig,
    A_base: float = 1.0,
    workers: int | None = None,
) -> LowMachScan:
    """Per-A ensembles with sigma0 scaled by (A / A_base)^(-eta).

    Each trajectory is averaged over (T0, T]; rows report the ensemble mean
    and standard error of those time averages.
    """
    if not eta > 0:
        raise ReportError(f"eta must be > 0, got {eta}")
    scan = LowMachScan(eta=eta, A_base=A_base)
    for A in A_list:
        scale = (A / A_base) ** (-eta)
        basis = build_noise(base.basis.grid, base.basis.K, base.basis.sigma0 * scale, base.basis.p)
        config = replace(base, params=ModelParams(A), basis=basis)
        records = run_trajectories(config, workers)
        rho_dev = np.array([time_averaged_measure(r, base.T0, base.T).mean("rho_dev_l2") for r in records])
        u_l2 = np.array([time_averaged_measure(r, base.T0, base.T).mean("u_l2") for r in records])
        scan.rows.append(LowMachRow(
            A=A,
            sigma0=basis.sigma0,
            sigma_sup_sq=basis.sup_norm_sq,
            rho_dev_l2=float(rho_dev.mean()),
            rho_dev_se=_stderr(rho_dev),
            u_l2=float(u_l2.mean()),
            u_se=_stderr(u_l2),
        ))
        logger.info("lowmach_row", A=A, rho_dev_l2=scan.rows[-1].rho_dev_l2)
    return scan
