"""Semi-implicit Euler-Maruyama integration of the stochastic compressible system.

One step advances (rho, u) by

1. conservative upwind transport of the density with zero boundary flux;
2. a backward-Euler viscous solve for the velocity at the interior faces,
       (I - dt D^2 / rho*) u^{n+1} = u^n - dt u u_x - dt A^2 (log rho*)_x + dW,
   with advection and pressure explicit and rho* the transported density.

Noise for step n of trajectory m is keyed by (seed, m, n), so a run is a pure
function of its inputs and can be resumed or replayed in lockstep.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import structlog
from scipy.linalg import LinAlgError, solve_banded

from .errors import StepError
from .field import ModelParams, State, center_to_face
from .functionals import (
    FunctionalReport,
    evaluate,
    gronwall_coefficient,
    psi_dissipation,
    psi_value,
    relative_entropy,
)
from .noise import NoiseBasis, NoiseIncrement, RngKey, sample_increment

logger = structlog.get_logger(__name__)

CSV_COLUMNS = (
    "t", "H", "E", "grad_u_sq", "grad_logrho_sq", "diss_u_cum", "diss_logrho_cum",
    "psi", "psi_sup", "mass", "min_rho", "max_rho",
)
EXTRA_COLUMNS = (
    "rho_x_sq", "max_inv_rho", "weighted_h2_u", "rho_dev_l2", "u_l2", "balance_residual_cum",
)
SAMPLE_COLUMNS = CSV_COLUMNS + EXTRA_COLUMNS

Observer = Callable[[int, State, FunctionalReport], None]


@dataclass(frozen=True)
class StepSpec:
    dt: float
    cfl_max: float = 0.5
    implicit_viscosity: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise StepError(f"Time step must be positive, got {self.dt}", details={"dt": self.dt})
        if not 0 < self.cfl_max <= 1:
            raise StepError(f"cfl_max must lie in (0, 1], got {self.cfl_max}", details={"cfl_max": self.cfl_max})
        if not self.implicit_viscosity:
            raise StepError("Only the implicit viscous update is supported")


def cfl_check(state: State, spec: StepSpec) -> float:
    """max |u| dt / dx."""
    return float(np.max(np.abs(state.u))) * spec.dt / state.grid.dx


def _upwind_flux(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Mass flux at all faces, zero at the two boundary faces."""
    u_in = u[1:-1]
    flux = np.zeros_like(u)
    flux[1:-1] = u_in * np.where(u_in >= 0, rho[:-1], rho[1:])
    return flux


def step(state: State, params: ModelParams, spec: StepSpec, dW: NoiseIncrement) -> State:
    """Advance one time step.

    Raises:
        StepError: CFL violation, non-positive transported density or a failed viscous solve
    """
    grid = state.grid
    dt, dx = spec.dt, grid.dx
    if dW.dt != dt:
        raise StepError("Noise increment was sampled for a different time step", details={"dt": dt, "dW_dt": dW.dt})

    cfl = cfl_check(state, spec)
    if cfl > spec.cfl_max:
        raise StepError(
            f"CFL number {cfl:.6g} exceeds cfl_max={spec.cfl_max}",
            details={"cfl": cfl, "cfl_max": spec.cfl_max},
        )

    rho, u = state.rho, state.u
    rho_star = rho - (dt / dx) * np.diff(_upwind_flux(rho, u))
    bad = np.flatnonzero(~(rho_star > 0))
    if bad.size:
        cell = int(bad[0])
        raise StepError(
            f"Density became non-positive in cell {cell} after transport",
            cell=cell,
            details={"value": float(rho_star[cell]), "cfl": cfl},
        )

    u_in = u[1:-1]
    advection = u_in * (u[2:] - u[:-2]) / (2.0 * dx)
    pressure = params.A2 * np.diff(np.log(rho_star)) / dx
    rhs = u_in - dt * advection - dt * pressure + dW.values[1:-1]

    coef = dt / (dx * dx * center_to_face(rho_star))
    if not np.all(np.isfinite(coef)):
        raise StepError("Viscous operator has non-finite coefficients")
    m = coef.shape[0]
    banded = np.empty((3, m))
    banded[0, 0] = 0.0
    banded[0, 1:] = -coef[:-1]
    banded[1, :] = 1.0 + 2.0 * coef
    banded[2, :-1] = -coef[1:]
    banded[2, -1] = 0.0
    try:
        u_new_in = solve_banded((1, 1), banded, rhs, check_finite=False)
    except (LinAlgError, ValueError) as e:
        raise StepError(f"Tridiagonal viscous solve broke down: {e}") from e
    if not np.all(np.isfinite(u_new_in)):
        raise StepError("Tridiagonal viscous solve produced non-finite velocities")

    u_new = np.zeros_like(u)
    u_new[1:-1] = u_new_in
    return State(grid=grid, rho=rho_star, u=u_new, time=state.time + dt)


def scheme_entropy_source(state: State, params: ModelParams) -> float:
    """Entropy production of the spatial stencils beyond viscous dissipation.

    For the semi-discrete scheme, dH/dt + ||u_x||^2 equals this quantity: the
    transport of kinetic energy by the velocity-form advection plus the upwind
    numerical diffusion of the density. It vanishes as dx -> 0.
    """
    dx = state.grid.dx
    rho, u = state.rho, state.u
    u_in = u[1:-1]
    flux = _upwind_flux(rho, u)
    rho_dot_f = center_to_face(-np.diff(flux) / dx)
    rho_f = center_to_face(rho)
    rho_up = np.where(u_in >= 0, rho[:-1], rho[1:])
    du = (u[2:] - u[:-2]) / (2.0 * dx)
    dlogrho = np.diff(np.log(rho)) / dx
    u_sq = u_in * u_in
    integrand = (
        0.5 * rho_dot_f * u_sq
        - rho_f * u_sq * du
        + params.A2 * u_in * (rho_up - rho_f) * dlogrho
    )
    return dx * float(np.sum(integrand))


@dataclass
class TrajectoryRecord:
    """Sampled functionals and running accumulators of one trajectory."""

    trajectory_id: int
    seed: int
    dt: float
    sample_every: int
    sigma_sup_sq: float
    samples: dict[str, list[float]] = field(default_factory=lambda: {c: [] for c in SAMPLE_COLUMNS})
    E0: float = 0.0
    H0: float = 0.0
    steps: int = 0
    diss_u_cum: float = 0.0
    diss_logrho_cum: float = 0.0
    weighted_h2_cum: float = 0.0
    balance_residual_cum: float = 0.0
    psi_sup: float = 0.0
    psi_excess_sup: float = 0.0
    energy_path_sup: float = 0.0
    density_path_sup: float = 0.0
    grad_u_sup: float = 0.0
    mass_drift_max: float = 0.0
    snapshots: list[State] = field(default_factory=list)
    final_state: State | None = None

    @property
    def sample_stride(self) -> float:
        return self.sample_every * self.dt

    @property
    def h1_path(self) -> float:
        """sup ||u_x||^2 plus the time integral of the weighted H^2 norm."""
        return self.grad_u_sup + self.weighted_h2_cum

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.samples[name], dtype=np.float64)

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def scalars(self) -> dict[str, float | int]:
        return {
            "trajectory_id": self.trajectory_id,
            "steps": self.steps,
            "E0": self.E0,
            "H0": self.H0,
            "diss_u_cum": self.diss_u_cum,
            "diss_logrho_cum": self.diss_logrho_cum,
            "weighted_h2_cum": self.weighted_h2_cum,
            "balance_residual_cum": self.balance_residual_cum,
            "psi_sup": self.psi_sup,
            "psi_excess_sup": self.psi_excess_sup,
            "energy_path_sup": self.energy_path_sup,
            "density_path_sup": self.density_path_sup,
            "h1_path": self.h1_path,
            "mass_drift_max": self.mass_drift_max,
        }


@dataclass
class PathCheckpoint:
    record: TrajectoryRecord
    state: State

    @property
    def step_index(self) -> int:
        return self.record.steps


class PathIntegrator:
    """Advance one trajectory step by step while maintaining its record."""

    def __init__(
        self,
        init: State,
        params: ModelParams,
        spec: StepSpec,
        basis: NoiseBasis,
        seed: int,
        trajectory_id: int = 0,
        sample_every: int = 1,
        snapshot_every: int = 0,
        observers: Sequence[Observer] = (),
        track_balance: bool | None = None,
        resume: PathCheckpoint | None = None,
    ):
        if sample_every < 1:
            raise StepError(f"sample_every must be >= 1, got {sample_every}")
        self.params = params
        self.spec = spec
        self.basis = basis
        self.seed = seed
        self.trajectory_id = trajectory_id
        self.snapshot_every = snapshot_every
        self.observers = tuple(observers)
        self.track_balance = basis.sigma0 == 0.0 if track_balance is None else track_balance

        if resume is not None:
            self.record = resume.record
            self.state = resume.state
            self.record.final_state = resume.state
            self.report = evaluate(self.state, params)
            return

        self.state = init
        self.report = evaluate(init, params)
        self.record = TrajectoryRecord(
            trajectory_id=trajectory_id,
            seed=seed,
            dt=spec.dt,
            sample_every=sample_every,
            sigma_sup_sq=basis.sup_norm_sq,
            E0=self.report.E,
            H0=self.report.H,
            psi_sup=self.report.E,
            energy_path_sup=self.report.E,
            density_path_sup=self.report.max_rho + self.report.max_inv_rho,
            grad_u_sup=self.report.grad_u_sq,
            mass_drift_max=abs(self.report.mass - 1.0),
        )
        self.record.final_state = init
        self._sample(self.state, self.report, self.report.E)

    def _sample(self, state: State, report: FunctionalReport, psi: float) -> None:
        rec = self.record
        row = {
            "t": state.time,
            "H": report.H,
            "E": report.E,
            "grad_u_sq": report.grad_u_sq,
            "grad_logrho_sq": report.grad_logrho_sq,
            "diss_u_cum": rec.diss_u_cum,
            "diss_logrho_cum": rec.diss_logrho_cum,
            "psi": psi,
            "psi_sup": rec.psi_sup,
            "mass": report.mass,
            "min_rho": report.min_rho,
            "max_rho": report.max_rho,
            "rho_x_sq": report.rho_x_sq,
            "max_inv_rho": report.max_inv_rho,
            "weighted_h2_u": report.weighted_h2_u,
            "rho_dev_l2": report.rho_dev_l2,
            "u_l2": report.u_l2,
            "balance_residual_cum": rec.balance_residual_cum,
        }
        for name, value in row.items():
            rec.samples[name].append(value)
        for observer in self.observers:
            observer(rec.steps, state, report)

    def advance(self) -> State:
        rec = self.record
        n = rec.steps
        dt = self.spec.dt
        dW = sample_increment(self.basis, RngKey(self.seed, self.trajectory_id, n), dt)
        source = scheme_entropy_source(self.state, self.params) if self.track_balance else 0.0
        try:
            new = step(self.state, self.params, self.spec, dW)
        except StepError as e:
            raise e.at(step=n, trajectory_id=self.trajectory_id) from e

        old = self.report
        rep = evaluate(new, self.params)

        # left-endpoint time integrals
        rec.diss_u_cum += dt * old.grad_u_sq
        rec.diss_logrho_cum += dt * old.grad_logrho_sq
        rec.weighted_h2_cum += dt * old.weighted_h2_u
        if self.track_balance:
            rec.balance_residual_cum += abs(rep.H - old.H + dt * old.grad_u_sq - dt * source)

        psi = psi_value(rep.E, psi_dissipation(rec.diss_u_cum, rec.diss_logrho_cum, self.params))
        rec.psi_sup = max(rec.psi_sup, psi)
        rec.psi_excess_sup = max(rec.psi_excess_sup, psi - 0.5 * rec.sigma_sup_sq * new.time - rec.E0)
        rec.energy_path_sup = max(
            rec.energy_path_sup,
            rep.E + rec.diss_u_cum + self.params.A2 * rec.diss_logrho_cum,
        )
        rec.density_path_sup = max(rec.density_path_sup, rep.max_rho + rep.max_inv_rho)
        rec.grad_u_sup = max(rec.grad_u_sup, rep.grad_u_sq)
        rec.mass_drift_max = max(rec.mass_drift_max, abs(rep.mass - 1.0))
        rec.steps = n + 1
        rec.final_state = new

        self.state, self.report = new, rep
        if rec.steps % rec.sample_every == 0:
            self._sample(new, rep, psi)
        if self.snapshot_every and rec.steps % self.snapshot_every == 0:
            rec.snapshots.append(new)
        return new

    def checkpoint(self) -> PathCheckpoint:
        return PathCheckpoint(record=self.record, state=self.state)

    def run_until(
        self,
        n_steps: int,
        checkpoint_every: int = 0,
        on_checkpoint: Callable[[PathCheckpoint], None] | None = None,
    ) -> TrajectoryRecord:
        while self.record.steps < n_steps:
            self.advance()
            if checkpoint_every and on_checkpoint and self.record.steps % checkpoint_every == 0:
                on_checkpoint(self.checkpoint())
        return self.record


def steps_for(T: float, dt: float) -> int:
    """Number of steps covering [0, T]; T must be a multiple of dt."""
    n_steps = round(T / dt)
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise StepError(f"Horizon T={T} is not a positive multiple of dt={dt}", details={"T": T, "dt": dt})
    return n_steps


def integrate_path(
    init: State,
    params: ModelParams,
    spec: StepSpec,
    basis: NoiseBasis,
    seed: int,
    T: float,
    observers: Sequence[Observer] = (),
    trajectory_id: int = 0,
    sample_every: int = 1,
    snapshot_every: int = 0,
    track_balance: bool | None = None,
    resume: PathCheckpoint | None = None,
    checkpoint_every: int = 0,
    on_checkpoint: Callable[[PathCheckpoint], None] | None = None,
) -> TrajectoryRecord:
    """Integrate one trajectory on [0, T] and return its record.

    Raises:
        StepError: Annotated with the failing step index and trajectory id
    """
    n_steps = steps_for(T, spec.dt)
    integrator = PathIntegrator(
        init, params, spec, basis, seed,
        trajectory_id=trajectory_id,
        sample_every=sample_every,
        snapshot_every=snapshot_every,
        observers=observers,
        track_balance=track_balance,
        resume=resume,
    )
    logger.info("path_start", trajectory_id=trajectory_id, steps=n_steps, start=integrator.record.steps)
    record = integrator.run_until(n_steps, checkpoint_every=checkpoint_every, on_checkpoint=on_checkpoint)
    logger.info("path_done", trajectory_id=trajectory_id, psi_sup=record.psi_sup)
    return record


@dataclass
class PairedResult:
    record1: TrajectoryRecord
    record2: TrajectoryRecord
    times: np.ndarray
    relative_entropy: np.ndarray
    envelope: np.ndarray
    final1: State
    final2: State

    @property
    def bitwise_equal(self) -> bool:
        return self.final1.bitwise_equal(self.final2) and all(
            np.array_equal(self.record1.column(c), self.record2.column(c)) for c in SAMPLE_COLUMNS
        )


def paired_paths(
    init1: State,
    init2: State,
    params: ModelParams,
    spec: StepSpec,
    basis: NoiseBasis,
    seed: int,
    T: float,
    trajectory_id: int = 0,
    sample_every: int = 1,
) -> PairedResult:
    """Evolve two states under the identical noise path.

    Records the relative entropy of the first state with respect to the second
    and its Gronwall envelope H_r(0) exp(integral of the growth rate), the rate
    being evaluated at the left endpoint of every step.
    """
    if init1.grid != init2.grid:
        raise StepError("Paired states live on different grids")
    n_steps = steps_for(T, spec.dt)
    first = PathIntegrator(init1, params, spec, basis, seed, trajectory_id, sample_every, track_balance=False)
    second = PathIntegrator(init2, params, spec, basis, seed, trajectory_id, sample_every, track_balance=False)

    hr0 = relative_entropy(init1, init2, params)
    rate_integral = 0.0
    times = [init1.time]
    values = [hr0]
    envelope = [hr0]
    for n in range(n_steps):
        rate = gronwall_coefficient(second.state, params, 1.0 / first.state.min_rho)
        s1 = first.advance()
        s2 = second.advance()
        rate_integral += spec.dt * rate
        if (n + 1) % sample_every == 0:
            times.append(s1.time)
            values.append(relative_entropy(s1, s2, params))
            envelope.append(hr0 * math.exp(rate_integral))

    return PairedResult(
        record1=first.record,
        record2=second.record,
        times=np.asarray(times),
        relative_entropy=np.asarray(values),
        envelope=np.asarray(envelope),
        final1=first.state,
        final2=second.state,
    )
