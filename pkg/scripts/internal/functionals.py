"""Entropy, modified energy, relative entropy and the inequalities built on them.

Discretization conventions used everywhere in this module:

- the kinetic density 1/2 rho u^2 is evaluated at centers with the average of
  the squared face velocities on both sides (not the square of the average);
- rho_x, (log rho)_x and u_xx live at the interior faces, where rho is the
  arithmetic mean of the two neighbouring centers;
- u_x lives at the centers.

With these choices the weighted Poincare inequality, the pointwise bound
rho_x u / rho <= rho u^2 + rho_x^2 / (4 rho^3) and the relative-entropy
sandwich hold face by face, so they survive discretization exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import kl_div

from .errors import StateError
from .field import (
    ModelParams,
    State,
    center_to_face,
    ddx_center_to_face,
    ddx_face_to_center,
    face_square_to_center,
    integrate_centers,
    integrate_interior_faces,
    second_difference,
)

DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class FunctionalReport:
    H: float
    E: float
    grad_u_sq: float
    grad_logrho_sq: float
    weighted_h2_u: float
    min_rho: float
    max_rho: float
    rho_x_sq: float
    rho_dev_l2: float
    u_l2: float
    mass: float

    @property
    def max_inv_rho(self) -> float:
        return 1.0 / self.min_rho

    def observables(self) -> dict[str, float]:
        """The observable vector sampled into time-averaged measures."""
        return {
            "grad_u_sq": self.grad_u_sq,
            "grad_logrho_sq": self.grad_logrho_sq,
            "rho_x_sq": self.rho_x_sq,
            "max_rho": self.max_rho,
            "max_inv_rho": self.max_inv_rho,
            "H": self.H,
            "E": self.E,
            "rho_dev_l2": self.rho_dev_l2,
            "u_l2": self.u_l2,
        }


@dataclass(frozen=True)
class SandwichVerdict:
    """lower <= value <= upper, checked with multiplicative slack tol.

    One-sided checks use lower = 0 or upper = inf. Composite verdicts carry
    their components in parts and report the worst one in lower/value/upper.
    """

    name: str
    lower: float
    value: float
    upper: float
    tol: float = DEFAULT_TOL
    parts: tuple["SandwichVerdict", ...] = field(default=())

    def _check(self, tol: float) -> bool:
        if self.parts:
            return all(p._check(tol) for p in self.parts)
        return self.lower <= self.value * (1 + tol) and self.value <= self.upper * (1 + tol)

    @property
    def holds(self) -> bool:
        return self._check(self.tol)

    @property
    def marginal(self) -> bool:
        """Holds only thanks to the slack (discretization-marginal)."""
        return self.holds and not self._check(0.0)

    @property
    def ratio(self) -> float:
        """How close the value is to its binding bound; above 1 means violated."""
        if self.parts:
            return max(p.ratio for p in self.parts)
        ratios = [0.0]
        if self.lower > 0:
            ratios.append(self.lower / self.value if self.value > 0 else math.inf)
        if math.isfinite(self.upper):
            if self.upper > 0:
                ratios.append(self.value / self.upper)
            elif self.value > 0:
                ratios.append(math.inf)
        return max(ratios)

    def binding(self) -> tuple[float, float]:
        """(lhs, rhs) of the tightest inequality, written as lhs <= rhs."""
        if self.parts:
            return max(self.parts, key=lambda p: p.ratio).binding()
        lower_ratio = self.lower / self.value if self.lower > 0 and self.value > 0 else 0.0
        upper_ratio = self.value / self.upper if math.isfinite(self.upper) and self.upper > 0 else 0.0
        if self.lower > 0 and (lower_ratio >= upper_ratio or not math.isfinite(self.upper)):
            return self.lower, self.value
        return self.value, self.upper

    def as_row(self, anchor: str) -> dict:
        lhs, rhs = self.binding()
        return {
            "name": self.name,
            "anchor": anchor,
            "lhs": lhs,
            "rhs": rhs,
            "slack": self.tol,
            "passed": self.holds,
            "marginal": self.marginal,
        }


def _kinetic_density(state: State) -> np.ndarray:
    return 0.5 * state.rho * face_square_to_center(state.u)


def _rho_log_rho(state: State) -> np.ndarray:
    return state.rho * np.log(state.rho)


def evaluate(state: State, params: ModelParams) -> FunctionalReport:
    """Every functional of a state in one pass."""
    grid = state.grid
    dx = grid.dx
    rho, u = state.rho, state.u
    log_rho = np.log(rho)

    kinetic = 0.5 * rho * face_square_to_center(u)
    H = dx * float(np.sum(kinetic + params.A2 * rho * log_rho))

    rho_f = center_to_face(rho)
    rho_x = np.diff(rho) / dx
    u_in = u[1:-1]
    correction = dx * float(np.sum(rho_x * u_in / rho_f + 0.5 * rho_x * rho_x / rho_f**3))
    E = H + 0.5 * correction

    u_x = np.diff(u) / dx
    logrho_x = np.diff(log_rho) / dx
    u_xx = second_difference(grid, u)

    return FunctionalReport(
        H=H,
        E=E,
        grad_u_sq=dx * float(np.sum(u_x * u_x)),
        grad_logrho_sq=dx * float(np.sum(logrho_x * logrho_x)),
        weighted_h2_u=dx * float(np.sum(u_xx * u_xx / rho_f)),
        min_rho=float(rho.min()),
        max_rho=float(rho.max()),
        rho_x_sq=dx * float(np.sum(rho_x * rho_x)),
        rho_dev_l2=math.sqrt(dx * float(np.sum((rho - 1.0) ** 2))),
        u_l2=math.sqrt(dx * float(np.sum(u_in * u_in))),
        mass=dx * float(np.sum(rho)),
    )


def entropy_H(state: State, params: ModelParams) -> float:
    """Integral of 1/2 rho u^2 + A^2 rho log rho."""
    return state.grid.dx * float(np.sum(_kinetic_density(state) + params.A2 * _rho_log_rho(state)))


def energy_E(state: State, params: ModelParams) -> float:
    """H plus 1/2 of the integral of rho_x u / rho + rho_x^2 / (2 rho^3)."""
    return evaluate(state, params).E


def density_gradient_weight(state: State) -> float:
    """Integral of rho_x^2 / rho^3 over the interior faces."""
    rho_f = center_to_face(state.rho)
    rho_x = ddx_center_to_face(state.grid, state.rho)
    return integrate_interior_faces(state.grid, rho_x * rho_x / rho_f**3)


def dissipation_norms(state: State) -> tuple[float, float]:
    """(||u_x||^2, ||(log rho)_x||^2)."""
    u_x = ddx_face_to_center(state.grid, state.u)
    logrho_x = ddx_center_to_face(state.grid, np.log(state.rho))
    return integrate_centers(state.grid, u_x * u_x), integrate_interior_faces(state.grid, logrho_x * logrho_x)


def _require_same_grid(state1: State, state2: State) -> None:
    if state1.grid != state2.grid:
        raise StateError(
            "States live on different grids",
            details={"n_cells": [state1.grid.n_cells, state2.grid.n_cells]},
        )


def relative_entropy(state1: State, state2: State, params: ModelParams) -> float:
    """Relative entropy of (rho, u) = state1 with respect to (r, v) = state2.

    The A^2 rho log(rho / r) part is integrated in the form
    rho log(rho / r) - rho + r, which has the same integral for equal masses
    and is nonnegative cell by cell.
    """
    _require_same_grid(state1, state2)
    w = state1.u - state2.u
    kinetic = 0.5 * state1.rho * face_square_to_center(w)
    bregman = kl_div(state1.rho, state2.rho)
    return state1.grid.dx * float(np.sum(kinetic + params.A2 * bregman))


def relative_entropy_bounds(
    state1: State,
    state2: State,
    params: ModelParams,
    tol: float = DEFAULT_TOL,
) -> SandwichVerdict:
    """Two-sided L^2 sandwich of the relative entropy."""
    _require_same_grid(state1, state2)
    dx = state1.grid.dx
    w = (state1.u - state2.u)[1:-1]
    u_dist = dx * float(np.sum(w * w))
    d = state1.rho - state2.rho
    rho_dist = dx * float(np.sum(d * d))

    lower_weight = min(state1.min_rho, 1.0 / max(state1.max_rho, state2.max_rho))
    lower = 0.5 * min(1.0, params.A2) * lower_weight * (u_dist + rho_dist)
    upper = 0.5 * state1.max_rho * u_dist + 0.5 * params.A2 * max(
        1.0 / state1.min_rho, 1.0 / state2.min_rho
    ) * rho_dist
    return SandwichVerdict(
        name="relative_entropy_sandwich",
        lower=lower,
        value=relative_entropy(state1, state2, params),
        upper=upper,
        tol=tol,
    )


def enbounds_check(state: State, params: ModelParams, tol: float = DEFAULT_TOL) -> SandwichVerdict:
    """Density, density-gradient and velocity bounds implied by a finite energy."""
    report = evaluate(state, params)
    root = math.sqrt(8.0 * max(report.E, 0.0))
    growth = math.exp(root)
    u_sq = report.u_l2 * report.u_l2
    parts = (
        SandwichVerdict("density_lower", math.exp(-root), report.min_rho, math.inf, tol),
        SandwichVerdict("density_upper", 0.0, report.max_rho, growth, tol),
        SandwichVerdict("density_gradient", 0.0, report.rho_x_sq, 8.0 * max(report.E, 0.0) * growth**3, tol),
        SandwichVerdict("velocity_l2", 0.0, u_sq, 2.0 * max(report.H, 0.0) * growth, tol),
    )
    worst = max(parts, key=lambda p: p.ratio)
    return SandwichVerdict(
        name="energy_bounds",
        lower=worst.lower,
        value=worst.value,
        upper=worst.upper,
        tol=tol,
        parts=parts,
    )


def weighted_poincare_verdict(state: State, tol: float = DEFAULT_TOL) -> SandwichVerdict:
    """Integral of rho u^2 against ||u_x||^2 for a unit-mass state."""
    dx = state.grid.dx
    weighted = dx * float(np.sum(state.rho * face_square_to_center(state.u)))
    grad_u_sq, _ = dissipation_norms(state)
    return SandwichVerdict("weighted_poincare", 0.0, weighted, grad_u_sq, tol)


def weighted_poincare_check(state: State, tol: float = DEFAULT_TOL) -> bool:
    return weighted_poincare_verdict(state, tol).holds


def psi_value(E_now: float, dissipation_integral_so_far: float) -> float:
    """Energy plus the already weighted cumulative dissipation."""
    return E_now + dissipation_integral_so_far


def psi_dissipation(diss_u_cum: float, diss_logrho_cum: float, params: ModelParams) -> float:
    """Quarter-weighted dissipation entering the Psi functional."""
    return 0.25 * diss_u_cum + 0.25 * params.A2 * diss_logrho_cum


def gronwall_coefficient(reference: State, params: ModelParams, other_min_inv_rho: float) -> float:
    """Instantaneous growth rate of the relative entropy against a reference solution.

    Args:
        reference: The reference state (r, v) of the relative entropy
        params: Model parameters
        other_min_inv_rho: ||1/rho||_inf of the other state

    Returns:
        (1 + 2/min(1, A^2) * max(1, ||1/r||_inf / ||1/rho||_inf)) * integral of v_xx^2 / r
    """
    grid = reference.grid
    v_xx = second_difference(grid, reference.u)
    r_f = center_to_face(reference.rho)
    weighted = grid.dx * float(np.sum(v_xx * v_xx / r_f))
    ratio = max(1.0, (1.0 / reference.min_rho) / other_min_inv_rho)
    return (1.0 + 2.0 / min(1.0, params.A2) * ratio) * weighted
