"""Staggered grid geometry, discrete states and discrete calculus.

Density lives at the n cell centers x_j = (j + 1/2) dx, velocity at the n + 1
faces x_{j+1/2} = j dx. All integrals are midpoint sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError, GridError, StateError

MIN_CELLS = 8
MASS_TOL = 1e-12

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class GridSpec:
    n_cells: int
    dx: float

    @property
    def centers(self) -> FloatArray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def faces(self) -> FloatArray:
        return np.arange(self.n_cells + 1) * self.dx

    @property
    def interior_faces(self) -> FloatArray:
        return self.faces[1:-1]


@dataclass(frozen=True)
class ModelParams:
    A: float

    def __post_init__(self):
        if not (self.A > 0 and np.isfinite(self.A)):
            raise ConfigError(f"Pressure parameter A must be positive, got {self.A}", details={"A": self.A})

    @property
    def A2(self) -> float:
        return self.A * self.A


@dataclass(frozen=True, eq=False)
class State:
    """Discrete (rho, u) pair. Arrays are read-only once wrapped."""

    grid: GridSpec
    rho: FloatArray
    u: FloatArray
    time: float = 0.0

    def __post_init__(self):
        rho = np.array(self.rho, dtype=np.float64)
        u = np.array(self.u, dtype=np.float64)
        rho.flags.writeable = False
        u.flags.writeable = False
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "u", u)

    @property
    def min_rho(self) -> float:
        return float(self.rho.min())

    @property
    def max_rho(self) -> float:
        return float(self.rho.max())

    def bitwise_equal(self, other: "State") -> bool:
        return (
            self.time == other.time
            and np.array_equal(self.rho, other.rho)
            and np.array_equal(self.u, other.u)
        )


def make_grid(n_cells: int) -> GridSpec:
    """Build a uniform staggered grid on (0, 1).

    Raises:
        GridError: If n_cells < 8 or 1/n_cells does not tile the unit interval exactly
    """
    if int(n_cells) != n_cells or n_cells < MIN_CELLS:
        raise GridError(
            f"n_cells must be an integer >= {MIN_CELLS}, got {n_cells}",
            details={"n_cells": n_cells},
        )
    n_cells = int(n_cells)
    dx = 1.0 / n_cells
    if dx * n_cells != 1.0:
        raise GridError(
            f"dx = 1/{n_cells} does not tile the unit interval exactly; pick another n_cells",
            details={"n_cells": n_cells, "dx": dx},
        )
    return GridSpec(n_cells=n_cells, dx=dx)


def _check_size(values: FloatArray, expected: int, what: str) -> None:
    if values.ndim != 1 or values.shape[0] != expected:
        raise StateError(
            f"{what} must have length {expected}, got shape {values.shape}",
            details={"expected": expected, "shape": list(values.shape)},
        )


def validate_state(state: State) -> State:
    """Check positivity, boundary condition and unit mass of a state.

    Raises:
        StateError: On the first violated invariant
    """
    grid = state.grid
    _check_size(state.rho, grid.n_cells, "rho")
    _check_size(state.u, grid.n_cells + 1, "u")

    bad = np.flatnonzero(~(state.rho > 0) | ~np.isfinite(state.rho))
    if bad.size:
        cell = int(bad[0])
        raise StateError(
            f"Density must be finite and positive; cell {cell} has {state.rho[cell]!r}",
            details={"cell": cell, "value": float(state.rho[cell])},
        )
    if not np.all(np.isfinite(state.u)):
        raise StateError("Velocity contains non-finite values")
    if state.u[0] != 0.0 or state.u[-1] != 0.0:
        raise StateError(
            "Velocity must vanish at both boundary faces",
            details={"u_left": float(state.u[0]), "u_right": float(state.u[-1])},
        )
    m = mass(state)
    if abs(m - 1.0) > MASS_TOL:
        raise StateError(f"Mass must be 1 within {MASS_TOL}, got {m!r}", details={"mass": m})
    return state


def new_state(
    grid: GridSpec,
    rho_init: ArrayLike,
    u_init: ArrayLike,
    time: float = 0.0,
) -> tuple[State, float]:
    """Validate initial fields and rescale the density to unit mass.

    Args:
        grid: Grid the fields live on
        rho_init: Density at the n cell centers
        u_init: Velocity at the n + 1 faces
        time: Initial time

    Returns:
        (state, rescale factor applied to rho_init)

    Raises:
        StateError: Size mismatch, non-positive density or nonzero boundary velocity
    """
    rho = np.asarray(rho_init, dtype=np.float64)
    u = np.asarray(u_init, dtype=np.float64)
    _check_size(rho, grid.n_cells, "rho")
    _check_size(u, grid.n_cells + 1, "u")

    bad = np.flatnonzero(~(rho > 0) | ~np.isfinite(rho))
    if bad.size:
        cell = int(bad[0])
        raise StateError(
            f"Initial density must be positive; cell {cell} has {rho[cell]!r}",
            details={"cell": cell, "value": float(rho[cell])},
        )
    if u[0] != 0.0 or u[-1] != 0.0:
        raise StateError(
            "Initial velocity must vanish at both boundary faces",
            details={"u_left": float(u[0]), "u_right": float(u[-1])},
        )

    factor = 1.0 / integrate_centers(grid, rho)
    if factor != 1.0:
        rho = rho * factor
    state = State(grid=grid, rho=rho, u=u, time=float(time))
    return validate_state(state), factor


def mass(state: State) -> float:
    return integrate_centers(state.grid, state.rho)


def integrate_centers(grid: GridSpec, values: ArrayLike) -> float:
    """Midpoint quadrature dx * sum of a center field."""
    values = np.asarray(values, dtype=np.float64)
    _check_size(values, grid.n_cells, "center field")
    return float(grid.dx * np.sum(values))


def integrate_interior_faces(grid: GridSpec, values: ArrayLike) -> float:
    """dx * sum of a field sampled at the n - 1 interior faces."""
    values = np.asarray(values, dtype=np.float64)
    _check_size(values, grid.n_cells - 1, "interior-face field")
    return float(grid.dx * np.sum(values))


def ddx_face_to_center(grid: GridSpec, f: ArrayLike) -> FloatArray:
    """(f[j+1] - f[j]) / dx at every cell center."""
    f = np.asarray(f, dtype=np.float64)
    _check_size(f, grid.n_cells + 1, "face field")
    return np.diff(f) / grid.dx


def ddx_center_to_face(grid: GridSpec, g: ArrayLike) -> FloatArray:
    """(g[j] - g[j-1]) / dx at the interior faces; boundary faces are excluded."""
    g = np.asarray(g, dtype=np.float64)
    _check_size(g, grid.n_cells, "center field")
    return np.diff(g) / grid.dx


def center_to_face(g: FloatArray) -> FloatArray:
    """Arithmetic mean of neighbouring centers, at the interior faces."""
    return 0.5 * (g[:-1] + g[1:])


def face_square_to_center(f: FloatArray) -> FloatArray:
    """Average of the squared face values on each side of a center."""
    sq = f * f
    return 0.5 * (sq[:-1] + sq[1:])


def second_difference(grid: GridSpec, f: FloatArray) -> FloatArray:
    """Centered second difference of a face field, at the interior faces."""
    return (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (grid.dx * grid.dx)
