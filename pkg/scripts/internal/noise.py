"""Truncated sine-series forcing and counter-based Wiener increments.

Mode shapes are sigma_l(x) = sigma0 * l^(-p) * sin(l pi x), l = 1..K, sampled
at the faces. The standard normals driving step n of trajectory m are a pure
function of (seed, m, n): a Philox generator keyed by the seed with its counter
set to (0, n, m, 0), whose raw 64-bit words become uniforms on (0, 1) and then
normals through the inverse normal CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import NoiseError
from .field import FloatArray, GridSpec

MIN_DECAY = 3.0
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True, eq=False)
class NoiseBasis:
    grid: GridSpec
    K: int
    sigma0: float
    p: float
    modes: FloatArray  # shape (K, n_cells + 1)
    sup_norm_sq: float
    h2_norm_sq: float

    def describe(self) -> dict:
        return {"K": self.K, "sigma0": self.sigma0, "p": self.p}

    @property
    def variance_profile(self) -> FloatArray:
        """Sum over modes of sigma_l(x)^2 at every face."""
        return np.sum(self.modes * self.modes, axis=0)


@dataclass(frozen=True)
class RngKey:
    seed: int
    trajectory: int
    step: int


@dataclass(frozen=True, eq=False)
class NoiseIncrement:
    values: FloatArray  # face field, zero at both boundary faces
    dt: float


def build_noise(grid: GridSpec, K: int, sigma0: float, p: float) -> NoiseBasis:
    """Sample the mode shapes on the faces and cache the norms.

    Raises:
        NoiseError: K < 1, sigma0 < 0 or p < 3
    """
    if int(K) != K or K < 1:
        raise NoiseError(f"Number of noise modes must be a positive integer, got {K}", details={"K": K})
    if not sigma0 >= 0:
        raise NoiseError(f"Noise amplitude must be >= 0, got {sigma0}", details={"sigma0": sigma0})
    if not p >= MIN_DECAY:
        raise NoiseError(
            f"Decay exponent p={p} violates H^2 noise assumption (need p >= {MIN_DECAY})",
            details={"p": p},
        )
    K = int(K)
    ells = np.arange(1, K + 1, dtype=np.float64)
    amplitudes = sigma0 * ells ** (-float(p))
    modes = amplitudes[:, None] * np.sin(np.pi * ells[:, None] * grid.faces[None, :])
    modes[:, 0] = 0.0
    modes[:, -1] = 0.0
    modes.flags.writeable = False

    sup_norm_sq = float(np.max(np.sum(modes * modes, axis=0)))
    # (sigma_l)_xx = -(l pi)^2 sigma_l, and the integral of sin^2(l pi x) is 1/2
    h2_norm_sq = float(np.sum((amplitudes * (ells * np.pi) ** 2) ** 2) / 2.0)

    return NoiseBasis(
        grid=grid,
        K=K,
        sigma0=float(sigma0),
        p=float(p),
        modes=modes,
        sup_norm_sq=sup_norm_sq,
        h2_norm_sq=h2_norm_sq,
    )


def sigma_sup_norm(basis: NoiseBasis) -> float:
    """max over faces of sum_l sigma_l(x)^2."""
    return basis.sup_norm_sq


def sigma_h2_norm(basis: NoiseBasis) -> float:
    return basis.h2_norm_sq


def sigma0_for_sup_norm(grid: GridSpec, K: int, p: float, target: float) -> float:
    """Amplitude sigma0 for which the basis has the requested sup norm squared."""
    if not target >= 0:
        raise NoiseError(f"Target sup norm must be >= 0, got {target}", details={"target": target})
    unit = build_noise(grid, K, 1.0, p).sup_norm_sq
    return math.sqrt(target / unit)


def standard_normals(key: RngKey, count: int) -> FloatArray:
    """Independent standard normals determined by the key alone."""
    if not (0 <= key.seed <= _MASK64 and key.trajectory >= 0 and key.step >= 0):
        raise NoiseError(
            "Seed must fit in 64 bits and trajectory/step must be non-negative",
            details={"seed": key.seed, "trajectory": key.trajectory, "step": key.step},
        )
    bitgen = np.random.Philox(
        key=np.array([key.seed, 0], dtype=np.uint64),
        counter=np.array([0, key.step, key.trajectory, 0], dtype=np.uint64),
    )
    raw = bitgen.random_raw(count)
    uniforms = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(uniforms)


def sample_increment(basis: NoiseBasis, key: RngKey, dt: float) -> NoiseIncrement:
    """sum_l sigma_l(x) xi_l sqrt(dt) at every face."""
    if not dt > 0:
        raise NoiseError(f"Time step must be positive, got {dt}", details={"dt": dt})
    xi = standard_normals(key, basis.K)
    values = math.sqrt(dt) * (xi @ basis.modes)
    values[0] = 0.0
    values[-1] = 0.0
    values.flags.writeable = False
    return NoiseIncrement(values=values, dt=float(dt))
