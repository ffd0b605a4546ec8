"""Unit tests for the spatially colored noise basis and increments."""

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

from internal.errors import NoiseError
from internal.field import make_grid
from internal.noise import (
    RngKey,
    build_noise,
    sample_increment,
    sigma0_for_sup_norm,
    sigma_h2_norm,
    sigma_sup_norm,
    standard_normals,
)


class TestBuildNoise:
    """Tests for build_noise."""

    def test_rejects_rough_noise(self):
        with pytest.raises(NoiseError, match="violates H\\^2 noise assumption"):
            build_noise(make_grid(64), 4, 1.0, 2.0)

    def test_rejects_no_modes(self):
        with pytest.raises(NoiseError):
            build_noise(make_grid(64), 0, 1.0, 3.0)

    def test_rejects_negative_amplitude(self):
        with pytest.raises(NoiseError):
            build_noise(make_grid(64), 4, -0.1, 3.0)

    def test_modes_vanish_on_boundary(self):
        basis = build_noise(make_grid(64), 4, 1.0, 3.0)
        assert basis.modes.shape == (4, 65)
        assert np.all(basis.modes[:, 0] == 0.0)
        assert np.all(basis.modes[:, -1] == 0.0)

    def test_zero_amplitude_has_zero_norms(self):
        basis = build_noise(make_grid(64), 4, 0.0, 3.0)
        assert sigma_sup_norm(basis) == 0.0
        assert sigma_h2_norm(basis) == 0.0

    def test_single_mode_norms(self):
        # one mode: sup of sigma0^2 sin^2(pi x) is reached at the midpoint face
        basis = build_noise(make_grid(64), 1, 0.5, 3.0)
        assert sigma_sup_norm(basis) == pytest.approx(0.25)
        assert sigma_h2_norm(basis) == pytest.approx(0.25 * math.pi**4 / 2)

    def test_h2_norm_closed_form(self):
        basis = build_noise(make_grid(64), 4, 0.3, 3.0)
        expected = sum(0.09 * ell ** (4 - 6) * math.pi**4 / 2 for ell in range(1, 5))
        assert sigma_h2_norm(basis) == pytest.approx(expected)

    def test_sup_norm_nondecreasing_in_modes(self):
        grid = make_grid(256)
        norms = [sigma_sup_norm(build_noise(grid, K, 1.0, 3.0)) for K in range(1, 97)]
        assert np.all(np.diff(norms) >= 0.0)
        # tail of the mode sum is summable at p = 3
        assert np.all(np.diff(norms[63:]) < 1e-8)


class TestSigmaForSupNorm:
    """The derived amplitude hits the requested sup norm."""

    def test_target_reached(self):
        grid = make_grid(128)
        sigma0 = sigma0_for_sup_norm(grid, 4, 3.0, 0.1)
        assert sigma_sup_norm(build_noise(grid, 4, sigma0, 3.0)) == pytest.approx(0.1, rel=1e-12)


class TestIncrements:
    """Counter-based sampling is a pure function of the key."""

    def test_same_key_same_values(self):
        a = standard_normals(RngKey(7, 3, 11), 4)
        b = standard_normals(RngKey(7, 3, 11), 4)
        assert np.array_equal(a, b)

    def test_keys_differ(self):
        base = standard_normals(RngKey(7, 0, 0), 4)
        assert not np.array_equal(base, standard_normals(RngKey(7, 0, 1), 4))
        assert not np.array_equal(base, standard_normals(RngKey(7, 1, 0), 4))
        assert not np.array_equal(base, standard_normals(RngKey(8, 0, 0), 4))

    def test_moments(self):
        draws = np.concatenate([standard_normals(RngKey(1, 0, n), 8) for n in range(2000)])
        assert abs(draws.mean()) < 0.05
        assert abs(draws.var() - 1.0) < 0.05

    def test_increment_boundaries_and_scale(self):
        basis = build_noise(make_grid(32), 2, 1.0, 3.0)
        dW = sample_increment(basis, RngKey(5, 0, 0), 1e-4)
        assert dW.values[0] == 0.0
        assert dW.values[-1] == 0.0
        xi = standard_normals(RngKey(5, 0, 0), 2)
        assert np.allclose(dW.values[1:-1], 1e-2 * (xi @ basis.modes)[1:-1])

    def test_zero_noise_increment(self):
        basis = build_noise(make_grid(32), 4, 0.0, 3.0)
        dW = sample_increment(basis, RngKey(5, 0, 0), 1e-4)
        assert np.all(dW.values == 0.0)

    def test_rejects_non_positive_dt(self):
        basis = build_noise(make_grid(32), 4, 0.1, 3.0)
        with pytest.raises(NoiseError):
            sample_increment(basis, RngKey(5, 0, 0), 0.0)

    def test_increment_variance_matches_profile(self):
        basis = build_noise(make_grid(32), 4, 1.0, 3.0)
        dt = 1e-2
        face = 11
        draws = np.array([sample_increment(basis, RngKey(3, 0, n), dt).values[face] for n in range(100_000)])
        expected = dt * basis.variance_profile[face]
        assert draws.var() == pytest.approx(expected, rel=0.05)
