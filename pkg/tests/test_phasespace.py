"""Husimi distribution, grids, and ring symmetry metrics."""

import math
import warnings

import numpy as np
import pytest

from qmaser.linalg import coherent_amplitudes, fock_state, thermal_state
from qmaser.phasespace import (
    CoherentState,
    FieldObserver,
    default_axes,
    equal_radius_deviation,
    field_coherence_decay,
    husimi_at,
    husimi_q,
    offdiag_norm,
    ring_asymmetry,
    ring_profile,
)


def coherent_density(alpha, n_fock):
    amp = coherent_amplitudes(alpha, n_fock)
    return np.outer(amp, amp.conj())


class TestHusimiValues:
    def test_vacuum(self):
        rho = np.outer(fock_state(12, 0), fock_state(12, 0))
        pts = np.array([0.0, 0.5, 1.0 + 1.0j, -2.0j])
        q = husimi_at(rho, pts)
        assert np.allclose(q, np.exp(-np.abs(pts) ** 2) / math.pi,
                           rtol=1e-12)

    def test_coherent_gaussian(self):
        beta = 1.2 - 0.3j
        rho = coherent_density(beta, 40)
        pts = beta + np.array([0.0, 0.4, -0.2 + 0.5j])
        expected = np.exp(-np.abs(pts - beta) ** 2) / math.pi
        assert np.allclose(husimi_at(rho, pts), expected, rtol=1e-9)

    def test_peak_value_is_one_over_pi(self):
        rho = coherent_density(0.8 + 0.1j, 30)
        assert np.isclose(husimi_at(rho, np.array([0.8 + 0.1j]))[0],
                          1.0 / math.pi, rtol=1e-12)

    def test_fock_state_ring(self):
        # Q for |n> is rotation invariant with its peak at |alpha|^2 = n
        rho = np.outer(fock_state(10, 3), fock_state(10, 3))
        r = math.sqrt(3.0)
        ring = husimi_at(rho, r * np.exp(1j * np.linspace(0, 2 * np.pi, 17)))
        assert np.ptp(ring) < 1e-15
        expected = math.exp(-3.0) * 27.0 / (6.0 * math.pi)
        assert np.isclose(ring[0], expected, rtol=1e-12)

    def test_matches_overlap_definition(self):
        rng = np.random.default_rng(61)
        m = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        rho = m @ m.conj().T
        rho /= np.trace(rho).real
        alpha = 0.7 + 0.4j
        # unnormalized truncated overlap <alpha|rho|alpha>/pi
        raw = np.exp(-0.5 * abs(alpha) ** 2) \
            * alpha ** np.arange(8) / np.sqrt(
                [math.factorial(n) for n in range(8)])
        expected = np.real(raw.conj() @ rho @ raw) / math.pi
        assert np.isclose(husimi_at(rho, np.array([alpha]))[0], expected,
                          rtol=1e-10)


class TestGrid:
    def test_mass_and_coverage(self):
        grid = husimi_q(coherent_density(1.0, 25), points=101)
        assert abs(grid.mass - 1.0) < 0.01
        assert grid.covers_support
        assert grid.values.min() >= 0.0

    def test_default_axes_mirror_symmetry(self):
        re, im = default_axes(thermal_state(2.0, 30), points=41)
        assert np.array_equal(re, -re[::-1])
        assert np.array_equal(re, im)
        assert re[len(re) // 2] == 0.0

    def test_small_grid_warns(self):
        axis = np.linspace(-0.5, 0.5, 11)
        with pytest.warns(UserWarning, match="mass"):
            grid = husimi_q(coherent_density(2.0, 30), axis, axis)
        assert not grid.covers_support

    def test_rejects_unphysical_values(self):
        rho = 2.0 * np.outer(fock_state(5, 0), fock_state(5, 0))  # trace 2
        with pytest.raises(ValueError, match="breaches"):
            husimi_q(rho, points=41)


class TestSymmetryMetrics:
    def test_equal_radius_deviation_fock_diagonal(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # modest grid is fine here
            grid = husimi_q(thermal_state(1.5, 25), points=81)
        assert equal_radius_deviation(grid) < 1e-15

    def test_equal_radius_deviation_sees_displacement(self):
        grid = husimi_q(coherent_density(1.0, 25), points=81)
        assert equal_radius_deviation(grid) > 1e-2

    def test_ring_profile_shape(self):
        prof = ring_profile(thermal_state(1.0, 20), [0.5, 1.0, 1.5],
                            n_theta=36)
        assert prof.shape == (3, 36)
        # rotation invariance of a diagonal state, ring by ring
        assert np.max(prof.max(axis=1) - prof.min(axis=1)) < 1e-15

    def test_ring_asymmetry_contrast(self):
        diag = ring_asymmetry(thermal_state(1.5, 25))
        displaced = ring_asymmetry(coherent_density(1.5, 30))
        assert diag < 1e-12
        assert displaced > 1.0

    def test_offdiag_norm(self):
        assert offdiag_norm(thermal_state(1.0, 10)) == 0.0
        rho = coherent_density(1.0, 20)
        off = rho - np.diag(np.diag(rho))
        assert np.isclose(offdiag_norm(rho), np.linalg.norm(off))

    def test_coherence_decay_conventions(self):
        series = [coherent_density(1.0, 15), thermal_state(1.0, 15)]
        ratios = field_coherence_decay(series)
        assert np.isclose(ratios[0], 1.0)
        assert ratios[1] == 0.0
        diag_series = [thermal_state(0.5, 10), thermal_state(1.0, 10)]
        assert np.array_equal(field_coherence_decay(diag_series), [0.0, 0.0])
        assert field_coherence_decay([]).size == 0


class TestCoherentState:
    def test_density_moments(self):
        cs = CoherentState(1.5 + 0.5j, 40)
        rho = cs.density()
        assert np.isclose(np.trace(rho).real, 1.0)
        n_mean = np.real(np.trace(rho @ np.diag(np.arange(40.0))))
        assert np.isclose(n_mean, abs(cs.alpha) ** 2, rtol=1e-10)

    def test_truncation_enforced(self):
        with pytest.raises(ValueError):
            CoherentState(5.0, 8).density()


class TestFieldObserver:
    def test_columns(self):
        ob = FieldObserver()
        assert ob.columns == ("n_mean", "offdiag_norm", "diag_norm")
