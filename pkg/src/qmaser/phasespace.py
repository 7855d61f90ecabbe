"""Husimi-Kano Q function of the field state on a complex-plane grid,
plus ring-symmetry statistics and field-coherence diagnostics.

Q(alpha) = <alpha|rho_f|alpha>/pi is evaluated through truncated
coherent amplitude vectors, chunked over grid points to keep the
overlap matrix small even at large Fock cuts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .evolve import SampleContext, StrideObserver
from .linalg import coherent_amplitudes

Q_CEILING_SLACK = 1e-10
MASS_WARN = 0.01
_CHUNK = 4096


@dataclass(frozen=True)
class CoherentState:
    """Truncated coherent state |alpha> with adequacy enforced."""

    alpha: complex
    n_fock: int

    @property
    def amplitudes(self) -> np.ndarray:
        return coherent_amplitudes(self.alpha, self.n_fock)

    def density(self) -> np.ndarray:
        amp = self.amplitudes
        return np.outer(amp, amp.conj())


@dataclass(frozen=True)
class QGrid:
    alpha_re_axis: np.ndarray
    alpha_im_axis: np.ndarray
    values: np.ndarray
    time: float
    mass: float
    covers_support: bool


def husimi_at(rho_f: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """Q values at arbitrary complex points (no normalization checks).

    The amplitude vectors are built multiplicatively, so large |alpha|
    underflows to zero overlap instead of overflowing a factorial.
    """
    n_fock = rho_f.shape[0]
    flat = np.asarray(alphas, dtype=complex).ravel()
    out = np.empty(flat.size)
    for lo in range(0, flat.size, _CHUNK):
        chunk = flat[lo:lo + _CHUNK]
        # rows: e^{-|a|^2/2} a^n / sqrt(n!) via cumulative products
        steps = chunk[:, None] / np.sqrt(np.arange(1, n_fock))[None, :]
        amp = np.concatenate(
            [np.ones((chunk.size, 1), dtype=complex),
             np.cumprod(steps, axis=1)], axis=1)
        amp *= np.exp(-0.5 * np.abs(chunk) ** 2)[:, None]
        vals = np.einsum("gi,ij,gj->g", amp.conj(), rho_f, amp)
        out[lo:lo + _CHUNK] = vals.real / math.pi
    return out.reshape(np.shape(alphas))


def default_axes(rho_f: np.ndarray, points: int = 201):
    """Square grid reaching 4 units beyond the mean field amplitude.

    Built from a mirrored positive half so that +x and -x are exact
    floating-point negatives; the equal-radius symmetry metric depends
    on that.
    """
    n_mean = float(np.real(np.diag(rho_f) @ np.arange(rho_f.shape[0])))
    reach = math.sqrt(max(n_mean, 0.0)) + 4.0
    if points % 2 == 0:
        points += 1
    half = np.linspace(0.0, reach, points // 2 + 1)[1:]
    axis = np.concatenate([-half[::-1], [0.0], half])
    return axis, axis.copy()


def husimi_q(rho_f: np.ndarray, alpha_re_axis=None, alpha_im_axis=None,
             time: float = 0.0, points: int = 201) -> QGrid:
    """Evaluate Q on a Cartesian grid and check its invariants.

    Values are clipped to exact zero where roundoff drops them a hair
    below; anything beyond the slack (negative or above 1/pi) raises.
    The Riemann mass flags grids that miss more than 1% of the state.
    """
    if alpha_re_axis is None or alpha_im_axis is None:
        alpha_re_axis, alpha_im_axis = default_axes(rho_f, points)
    re = np.asarray(alpha_re_axis, dtype=float)
    im = np.asarray(alpha_im_axis, dtype=float)
    alphas = re[None, :] + 1j * im[:, None]
    values = husimi_at(rho_f, alphas)

    ceiling = 1.0 / math.pi
    low, high = values.min(), values.max()
    if low < -Q_CEILING_SLACK * ceiling or high > ceiling * (1 + Q_CEILING_SLACK):
        raise ValueError(f"Q range [{low:.3e}, {high:.3e}] breaches "
                         f"[0, 1/pi]")
    values = np.clip(values, 0.0, None)

    mass = float(values.sum()) * _cell_area(re, im)
    covers = abs(mass - 1.0) <= MASS_WARN
    if not covers:
        warnings.warn(f"Q grid captures mass {mass:.4f}; enlarge the grid "
                      "if the full state is needed", stacklevel=2)
    return QGrid(re, im, values, time, mass, covers)


def _cell_area(re: np.ndarray, im: np.ndarray) -> float:
    return float((re[1] - re[0]) * (im[1] - im[0]))


def equal_radius_deviation(grid: QGrid) -> float:
    """Largest spread of Q over grid points sharing an exact radius.

    Vanishes (up to roundoff) for a Fock-diagonal field state, whose Q
    depends on |alpha| alone.  Points are grouped by the bitwise value
    of re^2+im^2, which the mirrored default axes make meaningful: the
    reflections and the transpose of a point land on the same float.
    """
    re, im = np.meshgrid(grid.alpha_re_axis, grid.alpha_im_axis)
    r2 = (re ** 2 + im ** 2).ravel()
    q = grid.values.ravel()
    order = np.argsort(r2, kind="stable")
    r2s, qs = r2[order], q[order]
    starts = np.flatnonzero(np.concatenate(([True], r2s[1:] != r2s[:-1])))
    highs = np.maximum.reduceat(qs, starts)
    lows = np.minimum.reduceat(qs, starts)
    return float(np.max(highs - lows))


def ring_profile(rho_f: np.ndarray, radii, n_theta: int = 72) -> np.ndarray:
    """Q sampled on polar rings, one row per radius.

    Evaluation is exact at every ring point (no interpolation from a
    Cartesian grid), so angular structure down to roundoff is visible.
    """
    radii = np.asarray(radii, dtype=float)
    theta = np.arange(n_theta) * (2 * math.pi / n_theta)
    alphas = radii[:, None] * np.exp(1j * theta)[None, :]
    return husimi_at(rho_f, alphas)


def ring_asymmetry(rho_f: np.ndarray, radii=None, n_theta: int = 72,
                   level: float = 1e-3) -> float:
    """Worst angular variation (max-min)/mean over mass-carrying rings.

    Rings whose mean Q falls below `level` times the strongest ring are
    ignored; far outside the support the ratio is pure roundoff noise.
    """
    if radii is None:
        n_mean = float(np.real(np.diag(rho_f) @ np.arange(rho_f.shape[0])))
        reach = math.sqrt(max(n_mean, 0.0)) + 4.0
        radii = np.linspace(reach / 60, reach, 60)
    profile = ring_profile(rho_f, radii, n_theta)
    means = profile.mean(axis=1)
    keep = means >= level * means.max()
    if not keep.any():
        raise ValueError("no ring carries Q mass above the level cut")
    spread = profile[keep].max(axis=1) - profile[keep].min(axis=1)
    return float(np.max(spread / means[keep]))


def offdiag_norm(rho_f: np.ndarray) -> float:
    """Frobenius norm of the off-diagonal part."""
    off = rho_f - np.diag(np.diag(rho_f))
    return float(np.linalg.norm(off))


def field_coherence_decay(rho_f_series) -> np.ndarray:
    """Off-diagonal norm of each field state relative to the first.

    A series that starts diagonal has nothing to decay; all ratios are
    then zero by convention.
    """
    norms = np.array([offdiag_norm(r) for r in rho_f_series])
    if norms.size == 0:
        return norms
    if norms[0] == 0.0:
        return np.zeros_like(norms)
    return norms / norms[0]


class FieldObserver(StrideObserver):
    """Cheap per-sample field diagnostics from the reduced state."""

    name = "field"
    columns = ("n_mean", "offdiag_norm", "diag_norm")

    def sample(self, ctx: SampleContext):
        rho_f = ctx.rho_f
        n_mean = float(np.real(np.sum(np.diag(rho_f)
                                      * np.arange(rho_f.shape[0]))))
        return (n_mean, offdiag_norm(rho_f),
                float(np.linalg.norm(np.diag(rho_f))))
