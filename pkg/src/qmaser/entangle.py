"""Entanglement witnesses for the matter-field state: conditional
entropies and the partial-transpose (Peres) test with a guard against
truncation artifacts.

A negative eigenvalue of the partially transposed state certifies
entanglement only if it is a property of the physical state rather than
of the Fock-space cut, so the test compares the spectrum across at
least two truncations and flags the result verified only when the
negative eigenvalue is stable between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .evolve import SampleContext, StrideObserver
from .linalg import partial_trace, partial_transpose, von_neumann_entropy

PT_PERSISTENCE_RTOL = 0.10
"""Relative drift allowed for a negative PT eigenvalue across truncations."""

SUBSTANTIAL_PT = -1e-4
"""Negativity threshold separating entanglement from numerical residue."""


@dataclass(frozen=True)
class EntanglementRecord:
    time: float
    S_cond_m: float
    S_cond_f: float
    min_pt_eigenvalue: float
    pt_negative_mass: float
    truncation_verified: bool


def conditional_entropies(rho_mf: np.ndarray, dim_m: int, n_fock: int):
    """(S(m|f), S(f|m)) = (S_mf - S_f, S_mf - S_m) in units of k_B.

    Either value may be negative; for pure states they are exact
    negatives of each other.
    """
    s_mf = von_neumann_entropy(rho_mf)
    s_m = von_neumann_entropy(partial_trace(rho_mf, dim_m, n_fock, "matter"))
    s_f = von_neumann_entropy(partial_trace(rho_mf, dim_m, n_fock, "field"))
    return s_mf - s_f, s_mf - s_m


def pt_spectrum_stats(rho_mf: np.ndarray, dim_m: int, n_fock: int):
    """(smallest eigenvalue, sum of negative eigenvalues) of rho^PT."""
    evals = np.linalg.eigvalsh(partial_transpose(rho_mf, dim_m, n_fock))
    neg = evals[evals < 0]
    return float(evals[0]), float(neg.sum())


def truncate_field(rho_mf: np.ndarray, dim_m: int, n_fock: int,
                   n_new: int) -> np.ndarray:
    """Project onto the lowest n_new Fock levels and renormalize.

    Probes sensitivity of spectra to the cut; meaningful only when the
    discarded occupancy is small, which propagate() already enforces.
    """
    if not 0 < n_new < n_fock:
        raise ValueError(f"need 0 < n_new < {n_fock}, got {n_new}")
    blocks = rho_mf.reshape(dim_m, n_fock, dim_m, n_fock)
    cut = blocks[:, :n_new, :, :n_new].reshape(dim_m * n_new, dim_m * n_new)
    return np.array(cut) / np.trace(cut).real


def peres_test(states, dim_m: int, time: float = 0.0,
               rel_window: float = PT_PERSISTENCE_RTOL) -> EntanglementRecord:
    """Peres test over the same state at increasing truncations.

    `states` is a sequence of (n_fock, rho_mf) pairs sorted by
    truncation; the reported eigenvalue statistics come from the
    largest one.  truncation_verified is True only when the largest
    truncation shows a negative eigenvalue and every other entry
    reproduces it within `rel_window` relative; with a single entry or
    a non-negative spectrum there is nothing to verify and the flag
    stays False.
    """
    if not states:
        raise ValueError("need at least one (n_fock, rho) pair")
    pairs = sorted(states, key=lambda item: item[0])
    stats = [pt_spectrum_stats(rho, dim_m, nf) for nf, rho in pairs]
    min_pt, neg_mass = stats[-1]

    verified = False
    if len(stats) >= 2 and min_pt < 0:
        drifts = [abs(s[0] - min_pt) / abs(min_pt) for s in stats[:-1]]
        verified = max(drifts) <= rel_window

    n_top, rho_top = pairs[-1]
    s_cond_m, s_cond_f = conditional_entropies(rho_top, dim_m, n_top)
    return EntanglementRecord(time, s_cond_m, s_cond_f, min_pt, neg_mass,
                              verified)


class EntanglementObserver(StrideObserver):
    """Per-sample conditional entropies and PT statistics.

    The PT eigendecomposition costs as much as the entropy one, so it
    can be restricted to t <= pt_t_max (NaN afterwards).  When
    probe_drop > 0 each sampled state is additionally re-truncated by
    that many Fock levels and the persistence flag recorded (1.0
    verified, 0.0 not, NaN when skipped).
    """

    name = "entanglement"
    columns = ("S_cond_m", "S_cond_f", "min_pt_eig", "pt_neg_mass",
               "pt_verified")

    def __init__(self, dim_m: int, every: int = 1,
                 pt_t_max: float = math.inf, probe_drop: int = 0):
        super().__init__(every)
        self.dim_m = dim_m
        self.pt_t_max = pt_t_max
        self.probe_drop = probe_drop

    def sample(self, ctx: SampleContext):
        s_cond_m = ctx.s_mf - ctx.s_f
        s_cond_f = ctx.s_mf - ctx.s_m
        if ctx.time > self.pt_t_max:
            return (s_cond_m, s_cond_f, math.nan, math.nan, math.nan)

        n_fock = ctx.n_fock
        states = [(n_fock, ctx.rho)]
        verified = math.nan
        if 0 < self.probe_drop < n_fock:
            states.insert(0, (n_fock - self.probe_drop,
                              truncate_field(ctx.rho, self.dim_m, n_fock,
                                             n_fock - self.probe_drop)))
        rec = peres_test(states, self.dim_m, time=ctx.time)
        if len(states) > 1:
            verified = 1.0 if rec.truncation_verified else 0.0
        return (s_cond_m, s_cond_f, rec.min_pt_eigenvalue,
                rec.pt_negative_mass, verified)
