"""Thermodynamic ledger: energies, heat fluxes, powers, entropies, entropy
production, and engine efficiency for the bipartite matter-field models.

Conventions (interaction picture, hbar = k_B = 1):

* heat flux from reservoir X weighted by an energy piece H_part is
  Tr{L_dX[rho] H_part}; the matter (H_m), interaction (V), and field (H_f)
  pieces are tracked separately.  The field piece vanishes identically
  because the jump operators act on the matter factor alone; it is computed
  anyway as a convention check.
* power exchanged through the coupling: P_part = -i Tr{rho [H_part, V]}.
  On resonance P_m = -P_f.
* energy rates are assembled algebraically from the generator,
  Edot_part = P_part + Qdot_part, so the first-law residuals probe the
  flux decomposition rather than finite-difference noise.
* entropy production sigma = dS_mf/dt - beta_C Qdot_C - beta_H Qdot_H,
  with dS/dt from centered finite differences over the recorded samples
  (one-sided at the ends).  Spohn's inequality guarantees sigma >= 0 for
  the exact dynamics; a sampled value below a small negative floor
  therefore flags an integration or cadence problem, not physics.
  sigma_m restricts both terms to the matter part and may dip below zero
  transiently.

The ledger is recorded by ThermoObserver into a plain column table and can
be lifted into FluxRecord instances for audits and CSV emission.  sigma,
sigma_m, J, J_m and the dS/dt columns require the whole time series, so
the observer stores NaN there and finalize_ledger fills them in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .evolve import SampleContext, StrideObserver
from .linalg import partial_trace
from .models import COLD, HOT, ModelOps

IMAG_TOL = 1e-10

FLUX_TOL = 1e-12
"""Fluxes below this magnitude count as zero for sign classification."""


class FirstLawViolation(RuntimeError):
    """A first-law residual exceeded tolerance; message carries the record."""


@dataclass(frozen=True)
class FluxRecord:
    """One time-sample of the complete thermodynamic ledger.

    Field order up to J_m fixes the CSV column order.  The remaining
    fields carry the reservoir totals, the algebraic energy rates, the
    finite-difference entropy slopes, and positivity diagnostics.
    """

    time: float
    E_mf: float
    E_m: float
    E_f: float
    Qdot_m: float
    Qdot_mC: float
    Qdot_mH: float
    Qdot_V: float
    Qdot_VC: float
    Qdot_VH: float
    P_m: float
    P_f: float
    S_mf: float
    S_m: float
    S_f: float
    S_cond_m: float
    S_cond_f: float
    sigma: float
    sigma_m: float
    J: float
    J_m: float
    Qdot_H: float
    Qdot_C: float
    Qdot_f: float
    V_expt: float
    Edot_mf: float
    Edot_m: float
    Edot_f: float
    dS_mf_dt: float
    dS_m_dt: float
    min_eig: float
    matter_drift_norm: float


FLUX_FIELDS = tuple(f.name for f in fields(FluxRecord))

THERMO_COLUMNS = FLUX_FIELDS[1:]
"""Observer column order; `time` lives in the table's time axis."""

_FINALIZED = ("sigma", "sigma_m", "J", "J_m", "dS_mf_dt", "dS_m_dt")


def _real(z: complex, what: str, tol: float = IMAG_TOL) -> float:
    scale = max(1.0, abs(z))
    if abs(z.imag) > tol * scale:
        raise ValueError(f"{what} has imaginary part {z.imag:.3e}")
    return float(z.real)


def trace_product(a: np.ndarray, b: np.ndarray) -> complex:
    """Tr(a @ b) without forming the product."""
    return complex(np.einsum("ij,ji->", a, b))


def heat_flux(dissipator_out: np.ndarray, h_part: np.ndarray) -> float:
    """Tr{L_d[rho] H_part}, asserted real to IMAG_TOL."""
    return _real(trace_product(dissipator_out, h_part), "heat flux")


def power(rho: np.ndarray, h_part: np.ndarray, v: np.ndarray) -> float:
    """P = -i Tr{rho [H_part, V]}, asserted real to IMAG_TOL."""
    comm = h_part @ v - v @ h_part
    return _real(-1j * trace_product(rho, comm), "power")


def matter_drift(model: ModelOps, rho: np.ndarray) -> np.ndarray:
    """d(rho_m)/dt = Tr_f(L[rho]) as a dim_m x dim_m matrix.

    The matter steady-state detector thresholds the Frobenius norm of
    this; the field block is excluded because the field keeps absorbing
    energy and has no stationary point.
    """
    return partial_trace(model.liouvillian(rho), model.dim_m, model.n_fock,
                         "matter")


class ThermoObserver(StrideObserver):
    """Records the flux/entropy ledger at each firing sample."""

    name = "thermo"
    columns = THERMO_COLUMNS

    def __init__(self, model: ModelOps, every: int = 1):
        super().__init__(every)
        self.model = model

    def sample(self, ctx: SampleContext):
        model = self.model
        rho = ctx.rho
        h_m, h_f, v = model.h_m, model.h_f, model.v

        ld_h = model.dissipator(rho, HOT)
        ld_c = model.dissipator(rho, COLD)

        e_m = _real(trace_product(rho, h_m), "E_m")
        e_f = _real(trace_product(rho, h_f), "E_f")
        v_expt = _real(trace_product(rho, v), "<V>")

        p_m = power(rho, h_m, v)
        p_f = power(rho, h_f, v)

        qdot_mh = heat_flux(ld_h, h_m)
        qdot_mc = heat_flux(ld_c, h_m)
        qdot_vh = heat_flux(ld_h, v)
        qdot_vc = heat_flux(ld_c, v)
        qdot_fh = heat_flux(ld_h, h_f)
        qdot_fc = heat_flux(ld_c, h_f)
        qdot_m = qdot_mh + qdot_mc
        qdot_v = qdot_vh + qdot_vc
        qdot_f = qdot_fh + qdot_fc

        s_mf, s_m, s_f = ctx.s_mf, ctx.s_m, ctx.s_f
        drift = float(np.linalg.norm(matter_drift(model, rho)))
        nan = math.nan

        return (
            e_m + e_f + v_expt, e_m, e_f,
            qdot_m, qdot_mc, qdot_mh,
            qdot_v, qdot_vc, qdot_vh,
            p_m, p_f,
            s_mf, s_m, s_f, s_mf - s_f, s_mf - s_m,
            nan, nan, nan, nan,
            qdot_mh + qdot_vh + qdot_fh, qdot_mc + qdot_vc + qdot_fc,
            qdot_f, v_expt,
            p_m + p_f + qdot_m + qdot_v + qdot_f,
            p_m + qdot_m, p_f + qdot_f,
            nan, nan,
            ctx.min_eigenvalue, drift,
        )


def _entropy_flux(beta: float, q):
    """-beta * q with the convention inf * 0 = 0 (zero-T reservoir,
    exactly zero flux)."""
    if math.isinf(beta):
        with np.errstate(invalid="ignore"):
            return np.where(q == 0.0, 0.0, -np.sign(q) * np.inf)
    return -beta * q


def finalize_ledger(times: np.ndarray, data: np.ndarray,
                    t_hot: float, t_cold: float) -> np.ndarray:
    """Fill the finite-difference and entropy-production columns.

    `data` must follow THERMO_COLUMNS.  Returns a copy with dS_mf_dt,
    dS_m_dt, J, J_m, sigma and sigma_m computed over the sample grid;
    needs at least three samples for the centered differences.
    """
    if data.shape[0] < 3:
        raise ValueError("need at least 3 samples to differentiate entropies")
    col = {name: i for i, name in enumerate(THERMO_COLUMNS)}
    out = data.copy()

    ds_mf = np.gradient(data[:, col["S_mf"]], times)
    ds_m = np.gradient(data[:, col["S_m"]], times)
    beta_h = math.inf if t_hot == 0 else 1.0 / t_hot
    beta_c = math.inf if t_cold == 0 else 1.0 / t_cold
    j = (_entropy_flux(beta_c, data[:, col["Qdot_C"]])
         + _entropy_flux(beta_h, data[:, col["Qdot_H"]]))
    j_m = (_entropy_flux(beta_c, data[:, col["Qdot_mC"]])
           + _entropy_flux(beta_h, data[:, col["Qdot_mH"]]))

    out[:, col["dS_mf_dt"]] = ds_mf
    out[:, col["dS_m_dt"]] = ds_m
    out[:, col["J"]] = j
    out[:, col["J_m"]] = j_m
    out[:, col["sigma"]] = ds_mf + j
    out[:, col["sigma_m"]] = ds_m + j_m
    return out


def records_from_table(times: np.ndarray, data: np.ndarray):
    """Lift a (finalized or raw) ledger table into FluxRecord instances."""
    return [FluxRecord(t, *row) for t, row in zip(times, data)]


def first_law_audit(record: FluxRecord, tol: float = 1e-9):
    """Residuals of the two first-law decompositions.

    Returns (|Edot_mf - Qdot_m - Qdot_V|, |Edot_m + Edot_f - Edot_mf +
    Qdot_V|) and raises FirstLawViolation when either exceeds `tol`.
    """
    res1 = abs(record.Edot_mf - record.Qdot_m - record.Qdot_V)
    res2 = abs(record.Edot_m + record.Edot_f - record.Edot_mf + record.Qdot_V)
    if res1 > tol or res2 > tol:
        raise FirstLawViolation(
            f"first-law residuals ({res1:.3e}, {res2:.3e}) exceed {tol:.1e} "
            f"at t={record.time}: {record}")
    return res1, res2


def entropy_production(record: FluxRecord, t_cold: float, t_hot: float,
                       hard_floor: float = -1e-6):
    """(sigma, sigma_m) for one finalized record.

    sigma = dS_mf/dt - beta_C Qdot_C - beta_H Qdot_H and the matter
    restriction sigma_m.  sigma below `hard_floor` raises: Spohn's
    inequality makes that a correctness failure, not a physical state.
    sigma_m may be transiently negative and is returned unchecked.
    """
    beta_h = math.inf if t_hot == 0 else 1.0 / t_hot
    beta_c = math.inf if t_cold == 0 else 1.0 / t_cold
    sigma = float(record.dS_mf_dt + _entropy_flux(beta_c, record.Qdot_C)
                  + _entropy_flux(beta_h, record.Qdot_H))
    sigma_m = float(record.dS_m_dt + _entropy_flux(beta_c, record.Qdot_mC)
                    + _entropy_flux(beta_h, record.Qdot_mH))
    if sigma < hard_floor:
        raise RuntimeError(
            f"entropy production {sigma:.3e} below {hard_floor:.1e} "
            f"at t={record.time}")
    return sigma, sigma_m


def ledger_invariant_report(times: np.ndarray, data: np.ndarray) -> dict:
    """Worst-case per-sample invariants of a finalized ledger.

    Returns extrema as a dict: min_sigma, max |P_m + P_f|, max |Qdot_f|,
    and the two first-law residual maxima.  Callers compare against
    their tolerances; this just aggregates.
    """
    col = {name: i for i, name in enumerate(THERMO_COLUMNS)}

    def c(name):
        return data[:, col[name]]

    res1 = np.abs(c("Edot_mf") - c("Qdot_m") - c("Qdot_V"))
    res2 = np.abs(c("Edot_m") + c("Edot_f") - c("Edot_mf") + c("Qdot_V"))
    return {
        "n_samples": int(data.shape[0]),
        "t_first": float(times[0]),
        "t_last": float(times[-1]),
        "min_sigma": float(np.min(c("sigma"))),
        "min_sigma_m": float(np.min(c("sigma_m"))),
        "max_abs_p_sum": float(np.max(np.abs(c("P_m") + c("P_f")))),
        "max_abs_qdot_f": float(np.max(np.abs(c("Qdot_f")))),
        "max_first_law_res1": float(np.max(res1)),
        "max_first_law_res2": float(np.max(res2)),
        "min_state_eig": float(np.min(c("min_eig"))),
    }


def detect_matter_steady_state(times: np.ndarray, drift_norm: np.ndarray,
                               pops: np.ndarray, window: float,
                               drift_tol: float = 1e-9,
                               rel_tol: float = 1e-7):
    """Index of the first sample at which the matter is stationary.

    Conditions: ||Tr_f L[rho]||_F < drift_tol and the matter populations
    changed by less than rel_tol (relative, max norm) over the preceding
    `window` of time.  `pops` has one row per sample.  Returns None if
    the run never satisfies both.
    """
    for i in range(len(times)):
        if drift_norm[i] >= drift_tol:
            continue
        j = int(np.searchsorted(times, times[i] - window))
        if j >= i:
            continue
        delta = float(np.max(np.abs(pops[i] - pops[j])))
        scale = max(float(np.max(np.abs(pops[i]))), 1e-30)
        if delta / scale < rel_tol:
            return i
    return None


def engine_efficiency(p_m_ss: float, qdot_mh_ss: float) -> float:
    """eta = -P_m / Qdot_mH at the matter steady state.

    Requires engine mode: hot influx positive beyond FLUX_TOL.  The
    caller compares the result against the Carnot bound.
    """
    if qdot_mh_ss <= FLUX_TOL:
        raise ValueError(
            f"not in engine mode: Qdot_mH = {qdot_mh_ss:.3e} <= 0")
    return -p_m_ss / qdot_mh_ss


class MatterStateObserver(StrideObserver):
    """Matter reduced state per sample: populations, then off-diagonals.

    Column layout for dim_m levels: pop{i} for each level, then
    coh{i}{j}_re / coh{i}{j}_im for each i < j pair.
    """

    name = "matter"

    def __init__(self, dim_m: int, every: int = 1):
        super().__init__(every)
        cols = [f"pop{i}" for i in range(dim_m)]
        for i in range(dim_m):
            for j in range(i + 1, dim_m):
                cols += [f"coh{i}{j}_re", f"coh{i}{j}_im"]
        self.columns = tuple(cols)
        self.dim_m = dim_m

    def sample(self, ctx: SampleContext):
        rho_m = ctx.rho_m
        row = [rho_m[i, i].real for i in range(self.dim_m)]
        for i in range(self.dim_m):
            for j in range(i + 1, self.dim_m):
                row += [rho_m[i, j].real, rho_m[i, j].imag]
        return tuple(row)
