"""Reproduction battery: reference runs plus the checks that compare
them against the published numbers.

The expensive part is a small set of quantum reference runs at the
published operating point (vacuum start and a family of coherent
starts).  They are executed once and cached as compressed archives
keyed by the run recipe and a digest of every numerics module, so a
change to either invalidates exactly the runs it touches.  The check
functions are cheap; they only read the cached tables and snapshots.

Checks report honestly.  A published value that the corrected algebra
cannot reach is encoded as an expected failure with the analysis in
its detail string, never patched to pass.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import (_kernels, config as config_module, entangle, evolve, linalg,
               models, phasespace, runners, semiclassical, thermo)
from .config import structure_config
from .entangle import peres_test
from .evolve import IntegrationConfig, liouvillian_expm, propagate, \
    steady_state_power_fit
from .linalg import partial_trace
from .models import DampedJCMParams, MaserParams
from .phasespace import ring_asymmetry
from .runners import build_initial_state, finalize_quantum, run_quantum
from .semiclassical import (SemiclassicalParams, boltzmann_inversion_ratio,
                            relaxation_time, sc_derivative, sc_generator,
                            sc_propagate, sc_steady_state)
from .thermo import (THERMO_COLUMNS, MatterStateObserver, ThermoObserver,
                     detect_matter_steady_state, engine_efficiency,
                     ledger_invariant_report)

REF = MaserParams()
TE = 1.0 / REF.gamma_eff

# Values the battery reproduces, with their tolerances.
FIELD_POWER_SLOPE = 4.5975e-5          # rel 2e-2, R^2 >= 0.9999
EFFICIENCY = (0.750, 0.005)
CARNOT = (0.990, 0.001)
FREQ_RATIO_RTOL = 1e-3                 # eta vs omega_s/omega_p
FLUX_DEV = 0.005
SWEEP_ENDPOINT_TOL = 1e-8
SWEEP_SEED = 20260816

# Reported population ratios r = B/C per drive strength.  Only the
# middle entry is consistent with the corrected constants; the outer
# two decay a decade per drive decade, which no 1/drive^2 law can do.
PRINTED_R = {0.1: "1.01", 1.0: "1.00001", 10.0: "1.00000001"}
CORRECTED_R = {0.1: 1.001185883326, 1.0: 1.000011860380,
               10.0: 1.000000118604}

_NUMERIC_MODULES = (linalg, models, _kernels, evolve, thermo, entangle,
                    phasespace, semiclassical, config_module, runners)


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one acceptance check.

    expected_fail marks a documented deviation from the published
    table; such a row failing is the anticipated outcome and does not
    count against the battery.
    """

    criterion: int
    label: str
    passed: bool
    value: str
    bound: str
    detail: str = ""
    expected_fail: bool = False

    @property
    def ok(self) -> bool:
        return self.passed or self.expected_fail

    def line(self) -> str:
        if self.passed:
            status = "PASS"
        elif self.expected_fail:
            status = "XFAIL"
        else:
            status = "FAIL"
        return (f"{status} criterion {self.criterion} [{self.label}]: "
                f"{self.value} vs {self.bound}"
                + (f" ({self.detail})" if self.detail else ""))


# ---------------------------------------------------------------------------
# reference run recipes
# ---------------------------------------------------------------------------


def _model_table(n_fock: int) -> dict:
    return {"gamma01": 1e-3, "gamma02": 1e-3, "n01": 10.0, "n02": 0.1,
            "lam": 1.0, "omega0": 0.0, "omega1": 0.1, "omega2": 0.025,
            "omega_f": 0.075, "n_fock": n_fock}


def _coherent(alpha_abs: float) -> dict:
    return {"matter": 1,
            "field": {"type": "coherent", "alpha_abs": alpha_abs}}


def _windows(*specs) -> list:
    """Window tables from (duration, stride) or (duration, stride, step_h).

    The long tails ride a coarser step than the transient; a fourth-order
    step at h=0.025 reproduces the h=0.01 fluxes to a few 1e-6 relative
    while the acceptance tolerances sit at 5e-3 and up.  Strides are
    chosen per window so the physical sampling interval stays the same
    as a uniform-step plan would give.
    """
    out = []
    for spec in specs:
        d, s = spec[0], spec[1]
        w = {"duration": d, "sample_stride": s}
        if len(spec) > 2:
            w["step_h"] = spec[2]
        out.append(w)
    return out


_BASE_OBSERVERS = {"thermo_every": 1, "matter_every": 1, "field_every": 1}


def reference_recipes() -> dict:
    """Raw run configurations for every cached reference run.

    vacuum   : empty cavity, 300/Gamma_eff; field-power slope,
               efficiency, and the long second-law sweep.
    f<k>     : coherent start with |alpha|^2 = k; the flux-agreement
               and frequency-identity points.
    f5       : additionally carries the entanglement timeline and the
               late-time ring-symmetry snapshot (253/Gamma_eff).
    f5_refined: ten extra Fock levels to verify the partial-transpose
               spectrum against truncation.
    """
    runs = {
        "vacuum": {
            "mode": "quantum",
            "model": _model_table(30),
            "initial": {"matter": 1, "field": {"type": "fock", "n": 0}},
            "integration": {
                "windows": _windows((2 * TE, 25, 0.01), (18 * TE, 50, 0.02),
                                    (280 * TE, 320, 0.025)),
            },
            "observers": dict(_BASE_OBSERVERS),
        },
        "f5": {
            "mode": "quantum",
            "model": _model_table(43),
            "initial": _coherent(math.sqrt(5.0)),
            "integration": {
                "windows": _windows((2.5 * TE, 10, 0.01),
                                    (9.5 * TE, 50, 0.02),
                                    (241 * TE, 200, 0.025)),
            },
            "observers": dict(_BASE_OBSERVERS, entangle_every=1,
                              pt_t_max=2.5 * TE, probe_drop=10,
                              qfunction_times=[TE / 2, 2 * TE, 10 * TE,
                                               253 * TE]),
        },
        "f5_refined": {
            "mode": "quantum",
            "model": _model_table(53),
            "initial": _coherent(math.sqrt(5.0)),
            "integration": {"windows": _windows((0.55 * TE, 10))},
            "observers": dict(_BASE_OBSERVERS, entangle_every=1,
                              snapshot_times=[TE / 2]),
        },
        "f25": {
            "mode": "quantum",
            "model": _model_table(85),
            "initial": _coherent(5.0),
            "integration": {
                "windows": _windows((2 * TE, 25, 0.01), (18 * TE, 50, 0.02)),
            },
            "observers": dict(_BASE_OBSERVERS),
        },
        "f100": {
            "mode": "quantum",
            "model": _model_table(200),
            "initial": _coherent(10.0),
            "integration": {
                "windows": _windows((2 * TE, 50, 0.01), (10 * TE, 100, 0.02)),
            },
            "observers": dict(_BASE_OBSERVERS),
        },
    }
    for alpha, name, n_fock in ((0.1, "f0_01", 30), (0.5, "f0_25", 30),
                                (1.0, "f1", 30), (2.0, "f4", 40)):
        runs[name] = {
            "mode": "quantum",
            "model": _model_table(n_fock),
            "initial": _coherent(alpha),
            "integration": {
                "windows": _windows((2 * TE, 25, 0.01), (18 * TE, 50, 0.02)),
            },
            "observers": dict(_BASE_OBSERVERS),
        }
    for name, recipe in runs.items():
        recipe["out_dir"] = f"runs/ref_{name}"
    return runs


RUN_ORDER = ("vacuum", "f5", "f5_refined", "f25", "f100",
             "f0_01", "f0_25", "f1", "f4")


# ---------------------------------------------------------------------------
# execution and caching
# ---------------------------------------------------------------------------


@dataclass
class ReferenceRun:
    name: str
    key: str
    raw: dict
    params: MaserParams
    tables: dict
    snapshots: list
    trace_err: np.ndarray
    final_time: float
    n_fock_history: list
    wall_time_s: float


def source_digest() -> str:
    """Joint digest of the numerics modules a cached run depends on."""
    h = hashlib.sha256()
    for module in _NUMERIC_MODULES:
        with open(module.__file__, "rb") as fh:
            h.update(hashlib.sha256(fh.read()).digest())
    return h.hexdigest()


def run_key(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, default=str) + source_digest()
    return hashlib.sha256(blob.encode()).hexdigest()


def _save_cached(path: Path, run: ReferenceRun):
    meta = {
        "name": run.name,
        "key": run.key,
        "raw": run.raw,
        "model": asdict(run.params),
        "columns": {name: table["columns"]
                    for name, table in run.tables.items()},
        "final_time": run.final_time,
        "n_fock_history": run.n_fock_history,
        "wall_time_s": run.wall_time_s,
    }
    arrays = {"trace_err": run.trace_err,
              "snap_times": np.array([t for t, _ in run.snapshots])}
    for i, (_, rho) in enumerate(run.snapshots):
        arrays[f"snap{i}"] = rho
    for name, table in run.tables.items():
        arrays[f"tbl_{name}_times"] = table["times"]
        arrays[f"tbl_{name}_data"] = table["data"]
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, meta=json.dumps(meta), **arrays)


def _load_cached(path: Path):
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["meta"]))
        tables = {}
        for name, columns in meta["columns"].items():
            tables[name] = {"columns": columns,
                            "times": npz[f"tbl_{name}_times"],
                            "data": npz[f"tbl_{name}_data"]}
        snap_times = npz["snap_times"]
        snapshots = [(float(t), npz[f"snap{i}"])
                     for i, t in enumerate(snap_times)]
        trace_err = npz["trace_err"]
    return ReferenceRun(
        name=meta["name"], key=meta["key"], raw=meta["raw"],
        params=MaserParams(**meta["model"]), tables=tables,
        snapshots=snapshots, trace_err=trace_err,
        final_time=meta["final_time"],
        n_fock_history=meta["n_fock_history"],
        wall_time_s=meta["wall_time_s"])


def execute_reference_run(name: str, cache_dir, force: bool = False,
                          log=None) -> ReferenceRun:
    """Return the named reference run, computing it only on cache miss."""
    log = log or (lambda msg: None)
    raw = reference_recipes()[name]
    key = run_key(raw)
    path = Path(cache_dir) / f"{name}.npz"
    if path.exists() and not force:
        cached = _load_cached(path)
        if cached.key == key:
            return cached
        log(f"{name}: cache is stale (recipe or numerics changed); rerunning")

    cfg = structure_config(raw)
    log(f"{name}: running (this is the slow part)")
    model = cfg.model.build()
    rho0 = build_initial_state(cfg.initial, model)
    result = run_quantum(model, rho0, cfg.plan, cfg.observers)
    finalize_quantum(result, cfg.model.t_hot, cfg.model.t_cold)
    run = ReferenceRun(
        name=name, key=key, raw=raw, params=cfg.model,
        tables=result.tables, snapshots=result.snapshots,
        trace_err=result.trace_err, final_time=result.final_time,
        n_fock_history=result.n_fock_history,
        wall_time_s=result.wall_time_s)
    _save_cached(path, run)
    log(f"{name}: done in {run.wall_time_s:.0f}s "
        f"(n_fock {run.n_fock_history})")
    return run


def execute_all_runs(cache_dir, force: bool = False, log=None) -> dict:
    return {name: execute_reference_run(name, cache_dir, force, log)
            for name in RUN_ORDER}


# ---------------------------------------------------------------------------
# shared readers
# ---------------------------------------------------------------------------


def _thermo(run: ReferenceRun):
    table = run.tables["thermo"]
    col = {name: i for i, name in enumerate(THERMO_COLUMNS)}
    return table["times"], table["data"], col


def steady_flux_summary(tables: dict, gamma_eff: float,
                        span_units: float = 2.0) -> dict:
    """Trailing-mean fluxes with the detection verdict.

    Prefers the formal steady-state detector; when a shorter run ends
    before the drift crosses its threshold, falls back to a trailing
    window of span_units relaxation times and reports the half-window
    stability so the caller can see how settled the tail really is.
    """
    table = tables["thermo"]
    times, data = table["times"], table["data"]
    col = {name: i for i, name in enumerate(THERMO_COLUMNS)}
    drift = data[:, col["matter_drift_norm"]]
    matter = tables.get("matter")
    idx = None
    if matter is not None and matter["times"].shape == times.shape \
            and np.allclose(matter["times"], times):
        idx = detect_matter_steady_state(times, drift,
                                         matter["data"][:, :3],
                                         window=1.0 / gamma_eff)
    detected = idx is not None
    if detected:
        tail = np.arange(len(times)) >= idx
    else:
        tail = times >= times[-1] - span_units / gamma_eff

    def mean(name):
        return float(np.mean(data[tail, col[name]]))

    split = times[-1] - (times[-1] - times[tail][0]) / 2
    first = tail & (times < split)
    second = tail & (times >= split)
    p_a = float(np.mean(data[first, col["P_m"]]))
    p_b = float(np.mean(data[second, col["P_m"]]))
    stability = abs(p_b - p_a) / max(abs(mean("P_m")), 1e-300)

    return {
        "detected": detected,
        "t_detect": float(times[idx]) if detected else None,
        "t_tail": float(times[tail][0]),
        "P_m": mean("P_m"),
        "Qdot_mH": mean("Qdot_mH"),
        "Qdot_mC": mean("Qdot_mC"),
        "Qdot_H": mean("Qdot_H"),
        "Qdot_C": mean("Qdot_C"),
        "drift_end": float(drift[-1]),
        "stability": stability,
    }


def _nearest_row(times: np.ndarray, t: float) -> int:
    return int(np.argmin(np.abs(times - t)))


def _nearest_snapshot(run: ReferenceRun, t: float):
    if not run.snapshots:
        raise ValueError(f"run {run.name} recorded no snapshots")
    t_snap, rho = min(run.snapshots, key=lambda item: abs(item[0] - t))
    return t_snap, rho


def _rel(value: float, ref: float) -> float:
    return abs(value - ref) / abs(ref)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def check_field_power(run: ReferenceRun) -> list:
    """Criterion 1: trailing slope of the field energy."""
    times, data, col = _thermo(run)
    window = int(np.sum(times >= run.final_time / 2))
    slope, r2 = steady_state_power_fit(times, data[:, col["E_f"]], window)
    rel = _rel(slope, FIELD_POWER_SLOPE)
    long_enough = run.final_time >= 300 * TE - 1e-6
    wide_enough = min(run.n_fock_history) >= 25
    passed = rel <= 0.02 and r2 >= 0.9999 and long_enough and wide_enough
    return [CheckResult(
        1, "steady field power",
        passed,
        f"slope={slope:.6e}, R2={r2:.6f}",
        f"{FIELD_POWER_SLOPE:.4e} within 2%, R2 >= 0.9999",
        f"rel_err={rel:.2e}, fit over last {window} samples, "
        f"t_final={run.final_time:.4g}, n_fock={run.n_fock_history}")]


def check_efficiency(run: ReferenceRun) -> list:
    """Criterion 2: engine efficiency and the Carnot bound."""
    ss = steady_flux_summary(run.tables, run.params.gamma_eff)
    eta = engine_efficiency(ss["P_m"], ss["Qdot_mH"])
    carnot = run.params.carnot
    out = [CheckResult(
        2, "engine efficiency",
        abs(eta - EFFICIENCY[0]) <= EFFICIENCY[1],
        f"eta={eta:.6f}",
        f"{EFFICIENCY[0]} +- {EFFICIENCY[1]}",
        f"P_m={ss['P_m']:.4e}, Qdot_mH={ss['Qdot_mH']:.4e}, "
        f"detected={ss['detected']} at t={ss['t_detect']}")]
    out.append(CheckResult(
        2, "Carnot bound",
        abs(carnot - CARNOT[0]) <= CARNOT[1] and eta <= carnot,
        f"carnot={carnot:.6f}, eta={eta:.6f}",
        f"{CARNOT[0]} +- {CARNOT[1]} and eta <= carnot",
        f"T_hot={run.params.t_hot:.6f}, T_cold={run.params.t_cold:.6f}"))
    return out


_FREQ_POINTS = (("vacuum", 0), ("f5", 5), ("f25", 25), ("f100", 100))


def check_frequency_identity(runs: dict) -> list:
    """Criterion 3: eta equals the signal/pump frequency ratio."""
    out = []
    for name, strength in _FREQ_POINTS:
        run = runs[name]
        ss = steady_flux_summary(run.tables, run.params.gamma_eff)
        eta = engine_efficiency(ss["P_m"], ss["Qdot_mH"])
        target = run.params.omega_s / run.params.omega_p
        rel = _rel(eta, target)
        out.append(CheckResult(
            3, f"eta at |alpha|^2={strength}",
            rel <= FREQ_RATIO_RTOL,
            f"eta={eta:.6f}",
            f"omega_s/omega_p={target:g} within {FREQ_RATIO_RTOL:g} rel",
            f"rel_err={rel:.2e}, detected={ss['detected']}, "
            f"tail_stability={ss['stability']:.1e}"))
    return out


def check_semiclassical_sweep(n_points: int = 100,
                              seed: int = SWEEP_SEED) -> list:
    """Criterion 4: numeric relaxation reaches the closed-form state."""
    rng = np.random.default_rng(seed)
    worst_end = worst_abc = worst_res = 0.0
    for _ in range(n_points):
        g1, g2 = 10.0 ** rng.uniform(-4, -2, size=2)
        n1, n2 = rng.uniform(0.0, 20.0, size=2)
        lam = 10.0 ** rng.uniform(-3, 1)
        p = SemiclassicalParams(gamma01=g1, gamma02=g2, n01=n1, n02=n2,
                                lambda_sc=lam, omega=0.075)
        ss = sc_steady_state(p)
        worst_abc = max(worst_abc, abs(ss.A + ss.B + ss.C - ss.F) / ss.F)
        res = np.linalg.norm(sc_derivative(ss.rho_ss, p))
        scale = np.linalg.norm(sc_generator(p))
        worst_res = max(worst_res, res / scale)

        # The drive only oscillates; stepping near the stability edge
        # damps those modes numerically while the slow decay toward the
        # fixed point stays accurately resolved.
        fastest = max(lam, 2 * g1 * (2 * n1 + 1), 2 * g2 * (2 * n2 + 1))
        cfg = IntegrationConfig(step_h=0.35 / fastest,
                                t_final=relaxation_time(p, factor=25.0),
                                sample_stride=10 ** 9)
        traj = sc_propagate(np.eye(3) / 3.0, p, cfg)
        end = float(np.max(np.abs(traj.final_state.rho - ss.rho_ss)))
        worst_end = max(worst_end, end)
    passed = (worst_end <= SWEEP_ENDPOINT_TOL and worst_abc <= 1e-12
              and worst_res <= 1e-12)
    return [CheckResult(
        4, "closed form vs relaxation",
        passed,
        f"worst endpoint diff {worst_end:.2e}",
        f"<= {SWEEP_ENDPOINT_TOL:g} over {n_points} random points",
        f"worst A+B+C-F rel {worst_abc:.2e} (<=1e-12), "
        f"worst residual {worst_res:.2e} (<=1e-12), seed {seed}")]


def check_inversion_ratio() -> list:
    """Criterion 5: population ratio r = B/C against the reported digits.

    The corrected constants give r - 1 proportional to 1/drive^2, so
    the reported decade-per-decade sequence can only match at the
    middle drive strength.  The outer two rows are expected failures;
    the corrected values and the bare two-reservoir ratio must hold.
    """
    out = []
    worst_corr = 0.0
    for e0, text in PRINTED_R.items():
        p = SemiclassicalParams(gamma01=1e-3, gamma02=1e-3, n01=10.0,
                                n02=0.1, lambda_sc=e0, omega=0.075)
        r = sc_steady_state(p).r
        decimals = len(text.partition(".")[2])
        match = abs(r - float(text)) < 0.5 * 10.0 ** (-decimals)
        worst_corr = max(worst_corr, abs(r - CORRECTED_R[e0]))
        out.append(CheckResult(
            5, f"reported digits at drive {e0:g}",
            match,
            f"r={r:.12f}",
            f"rounds to {text}",
            "reported value inconsistent with its own constants; "
            f"corrected r={CORRECTED_R[e0]:.12f}" if e0 != 1.0 else "",
            expected_fail=(e0 != 1.0)))
    out.append(CheckResult(
        5, "corrected closed form",
        worst_corr <= 1e-9,
        f"max |r - expected| = {worst_corr:.2e}",
        "<= 1e-9 at all three drives",
        "frozen from the corrected constants"))
    rb = boltzmann_inversion_ratio(SemiclassicalParams(
        gamma01=1e-3, gamma02=1e-3, n01=10.0, n02=0.1, lambda_sc=1.0,
        omega=0.075))
    out.append(CheckResult(
        5, "two-reservoir ratio without drive",
        abs(rb - 10.0) <= 1e-12,
        f"{rb:.15g}",
        "10.0 (exact in real arithmetic)",
        "n01 (n02+1) / (n02 (n01+1))"))
    return out


_FLUX_POINTS = ((0.1, "f0_01"), (0.5, "f0_25"), (1.0, "f1"), (2.0, "f4"),
                (5.0, "f25"), (10.0, "f100"))


def check_flux_agreement(runs: dict) -> list:
    """Criterion 6: quantum steady fluxes vs the classical-drive forms."""
    out = []
    for alpha, name in _FLUX_POINTS:
        run = runs[name]
        ss = steady_flux_summary(run.tables, run.params.gamma_eff)
        scp = SemiclassicalParams.from_quantum(run.params, alpha)
        ref = sc_steady_state(scp)
        devs = {"P": _rel(ss["P_m"], ref.P_ss),
                "Qdot_H": _rel(ss["Qdot_H"], ref.Qdot_H_ss),
                "Qdot_C": _rel(ss["Qdot_C"], ref.Qdot_C_ss)}
        worst = max(devs.values())
        out.append(CheckResult(
            6, f"fluxes at |alpha|={alpha:g}",
            worst <= FLUX_DEV,
            f"worst dev {worst:.2e}",
            f"<= {FLUX_DEV:g} for P, Qdot_H, Qdot_C",
            ", ".join(f"{k}={v:.2e}" for k, v in devs.items())
            + f", detected={ss['detected']}"))
    return out


def check_second_law(runs: dict) -> list:
    """Criterion 7: entropy production and bookkeeping on every sample."""
    ok = True
    lines = []
    for name, run in runs.items():
        times, data, col = _thermo(run)
        rep = ledger_invariant_report(times, data)
        trace = float(run.trace_err.max())
        good = (rep["min_sigma"] >= -1e-9
                and rep["max_first_law_res1"] <= 1e-9
                and rep["max_first_law_res2"] <= 1e-9
                and rep["max_abs_p_sum"] <= 1e-10
                and rep["max_abs_qdot_f"] <= 1e-12
                and trace <= 1e-8)
        ok = ok and good
        lines.append(
            f"{name}: sigma_min={rep['min_sigma']:.1e}, "
            f"res=({rep['max_first_law_res1']:.1e},"
            f"{rep['max_first_law_res2']:.1e}), "
            f"p_sum={rep['max_abs_p_sum']:.1e}, "
            f"qdot_f={rep['max_abs_qdot_f']:.1e}, trace={trace:.1e}"
            + ("" if good else " BREACH"))
    return [CheckResult(
        7, "second law and bookkeeping",
        ok,
        f"{len(runs)} runs, {sum(len(r.tables['thermo']['times']) for r in runs.values())} samples",
        "sigma >= -1e-9, residuals <= 1e-9, |P_m+P_f| <= 1e-10, "
        "|Qdot_f| <= 1e-12, trace drift <= 1e-8",
        "; ".join(lines))]


def _excited_product(model) -> np.ndarray:
    weights = [0.0] * model.dim_m
    weights[1] = 1.0
    rho_m = np.diag(np.array(weights, dtype=np.complex128))
    fock0 = np.zeros((model.n_fock, model.n_fock), dtype=np.complex128)
    fock0[0, 0] = 1.0
    return np.kron(rho_m, fock0)


def _lossless_checks(params: DampedJCMParams) -> list:
    """Vacuum oscillation period and entropy conservation at zero damping."""
    model = params.build()
    rho0 = _excited_product(model)
    target = math.pi / params.lam
    # The entropy bound needs a fine step: a pure state's zero
    # eigenvalues amplify integrator error as -eps*log(eps).
    cfg = IntegrationConfig(step_h=0.0025 / max(1.0, params.lam),
                            t_final=5 * target, sample_stride=1)
    obs = [ThermoObserver(model), MatterStateObserver(model.dim_m)]
    traj = propagate(rho0, model, cfg, obs)

    mt = traj.tables["matter"]
    pop1 = mt["data"][:, mt["columns"].index("pop1")]
    t = mt["times"]
    s = pop1 - 0.5
    down = np.flatnonzero((s[:-1] > 0) & (s[1:] <= 0))
    crossings = t[down] + s[down] * (t[down + 1] - t[down]) / (
        s[down] - s[down + 1])
    period = float(np.mean(np.diff(crossings)))
    rel = _rel(period, target)
    out = [CheckResult(
        8, "lossless vacuum oscillation period",
        rel <= 1e-3 and len(crossings) >= 3,
        f"period={period:.8f}",
        f"{target:.8f} within 0.1% rel",
        f"rel_err={rel:.2e} from {len(crossings)} crossings")]

    th = traj.tables["thermo"]
    s_mf = float(np.max(np.abs(th["data"][:, THERMO_COLUMNS.index("S_mf")])))
    out.append(CheckResult(
        8, "lossless entropy conservation",
        s_mf <= 1e-9,
        f"max |S_mf| = {s_mf:.2e}",
        "<= 1e-9",
        "pure product start stays pure without damping"))
    return out


def _expm_check(params, label: str, step_h: float = 0.0025,
                max_steps: int = 2 * 10 ** 6) -> CheckResult:
    """Stepper vs dense exponential of the same truncated generator.

    params is any parameter set with build() and gamma_eff; horizons
    are fractions of the relaxation time (or the oscillation period
    when there is no damping), capped by a step budget for very slow
    configurations.
    """
    model = params.build()
    gamma_eff = params.gamma_eff
    base = 1.0 / gamma_eff if gamma_eff > 0 else math.pi / params.lam
    step_h = step_h / max(1.0, params.lam, 10.0 * gamma_eff)
    rho0 = _excited_product(model)
    worst = 0.0
    capped = False
    horizons = []
    for factor in (0.1, 1.0, 10.0):
        t = factor * base
        if t / step_h > max_steps:
            t = max_steps * step_h
            capped = True
        cfg = IntegrationConfig(step_h=step_h, t_final=t,
                                sample_stride=10 ** 9,
                                occupancy_threshold=2.0)
        traj = propagate(rho0, model, cfg)
        ref = liouvillian_expm(rho0, model, traj.final_time)
        worst = max(worst, float(np.max(np.abs(traj.final_state - ref))))
        horizons.append(traj.final_time)
    return CheckResult(
        8, f"stepper vs exponential on {label}",
        worst <= 1e-7,
        f"max entrywise diff {worst:.2e}",
        "<= 1e-7 at horizons " + ", ".join(f"{h:.4g}" for h in horizons),
        "identical truncated generator on both routes"
        + ("; longest horizon capped by step budget" if capped else ""))


def check_oracles() -> list:
    """Criterion 8: stepping against the exponential, plus the lossless
    limit (conserved global entropy, vacuum oscillation period)."""
    out = _lossless_checks(DampedJCMParams(gamma=0.0, n_th=0.0, lam=1.0,
                                           n_fock=5))
    out.append(_expm_check(
        DampedJCMParams(gamma=0.05, n_th=0.5, lam=1.0, n_fock=3), "2x3"))
    out.append(_expm_check(MaserParams(n_fock=4), "3x4"))
    return out


def jcm_validation(params: DampedJCMParams) -> list:
    """Integrator validation on a configurable damped matter-field pair.

    Zero damping exercises the oscillation period and entropy
    conservation; any configuration small enough for the dense
    exponential is additionally held to it entrywise.
    """
    if params.lam == 0 and params.gamma == 0:
        raise ValueError("model has neither coupling nor damping; "
                         "nothing to validate")
    out = []
    if params.gamma == 0.0 and params.lam > 0:
        out += _lossless_checks(params)
    if 2 * params.n_fock <= 36:
        out.append(_expm_check(params, f"2x{params.n_fock}"))
    if not out:
        raise ValueError(
            "damped model too large for the exponential oracle "
            "(need 2*n_fock <= 36); reduce n_fock")
    return out


def check_entanglement(runs: dict) -> list:
    """Criterion 9: negativity timeline of the coherent-start run."""
    run, refined = runs["f5"], runs["f5_refined"]
    table = run.tables["entanglement"]
    times, data = table["times"], table["data"]
    col = {name: i for i, name in enumerate(table["columns"])}
    out = []

    early = times <= TE / 5
    s_min = float(np.min(data[early, col["S_cond_m"]]))
    out.append(CheckResult(
        9, "early negative conditional entropy",
        s_min < 0.0,
        f"min S(m|f) = {s_min:.4f} for t <= {TE / 5:.1f}",
        "< 0",
        f"over {int(early.sum())} samples"))

    i_half = _nearest_row(times, TE / 2)
    pt_half = float(data[i_half, col["min_pt_eig"]])
    in_run = data[i_half, col["pt_verified"]] == 1.0
    t_b, rho_b = _nearest_snapshot(run, TE / 2)
    t_b2, rho_b2 = _nearest_snapshot(refined, TE / 2)
    record = None
    if abs(t_b - t_b2) <= 1e-6:
        dim_m = run.params.build().dim_m
        pair = sorted([(rho_b.shape[0] // dim_m, rho_b),
                       (rho_b2.shape[0] // dim_m, rho_b2)],
                      key=lambda item: item[0])
        record = peres_test(pair, dim_m, time=t_b)
    cross = record is not None and record.truncation_verified
    out.append(CheckResult(
        9, "entangled at half relaxation time",
        pt_half < -1e-4 and in_run and cross,
        f"min PT eig {pt_half:.3e} at t={times[i_half]:.2f}",
        "< -1e-4 with truncation persistence",
        f"in-run probe verified={in_run}, ten-level refinement "
        f"verified={cross}"
        + (f", refined min {record.min_pt_eigenvalue:.3e}" if record else "")))

    i_two = _nearest_row(times, 2 * TE)
    pt_two = float(data[i_two, col["min_pt_eig"]])
    scm = float(data[i_two, col["S_cond_m"]])
    scf = float(data[i_two, col["S_cond_f"]])
    out.append(CheckResult(
        9, "separable signatures at two relaxation times",
        pt_two >= -1e-6 and scm > 0.0 and scf > 0.0,
        f"min PT eig {pt_two:.3e}, S(m|f)={scm:.4f}, S(f|m)={scf:.4f}",
        "PT >= -1e-6, both conditional entropies > 0",
        f"row at t={times[i_two]:.2f}"))
    return out


def check_ring_symmetry(run: ReferenceRun) -> list:
    """Criterion 10: late-time phase isotropy and coherence death."""
    out = []
    t_want = 253 * TE
    t_snap, rho = _nearest_snapshot(run, t_want)
    dim_m = run.params.build().dim_m
    n_fock = rho.shape[0] // dim_m
    rho_f = partial_trace(rho, dim_m, n_fock, "field")
    asym = ring_asymmetry(rho_f)
    out.append(CheckResult(
        10, "annular Q symmetry",
        asym <= 0.01 and abs(t_snap - t_want) <= 10.0,
        f"worst ring variation {asym:.2e} at t={t_snap:.4g}",
        f"<= 1e-2 at t={t_want:.4g}",
        f"n_fock={n_fock}"))

    field = run.tables["field"]
    ft = field["times"]
    off = field["data"][:, field["columns"].index("offdiag_norm")]
    if off[0] <= 0:
        raise ValueError("coherent start must have off-diagonal weight")
    i_ten = int(np.argmax(ft >= 10 * TE))
    ratio = float(off[i_ten] / off[0])
    out.append(CheckResult(
        10, "field coherence decay",
        ratio <= 1e-12,
        f"offdiag ratio {ratio:.2e} at t={ft[i_ten]:.4g}",
        "<= 1e-12 by ten relaxation times",
        f"initial offdiag norm {off[0]:.4f}"))
    return out


# ---------------------------------------------------------------------------
# battery driver
# ---------------------------------------------------------------------------


def run_all(cache_dir, force: bool = False, log=None) -> list:
    """Execute every reference run (cached) and evaluate all criteria."""
    runs = execute_all_runs(cache_dir, force=force, log=log)
    results = []
    results += check_field_power(runs["vacuum"])
    results += check_efficiency(runs["vacuum"])
    results += check_frequency_identity(runs)
    results += check_semiclassical_sweep()
    results += check_inversion_ratio()
    results += check_flux_agreement(runs)
    results += check_second_law(runs)
    results += check_oracles()
    results += check_entanglement(runs)
    results += check_ring_symmetry(runs["f5"])
    return results


def reproduce_config() -> dict:
    """Raw configuration recorded in the reproduce-mode manifest."""
    return {"mode": "reproduce-paper", "out_dir": "runs/reproduce",
            "model": _model_table(30)}


def results_table(results) -> str:
    """CSV body for the battery outcome."""
    lines = ["criterion,label,passed,expected_fail,value,bound,detail"]
    for r in results:
        fields = [str(r.criterion), r.label, str(r.passed),
                  str(r.expected_fail), r.value, r.bound, r.detail]
        lines.append(",".join('"' + f.replace('"', '""') + '"'
                              for f in fields))
    return "\n".join(lines) + "\n"
