"""Execution layer: build models and initial states from a RunConfig,
drive windowed propagation with automatic Fock-space extension, and emit
CSV tables, Q-function matrices and a checksummed manifest.

A run is a sequence of windows, each with its own sampling cadence, so
the early transient can be sampled densely and the long steady-state
tail coarsely without paying eigendecompositions at every step.  When
the top Fock level's occupancy crosses the configured threshold the
state is embedded into a larger space and propagation resumes in place;
the observer tables simply continue across the seam.
"""

from __future__ import annotations

import hashlib
import json
import time as _time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import InitialSpec, IntegrationPlan, ObserverPlan, RunConfig
from .entangle import EntanglementObserver
from .evolve import (IntegrationAbort, IntegrationConfig, SnapshotObserver,
                     propagate, steady_state_power_fit, top_fock_occupancy)
from .linalg import (coherent_amplitudes, fock_state, partial_trace,
                     thermal_state)
from .models import DampedJCMParams, MaserParams, ModelOps, embed_state
from .phasespace import FieldObserver, husimi_q, ring_asymmetry
from .thermo import (MatterStateObserver, ThermoObserver, THERMO_COLUMNS,
                     detect_matter_steady_state, engine_efficiency,
                     finalize_ledger, ledger_invariant_report)


def suggested_n_fock(initial: InitialSpec, floor: int = 30) -> int:
    """Truncation adequate for the initial field state.

    Coherent states need room for the Poisson tail plus growth headroom:
    |alpha|^2 + 8|alpha| + 20.  Fock and thermal inputs start from the
    stated level plus headroom.  Never below `floor`.
    """
    if initial.field_type == "coherent":
        a = abs(initial.alpha)
        need = int(np.ceil(a * a + 8.0 * a + 20.0))
    elif initial.field_type == "fock":
        need = initial.field_n + 15
    else:
        need = int(np.ceil(10.0 * initial.nbar)) + 15
    return max(floor, need)


def build_initial_state(initial: InitialSpec, model: ModelOps) -> np.ndarray:
    """Product state from diagonal matter weights and the field spec."""
    weights = list(initial.matter_weights)
    if len(weights) > model.dim_m:
        extra = weights[model.dim_m:]
        if any(w != 0 for w in extra):
            raise ValueError(f"matter weights address level(s) beyond the "
                             f"{model.dim_m}-level matter space")
        weights = weights[:model.dim_m]
    weights += [0.0] * (model.dim_m - len(weights))
    rho_m = np.diag(np.array(weights, dtype=np.complex128))

    n = model.n_fock
    if initial.field_type == "fock":
        if initial.field_n >= n:
            raise ValueError(f"Fock level {initial.field_n} needs n_fock > "
                             f"{initial.field_n}")
        amp = fock_state(n, initial.field_n)
        rho_f = np.outer(amp, amp.conj())
    elif initial.field_type == "coherent":
        amp = coherent_amplitudes(initial.alpha, n)
        rho_f = np.outer(amp, amp.conj())
    else:
        rho_f = thermal_state(initial.nbar, n)
    return np.kron(rho_m, rho_f)


def _build_observers(model: ModelOps, plan: ObserverPlan, snapshot_ob):
    obs = []
    if plan.thermo_every > 0:
        obs.append(ThermoObserver(model, plan.thermo_every))
    if plan.matter_every > 0:
        obs.append(MatterStateObserver(model.dim_m, plan.matter_every))
    if plan.field_every > 0:
        obs.append(FieldObserver(plan.field_every))
    if plan.entangle_every > 0:
        obs.append(EntanglementObserver(model.dim_m, plan.entangle_every,
                                        pt_t_max=plan.pt_t_max,
                                        probe_drop=plan.probe_drop))
    if snapshot_ob is not None:
        obs.append(snapshot_ob)
    return obs


@dataclass
class RunOutput:
    """Merged products of one windowed propagation."""

    model: ModelOps
    final_state: np.ndarray
    final_time: float
    tables: dict
    snapshots: list
    sample_times: np.ndarray
    trace_err: np.ndarray
    herm_err: np.ndarray
    top_occupancy: np.ndarray
    n_fock_history: list
    wall_time_s: float


def run_quantum(model: ModelOps, rho0: np.ndarray, plan: IntegrationPlan,
                obs_plan: ObserverPlan, t0: float = 0.0) -> RunOutput:
    """Propagate through all windows, extending the Fock space on demand."""
    started = _time.perf_counter()
    state = np.array(rho0, dtype=np.complex128, order="C", copy=True)
    occ0 = top_fock_occupancy(state, model.dim_m, model.n_fock)
    if occ0 > plan.occupancy_threshold:
        raise ValueError(
            f"initial top-level occupancy {occ0:.2e} already exceeds "
            f"{plan.occupancy_threshold:g}; increase n_fock")

    snap_times = sorted(set(obs_plan.snapshot_times)
                        | set(obs_plan.qfunction_times))
    snap_ob = SnapshotObserver(snap_times) if snap_times else None

    merged: dict = {}
    diag_t, diag_tr, diag_herm, diag_occ = [], [], [], []
    snapshots: list = []
    n_hist = [model.n_fock]
    t = t0
    sample_index = 0
    first = True
    target = t0

    for window in plan.windows:
        target += window.duration
        while t < target - 1e-9:
            cfg = IntegrationConfig(
                step_h=window.step_h, t_final=target - t,
                sample_stride=window.sample_stride,
                renormalize=plan.renormalize, trace_tol=plan.trace_tol,
                occupancy_threshold=plan.occupancy_threshold)
            obs = _build_observers(model, obs_plan, snap_ob)
            traj = propagate(state, model, cfg, obs, t_start=t,
                             sample_index0=sample_index,
                             record_initial=first)
            first = False
            for name, table in traj.tables.items():
                slot = merged.setdefault(
                    name, {"columns": table["columns"], "times": [],
                           "data": []})
                slot["times"].append(table["times"])
                slot["data"].append(table["data"])
            diag_t.append(traj.times)
            diag_tr.append(traj.trace_err)
            diag_herm.append(traj.herm_err)
            diag_occ.append(traj.top_occupancy)
            snapshots.extend(traj.snapshots)
            state = traj.final_state
            t = traj.final_time
            sample_index = traj.sample_index_end
            if traj.status == "occupancy":
                if not plan.auto_extend:
                    raise IntegrationAbort(
                        f"top Fock occupancy exceeded "
                        f"{plan.occupancy_threshold:g} at t={t:.6g} with "
                        f"auto_extend disabled")
                n_new = model.n_fock + plan.extension_chunk
                state = embed_state(state, model.dim_m, model.n_fock, n_new)
                model = model.with_n_fock(n_new)
                n_hist.append(n_new)

    tables = {}
    for name, slot in merged.items():
        tables[name] = {
            "columns": slot["columns"],
            "times": np.concatenate(slot["times"]) if slot["times"]
            else np.empty(0),
            "data": np.concatenate(slot["data"]) if slot["data"]
            else np.empty((0, len(slot["columns"]))),
        }
    return RunOutput(
        model=model, final_state=state, final_time=t, tables=tables,
        snapshots=snapshots,
        sample_times=np.concatenate(diag_t) if diag_t else np.empty(0),
        trace_err=np.concatenate(diag_tr) if diag_tr else np.empty(0),
        herm_err=np.concatenate(diag_herm) if diag_herm else np.empty(0),
        top_occupancy=np.concatenate(diag_occ) if diag_occ else np.empty(0),
        n_fock_history=n_hist,
        wall_time_s=_time.perf_counter() - started)


def finalize_quantum(result: RunOutput, t_hot: float, t_cold: float):
    """Replace the raw thermo table with its finalized version in place."""
    thermo = result.tables.get("thermo")
    if thermo is None:
        return None
    thermo["data"] = finalize_ledger(thermo["times"], thermo["data"],
                                     t_hot, t_cold)
    return thermo


def quantum_summary(result: RunOutput, params: MaserParams) -> dict:
    """Post-run summary: invariants, steady state, efficiency, field slope."""
    summary: dict = {
        "final_time": result.final_time,
        "final_n_fock": result.model.n_fock,
        "n_fock_history": list(result.n_fock_history),
        "max_trace_err": float(result.trace_err.max())
        if result.trace_err.size else 0.0,
        "max_herm_err": float(result.herm_err.max())
        if result.herm_err.size else 0.0,
        "wall_time_s": result.wall_time_s,
    }
    thermo = result.tables.get("thermo")
    if thermo is None or thermo["data"].shape[0] < 3:
        return summary
    times, data = thermo["times"], thermo["data"]
    summary["invariants"] = ledger_invariant_report(times, data)

    col = {name: i for i, name in enumerate(THERMO_COLUMNS)}
    matter = result.tables.get("matter")
    if matter is not None and result.model.dim_m == 3:
        pops = matter["data"][:, :3]
        # detection needs matter samples on the thermo grid
        if matter["times"].shape == times.shape and np.allclose(
                matter["times"], times):
            idx = detect_matter_steady_state(
                times, data[:, col["matter_drift_norm"]], pops,
                window=1.0 / params.gamma_eff)
        else:
            idx = None
        if idx is not None:
            tail = slice(idx, None)
            p_m = float(np.mean(data[tail, col["P_m"]]))
            qdot_mh = float(np.mean(data[tail, col["Qdot_mH"]]))
            summary["steady_state"] = {
                "t_detect": float(times[idx]),
                "P_m": p_m,
                "Qdot_mH": qdot_mh,
                "Qdot_mC": float(np.mean(data[tail, col["Qdot_mC"]])),
                "Qdot_VH": float(np.max(np.abs(data[tail, col["Qdot_VH"]]))),
                "Qdot_VC": float(np.max(np.abs(data[tail, col["Qdot_VC"]]))),
                "eta": engine_efficiency(p_m, qdot_mh)
                if qdot_mh > 0 else None,
                "carnot": params.carnot,
            }
    e_f = data[:, col["E_f"]]
    window = max(2, data.shape[0] // 2)
    slope, r2 = steady_state_power_fit(times, e_f, window)
    summary["field_energy_fit"] = {"slope": slope, "r2": r2,
                                   "window_samples": window}
    return summary


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def write_table(path, times: np.ndarray, columns, data: np.ndarray):
    """CSV with a documented header; %.17g round-trips float64 exactly."""
    header = ",".join(["time", *columns])
    body = np.column_stack([times, data])
    np.savetxt(path, body, delimiter=",", header=header, comments="",
               fmt="%.17g")


def write_qfunction(path, grid):
    """Plain-text Q matrix with axis headers."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# time {grid.time:.17g}\n")
        fh.write(f"# mass {grid.mass:.17g}\n")
        fh.write("# alpha_re " + " ".join(f"{v:.17g}"
                                          for v in grid.alpha_re_axis) + "\n")
        fh.write("# alpha_im " + " ".join(f"{v:.17g}"
                                          for v in grid.alpha_im_axis) + "\n")
        np.savetxt(fh, grid.values, fmt="%.17g")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def emit_manifest(out_dir, cfg: RunConfig, files, summary: dict,
                  extra: dict | None = None):
    """manifest.json: config echo, checksums, and the run summary."""
    manifest = {
        "package": "qmaser",
        "version": __version__,
        "mode": cfg.mode,
        "config": cfg.raw,
        "files": {str(p.name): {"sha256": _sha256(p),
                                "bytes": p.stat().st_size}
                  for p in files},
        "summary": summary,
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def emit_quantum_outputs(out_dir, cfg: RunConfig, result: RunOutput,
                         summary: dict):
    """Write every table, Q-function matrices, and the manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for name, table in result.tables.items():
        path = out_dir / f"{name}.csv"
        write_table(path, table["times"], table["columns"], table["data"])
        files.append(path)

    wanted = sorted(set(cfg.observers.qfunction_times))
    if wanted and result.snapshots:
        ring_stats = {}
        for want in wanted:
            after = [(t, rho) for t, rho in result.snapshots
                     if t >= want - 1e-9]
            if not after:
                continue
            t_snap, rho = min(after, key=lambda item: item[0])
            n_fock = rho.shape[0] // result.model.dim_m
            rho_f = partial_trace(rho, result.model.dim_m, n_fock, "field")
            grid = husimi_q(rho_f, time=t_snap)
            path = out_dir / f"qfunction_t{t_snap:.6g}.txt"
            if path not in files:
                write_qfunction(path, grid)
                files.append(path)
                ring_stats[f"{t_snap:.6g}"] = {
                    "mass": grid.mass,
                    "ring_asymmetry": ring_asymmetry(rho_f),
                }
        if ring_stats:
            summary["qfunction"] = ring_stats

    manifest = emit_manifest(out_dir, cfg, files, summary)
    return files + [manifest]
