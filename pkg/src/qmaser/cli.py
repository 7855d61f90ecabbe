"""Command line front end.

Configs are artifacts: a TOML file fully determines a run, flags only
locate it, cap threads, or override single keys.  Every run directory
is self-describing through manifest.json (an echo of the config plus a
checksum of each emitted file).

Exit status: 0 success, 1 bad request (config or parameters), 2 a
numerical breach while running (trace, positivity, entropy production,
energy bookkeeping, or a failed check battery), the latter mirrored to
<out>/failure.txt.  Single-threaded runs rewrite outputs bit for bit;
--threads only sizes the BLAS pool and the sweep worker pool.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, acceptance
from .config import (ConfigError, InitialSpec, RunConfig, apply_override,
                     load_config, parse_override, structure_config)
from .evolve import IntegrationAbort, IntegrationConfig
from .runners import (build_initial_state, emit_manifest,
                      emit_quantum_outputs, finalize_quantum,
                      quantum_summary, run_quantum, suggested_n_fock,
                      write_table)
from .semiclassical import SemiclassicalParams, sc_propagate, sc_steady_state
from .thermo import FirstLawViolation, engine_efficiency

NUMERICAL_ERRORS = (IntegrationAbort, FirstLawViolation, AssertionError,
                    ArithmeticError, RuntimeError, np.linalg.LinAlgError)

# Entropy production below SIGMA_SOFT is reported, below SIGMA_HARD the
# run is refused; the soft band absorbs finite-difference noise.
SIGMA_HARD = -1e-6
SIGMA_SOFT = -1e-9

_THREAD_LIMITER = None


def _apply_thread_limits(n: int):
    global _THREAD_LIMITER
    import threadpoolctl
    _THREAD_LIMITER = threadpoolctl.threadpool_limits(limits=n)
    import numba
    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmaser",
        description="Dissipative three-level maser with a quantized "
                    "cavity mode: quantum runs, classical-drive solutions, "
                    "integrator validation, and the reproduction battery.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")

    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--out", metavar="DIR",
                        help="output directory (default: the config's "
                             "out_dir)")
    shared.add_argument("--threads", type=int, default=1, metavar="N",
                        help="BLAS and worker thread cap; 1 (default) "
                             "keeps outputs bit-reproducible")
    shared.add_argument("--seed", type=int, metavar="N",
                        help="reserved; nothing stochastic consumes it yet")
    shared.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="config override by dotted path, repeatable "
                             "(e.g. model.n01=12)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[shared],
                       help="execute the run a config describes")
    p.add_argument("--config", required=True, metavar="PATH")
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("sweep", parents=[shared],
                       help="repeat the config once per sweep value")
    p.add_argument("--config", required=True, metavar="PATH")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("compare", parents=[shared],
                       help="quantum vs classical-drive steady fluxes over "
                            "field strengths")
    p.add_argument("--config", required=True, metavar="PATH")
    p.set_defaults(handler=_cmd_compare)

    p = sub.add_parser("reproduce", parents=[shared],
                       help="run the published-value battery")
    p.add_argument("--config", metavar="PATH",
                   help="optional reproduce-paper config (battery "
                        "parameters are fixed; only out_dir matters)")
    p.add_argument("--cache", metavar="DIR",
                   help="reference-run cache (default <out>/_cache)")
    p.add_argument("--force", action="store_true",
                   help="recompute cached reference runs")
    p.set_defaults(handler=_cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    if args.seed is not None:
        print("note: --seed is reserved; this build has no stochastic "
              "component", file=sys.stderr)
    _apply_thread_limits(args.threads)
    try:
        args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        _report_numerical_failure(getattr(args, "resolved_out", None), exc)
        return 2
    return 0


def _report_numerical_failure(out_dir, exc):
    print(f"numerical failure: {exc}", file=sys.stderr)
    if out_dir is None:
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "failure.txt"
    with open(path, "w", encoding="ascii", errors="replace") as fh:
        fh.write(f"{type(exc).__name__}: {exc}\n\n")
        fh.write(traceback.format_exc())
    print(f"diagnostic written to {path}", file=sys.stderr)


def _resolve_out(args, cfg: RunConfig) -> Path:
    out = Path(args.out) if args.out else Path(cfg.out_dir)
    args.resolved_out = out
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_run(args):
    cfg = load_config(args.config, args.override)
    out = _resolve_out(args, cfg)
    if cfg.mode == "quantum":
        _run_quantum(cfg, out)
    elif cfg.mode == "semiclassical":
        _run_semiclassical(cfg, out)
    elif cfg.mode == "validate-jcm":
        _run_validate(cfg, out)
    elif cfg.mode == "compare":
        _run_compare(cfg, out, args.threads)
    else:
        _run_reproduce(cfg, out, out / "_cache", force=False)


def _cmd_sweep(args):
    cfg = load_config(args.config, args.override)
    if cfg.sweep is None:
        raise ValueError("sweep needs a [sweep] section with parameter "
                         "and values")
    if cfg.mode not in ("quantum", "semiclassical", "validate-jcm"):
        raise ValueError(f"sweeping mode {cfg.mode!r} is not meaningful; "
                         "flux comparisons have their own subcommand")
    out = _resolve_out(args, cfg)
    points = _sweep_points(cfg, out)
    for raw in points:
        structure_config(raw)
    print(f"sweep over {cfg.sweep.parameter}: {len(points)} points")
    _run_points(points, args.threads)
    out.mkdir(parents=True, exist_ok=True)
    index = {"parameter": cfg.sweep.parameter,
             "values": list(cfg.sweep.values),
             "points": {str(v): p["out_dir"]
                        for v, p in zip(cfg.sweep.values, points)}}
    with open(out / "sweep.json", "w", encoding="ascii") as fh:
        json.dump(index, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    print(f"sweep complete; index at {out / 'sweep.json'}")


def _cmd_compare(args):
    cfg = load_config(args.config, args.override)
    if cfg.mode != "compare":
        raise ValueError(f"the compare subcommand expects mode 'compare', "
                         f"config says {cfg.mode!r}")
    out = _resolve_out(args, cfg)
    _run_compare(cfg, out, args.threads)


def _cmd_reproduce(args):
    if args.config:
        cfg = load_config(args.config, args.override)
        if cfg.mode != "reproduce-paper":
            raise ValueError(f"reproduce expects mode 'reproduce-paper', "
                             f"config says {cfg.mode!r}")
    else:
        raw = acceptance.reproduce_config()
        for item in args.override:
            key, value = parse_override(item)
            apply_override(raw, key, value)
        cfg = structure_config(raw)
    out = _resolve_out(args, cfg)
    cache = Path(args.cache) if args.cache else out / "_cache"
    _run_reproduce(cfg, out, cache, args.force)


# ---------------------------------------------------------------------------
# mode runners
# ---------------------------------------------------------------------------


def _enforce_ledger(summary: dict):
    """Refuse to bless a run whose ledger breaches the hard bounds."""
    inv = summary.get("invariants")
    if inv is None:
        return
    if inv["min_sigma"] < SIGMA_HARD:
        raise RuntimeError(
            f"entropy production rate reached {inv['min_sigma']:.3e}, "
            f"below the hard bound {SIGMA_HARD:g}")
    if inv["min_sigma"] < SIGMA_SOFT:
        print(f"warning: entropy production grazed "
              f"{inv['min_sigma']:.3e}; consistent with finite-difference "
              "noise but worth a denser sampling", file=sys.stderr)
    if inv["min_state_eig"] < -1e-6:
        raise RuntimeError(
            f"positivity breached: state eigenvalue "
            f"{inv['min_state_eig']:.3e}")
    worst = max(inv["max_first_law_res1"], inv["max_first_law_res2"])
    if worst > 1e-9:
        raise FirstLawViolation(
            f"energy bookkeeping residual {worst:.3e} exceeds 1e-9")


def _run_quantum(cfg: RunConfig, out: Path, verbose: bool = True) -> dict:
    params = cfg.model
    if cfg.plan.n_fock is not None:
        params = replace(params, n_fock=cfg.plan.n_fock)
    model = params.build()
    rho0 = build_initial_state(cfg.initial, model)
    result = run_quantum(model, rho0, cfg.plan, cfg.observers)
    finalize_quantum(result, params.t_hot, params.t_cold)
    summary = quantum_summary(result, params)
    thermo = result.tables.get("thermo")
    if thermo is not None and thermo["data"].shape[0] >= 3:
        summary["flux_summary"] = acceptance.steady_flux_summary(
            result.tables, params.gamma_eff)
    _enforce_ledger(summary)
    files = emit_quantum_outputs(out, cfg, result, summary)
    if verbose:
        print(f"quantum run: t_final={result.final_time:g}, "
              f"n_fock={result.model.n_fock}, "
              f"wall={result.wall_time_s:.1f}s")
        ss = summary.get("steady_state")
        if ss:
            print(f"  matter steady state from t={ss['t_detect']:g}: "
                  f"P_m={ss['P_m']:.6e}, eta={ss['eta']}")
        fit = summary.get("field_energy_fit")
        if fit:
            print(f"  field energy slope {fit['slope']:.6e} "
                  f"(R2={fit['r2']:.6f})")
        print(f"  wrote {len(files)} files to {out}")
    return summary


def _sc_initial(initial: InitialSpec) -> np.ndarray:
    w = np.array(initial.matter_weights, dtype=float)
    if w.size > 3 and np.any(w[3:] != 0):
        raise ValueError("classical-drive runs have three matter levels; "
                         "weights beyond them must be zero")
    w = np.pad(w[:3], (0, max(0, 3 - w.size)))
    total = w.sum()
    if total <= 0:
        raise ValueError("matter weights must have positive total")
    return np.diag(w / total).astype(complex)


def _write_sc_steady_state(path: Path, p: SemiclassicalParams, ss):
    pops = np.real(np.diag(ss.rho_ss))
    fields = [
        ("gamma01", p.gamma01), ("gamma02", p.gamma02),
        ("n01", p.n01), ("n02", p.n02), ("lambda_sc", p.lambda_sc),
        ("omega", p.omega), ("omega0", p.omega0), ("omega1", p.omega1),
        ("omega2", p.omega2), ("case", ss.case),
        ("A", ss.A), ("B", ss.B), ("C", ss.C), ("D", ss.D), ("F", ss.F),
        ("pop0", pops[0]), ("pop1", pops[1]), ("pop2", pops[2]),
        ("coh12_re", float(np.real(ss.rho_ss[1, 2]))),
        ("coh12_im", float(np.imag(ss.rho_ss[1, 2]))),
        ("phi", ss.phi), ("r", ss.r), ("P_ss", ss.P_ss),
        ("Qdot_H_ss", ss.Qdot_H_ss), ("Qdot_C_ss", ss.Qdot_C_ss),
        ("P_m_ss", ss.P_m_ss), ("Edot_ss", ss.Edot_ss), ("eta", ss.eta),
    ]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(name for name, _ in fields) + "\n")
        fh.write(",".join(v if isinstance(v, str) else f"{v:.17g}"
                          for _, v in fields) + "\n")


def _write_sc_trajectory(path: Path, cfg: RunConfig, p: SemiclassicalParams,
                         ss):
    rho = _sc_initial(cfg.initial)
    t0 = 0.0
    all_t, all_s = [], []
    for window in cfg.plan.windows:
        icfg = IntegrationConfig(step_h=window.step_h,
                                 t_final=window.duration,
                                 sample_stride=window.sample_stride)
        try:
            traj = sc_propagate(rho, p, icfg)
        except ValueError as exc:
            raise IntegrationAbort(str(exc)) from exc
        keep = slice(1, None) if all_t else slice(None)
        all_t.append(traj.times[keep] + t0)
        all_s.append(traj.states[keep])
        rho = traj.final_state.rho
        t0 += float(traj.times[-1])
    times = np.concatenate(all_t)
    states = np.concatenate(all_s)
    dist = np.max(np.abs(states - ss.rho_ss), axis=(1, 2))
    columns = ["pop0", "pop1", "pop2", "coh01_re", "coh01_im", "coh02_re",
               "coh02_im", "coh12_re", "coh12_im", "dist_ss"]
    data = np.column_stack([
        states[:, 0, 0].real, states[:, 1, 1].real, states[:, 2, 2].real,
        states[:, 0, 1].real, states[:, 0, 1].imag,
        states[:, 0, 2].real, states[:, 0, 2].imag,
        states[:, 1, 2].real, states[:, 1, 2].imag, dist])
    write_table(path, times, columns, data)


def _run_semiclassical(cfg: RunConfig, out: Path,
                       verbose: bool = True) -> dict:
    p = cfg.semiclassical
    ss = sc_steady_state(p)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "steady_state.csv"]
    _write_sc_steady_state(files[0], p, ss)
    summary = {"case": ss.case, "r": ss.r, "eta": ss.eta, "P_ss": ss.P_ss,
               "Qdot_H_ss": ss.Qdot_H_ss, "Qdot_C_ss": ss.Qdot_C_ss,
               "P_m_ss": ss.P_m_ss, "Edot_ss": ss.Edot_ss}
    if "integration" in cfg.raw:
        path = out / "trajectory.csv"
        _write_sc_trajectory(path, cfg, p, ss)
        files.append(path)
    emit_manifest(out, cfg, files, summary)
    if verbose:
        print(f"classical-drive steady state ({ss.case}): r={ss.r:.9g}, "
              f"P={ss.P_ss:.6e}, eta={ss.eta:.6g}")
        print(f"  wrote {len(files)} files to {out}")
    return summary


def _battery_summary(results) -> dict:
    return {"checks": len(results),
            "passed": sum(1 for r in results if r.passed),
            "expected_failures": sum(1 for r in results
                                     if r.expected_fail and not r.passed),
            "failed": sum(1 for r in results if not r.ok)}


def _run_validate(cfg: RunConfig, out: Path, verbose: bool = True) -> dict:
    results = acceptance.jcm_validation(cfg.jcm)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "validation.csv"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(acceptance.results_table(results))
    summary = _battery_summary(results)
    emit_manifest(out, cfg, [path], summary)
    if verbose:
        for r in results:
            print(r.line())
    if summary["failed"]:
        raise RuntimeError(f"{summary['failed']} of {summary['checks']} "
                           f"integrator checks failed; see {path}")
    return summary


def _run_reproduce(cfg: RunConfig, out: Path, cache_dir: Path,
                   force: bool) -> dict:
    results = acceptance.run_all(cache_dir, force=force,
                                 log=lambda msg: print(f"  {msg}"))
    out.mkdir(parents=True, exist_ok=True)
    path = out / "reproduce.csv"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(acceptance.results_table(results))
    for r in results:
        print(r.line())
    summary = _battery_summary(results)
    emit_manifest(out, cfg, [path], summary)
    print(f"reproduction battery: {summary['passed']} passed, "
          f"{summary['expected_failures']} expected failures, "
          f"{summary['failed']} failed")
    if summary["failed"]:
        raise RuntimeError(f"{summary['failed']} reproduction checks "
                           f"failed; see {path}")
    return summary


# ---------------------------------------------------------------------------
# sweep and compare machinery
# ---------------------------------------------------------------------------


def _fmt_value(value) -> str:
    text = f"{value:g}" if isinstance(value, float) else str(value)
    return text.replace("/", "_")


def _sweep_points(cfg: RunConfig, out: Path) -> list:
    slug = cfg.sweep.parameter.replace(".", "_")
    points = []
    for value in cfg.sweep.values:
        raw = copy.deepcopy(cfg.raw)
        raw.pop("sweep", None)
        apply_override(raw, cfg.sweep.parameter, value)
        raw["out_dir"] = str(out / f"{slug}_{_fmt_value(value)}")
        points.append(raw)
    return points


def _point_worker(raw: dict) -> dict:
    """One sweep or compare point, safe to run in a forked worker."""
    cfg = structure_config(raw)
    out = Path(cfg.out_dir)
    if cfg.mode == "quantum":
        return _run_quantum(cfg, out, verbose=False)
    if cfg.mode == "semiclassical":
        return _run_semiclassical(cfg, out, verbose=False)
    return _run_validate(cfg, out, verbose=False)


def _run_points(points, threads: int) -> list:
    if threads <= 1 or len(points) == 1:
        out = []
        for raw in points:
            print(f"  running {raw['out_dir']}")
            out.append(_point_worker(raw))
        return out
    _apply_thread_limits(1)
    with ProcessPoolExecutor(max_workers=min(threads, len(points)),
                             initializer=_apply_thread_limits,
                             initargs=(1,)) as pool:
        futures = [pool.submit(_point_worker, raw) for raw in points]
        return [f.result() for f in futures]


def _compare_point_raw(cfg: RunConfig, out: Path, alpha: float) -> dict:
    raw = copy.deepcopy(cfg.raw)
    raw["mode"] = "quantum"
    raw.pop("sweep", None)
    raw.pop("jcm", None)
    raw.pop("semiclassical", None)
    initial = raw.setdefault("initial", {})
    initial.setdefault("matter", 1)
    if alpha > 0:
        initial["field"] = {"type": "coherent", "alpha_abs": alpha}
        spec = InitialSpec(matter_weights=(0.0, 1.0), field_type="coherent",
                           alpha=complex(alpha, 0.0))
    else:
        initial["field"] = {"type": "fock", "n": 0}
        spec = InitialSpec(matter_weights=(0.0, 1.0))
    base_n = int(raw.get("model", {}).get("n_fock", cfg.model.n_fock))
    raw["model"]["n_fock"] = max(base_n, suggested_n_fock(spec))
    raw["out_dir"] = str(out / f"alpha_{alpha:g}")
    return raw


def _compare_row(params, alpha: float, point_summary: dict) -> dict:
    flux = point_summary.get("flux_summary")
    if flux is None:
        raise ValueError("comparison point produced too few samples for "
                         "flux averaging; lengthen [integration]")
    try:
        eta_q = engine_efficiency(flux["P_m"], flux["Qdot_mH"])
    except ValueError:
        eta_q = float("nan")
    if alpha > 0:
        ref = sc_steady_state(SemiclassicalParams.from_quantum(params, alpha))
        sc = {"P": ref.P_ss, "Qdot_H": ref.Qdot_H_ss,
              "Qdot_C": ref.Qdot_C_ss, "eta": ref.eta}
    else:
        # no drive, no classical amplification: fluxes identically zero
        sc = {"P": 0.0, "Qdot_H": 0.0, "Qdot_C": 0.0, "eta": float("nan")}

    def dev(q, s):
        return abs(q - s) / abs(s) if s != 0.0 else float("nan")

    return {
        "alpha_abs": alpha,
        "lambda_sc": params.lam * alpha,
        "n_fock": point_summary["final_n_fock"],
        "ss_detected": int(flux["detected"]),
        "P_quantum": flux["P_m"], "P_classical": sc["P"],
        "P_dev": dev(flux["P_m"], sc["P"]),
        "Qdot_H_quantum": flux["Qdot_H"], "Qdot_H_classical": sc["Qdot_H"],
        "Qdot_H_dev": dev(flux["Qdot_H"], sc["Qdot_H"]),
        "Qdot_C_quantum": flux["Qdot_C"], "Qdot_C_classical": sc["Qdot_C"],
        "Qdot_C_dev": dev(flux["Qdot_C"], sc["Qdot_C"]),
        "eta_quantum": eta_q, "eta_classical": sc["eta"],
    }


def _run_compare(cfg: RunConfig, out: Path, threads: int) -> dict:
    if cfg.sweep.parameter != "alpha_abs":
        raise ValueError("compare sweeps the initial field strength; set "
                         "sweep.parameter = 'alpha_abs'")
    if "integration" not in cfg.raw:
        raise ValueError("compare needs an [integration] section long "
                         "enough to reach the matter steady state")
    alphas = [float(v) for v in cfg.sweep.values]
    if any(a < 0 for a in alphas):
        raise ValueError("alpha_abs values must be non-negative")
    points = [_compare_point_raw(cfg, out, a) for a in alphas]
    for raw in points:
        structure_config(raw)
    print(f"comparing steady fluxes at {len(alphas)} field strengths")
    summaries = _run_points(points, threads)

    rows = [_compare_row(cfg.model, a, s) for a, s in zip(alphas, summaries)]
    out.mkdir(parents=True, exist_ok=True)
    path = out / "compare.csv"
    names = list(rows[0])
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(names) + "\n")
        for row in rows:
            fh.write(",".join(f"{row[n]:.17g}" if isinstance(row[n], float)
                              else str(row[n]) for n in names) + "\n")

    for row in rows:
        flag = "" if row["ss_detected"] else "  [steady state not detected]"
        dev_txt = ("n/a" if math.isnan(row["P_dev"])
                   else f"{row['P_dev']:.2e}")
        print(f"  |alpha|={row['alpha_abs']:g}: P_dev={dev_txt}{flag}")
    devs = [r["P_dev"] for r in rows if not math.isnan(r["P_dev"])]
    summary = {"points": len(rows),
               "worst_P_dev": max(devs) if devs else None,
               "undetected": sum(1 for r in rows if not r["ss_detected"])}
    emit_manifest(out, cfg, [path], summary)
    return summary


if __name__ == "__main__":
    sys.exit(main())
