"""Fixed-step RK4 propagation of density matrices, with an independent
superoperator-exponential oracle for small systems.

The propagator walks the state forward in chunks of ``sample_stride`` steps
(compiled kernel), recording cheap diagnostics at every sample and calling
observers on their own cadence.  It never stores the full state history;
observers extract what they need and snapshot observers copy the state at
explicitly requested times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels
from .linalg import partial_trace, von_neumann_entropy, herm_eigen, EPS_POS
from .models import ModelOps


class IntegrationAbort(RuntimeError):
    """Raised when a hard state-validity guard trips during propagation."""


def default_step(model: ModelOps) -> float:
    """Default RK4 step: resolve both the coherent and dissipative scales.

    h = min(0.01/lam, 0.01/(max channel decay rate / 2)); the channel rates
    already carry the factor-2 convention, so rate/2 is the bare
    Gamma*(n+1) scale of the fastest reservoir process.
    """
    h = np.inf
    if model.lam > 0:
        h = 0.01 / model.lam
    rmax = max((c.rate for c in model.channels), default=0.0)
    if rmax > 0:
        h = min(h, 0.02 / rmax)
    if not np.isfinite(h):
        raise ValueError("model has neither coupling nor dissipation")
    return float(h)


@dataclass(frozen=True)
class IntegrationConfig:
    """Controls for one propagation window.

    step_h of None means the model-derived default.  t_final is interpreted
    as a duration; it is rounded to a whole number of steps.  Guards: the
    integrator aborts if |trace-1| exceeds trace_tol, and reports (or
    extends, see runners) when the top Fock level's occupancy crosses
    occupancy_threshold.
    """

    step_h: float | None = None
    t_final: float = 1.0
    sample_stride: int = 10
    renormalize: bool = False
    trace_tol: float = 1e-6
    occupancy_threshold: float = 1e-8
    positivity_tol: float = EPS_POS

    def __post_init__(self):
        if self.step_h is not None and self.step_h <= 0:
            raise ValueError("step_h must be positive")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")
        if self.positivity_tol <= 0:
            raise ValueError("positivity_tol must be positive")


class SampleContext:
    """Lazy per-sample computations shared between observers.

    Everything is computed at most once per sample: partial traces, spectra,
    and entropies are cached on first access.  eps_pos is the positivity
    floor applied to every entropy in this context; strongly driven
    high-dimension runs need a looser floor than the 1e-9 default because
    the integrator's harmless local error scales with (lam sqrt(n) h)^5.
    """

    def __init__(self, t: float, rho: np.ndarray, model: ModelOps,
                 eps_pos: float = EPS_POS):
        self.time = t
        self.rho = rho
        self.model = model
        self.eps_pos = eps_pos
        self._cache: dict = {}

    @property
    def n_fock(self) -> int:
        return self.model.n_fock

    @property
    def dim_m(self) -> int:
        return self.model.dim_m

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def rho_m(self):
        return self._get("rho_m", lambda: partial_trace(
            self.rho, self.model.dim_m, self.model.n_fock, "matter"))

    @property
    def rho_f(self):
        return self._get("rho_f", lambda: partial_trace(
            self.rho, self.model.dim_m, self.model.n_fock, "field"))

    @property
    def evals_mf(self):
        return self._get("evals_mf", lambda: np.linalg.eigvalsh(self.rho))

    @property
    def s_mf(self):
        return self._get("s_mf", lambda: _entropy_from_evals(self.evals_mf))

    @property
    def s_m(self):
        return self._get("s_m", lambda: von_neumann_entropy(self.rho_m))

    @property
    def s_f(self):
        return self._get("s_f", lambda: von_neumann_entropy(self.rho_f))

    @property
    def min_eigenvalue(self):
        return float(self.evals_mf[0])


def _entropy_from_evals(vals: np.ndarray, eps_pos: float = EPS_POS) -> float:
    if vals[0] < -eps_pos:
        raise IntegrationAbort(
            f"state eigenvalue {vals[0]:.3e} below -{eps_pos:g}")
    p = vals[vals > 0.0]
    return float(-np.sum(p * np.log(p))) if p.size else 0.0


@dataclass
class Trajectory:
    """Samples and diagnostics of one propagation window."""

    times: np.ndarray
    trace_err: np.ndarray
    herm_err: np.ndarray
    top_occupancy: np.ndarray
    tables: dict                      # observer name -> {"columns": [...], "data": 2d array}
    snapshots: list                   # (time, state copy) pairs
    final_state: np.ndarray
    final_time: float
    n_fock: int
    status: str                       # "completed" | "occupancy"
    step_h: float
    sample_index_end: int             # global index of the last recorded sample


def top_fock_occupancy(rho: np.ndarray, dim_m: int, n_fock: int) -> float:
    idx = np.arange(dim_m) * n_fock + (n_fock - 1)
    return float(np.sum(rho[idx, idx].real))


def propagate(rho0: np.ndarray, model: ModelOps, cfg: IntegrationConfig,
              observers=(), t_start: float = 0.0, sample_index0: int = 0,
              record_initial: bool = True) -> Trajectory:
    """Propagate rho0 for cfg.t_final, sampling every sample_stride steps.

    Observers fire at base samples where (global sample index) % observer.every
    == 0; snapshot observers fire at their requested times (snapped to the
    sample grid).  Returns early with status "occupancy" when the top Fock
    level exceeds the configured threshold, so a caller can extend the basis
    and resume; trace and positivity breaches raise IntegrationAbort.
    """
    h = cfg.step_h if cfg.step_h is not None else default_step(model)
    stride = cfg.sample_stride
    n_steps = max(1, round(cfg.t_final / h))
    n_chunks = n_steps // stride
    leftover = n_steps - n_chunks * stride

    d = model.dim
    if rho0.shape != (d, d):
        raise ValueError(f"state shape {rho0.shape} does not match model dim {d}")
    rho = np.array(rho0, dtype=np.complex128, order="C", copy=True)
    k1, k2, k3, k4, tmp = (np.empty_like(rho) for _ in range(5))
    n_fock, lam, p, q, src, dst, g, w, sq = model.kernel_args()

    times, tr_errs, herm_errs, occs = [], [], [], []
    rows = {ob.name: [] for ob in observers if ob.columns}
    row_times = {ob.name: [] for ob in observers if ob.columns}
    status = "completed"

    sample_index = sample_index0
    t = t_start

    def record(t_now):
        tr = float(np.trace(rho).real)
        occ = top_fock_occupancy(rho, model.dim_m, n_fock)
        times.append(t_now)
        tr_errs.append(abs(tr - 1.0))
        herm_errs.append(float(np.max(np.abs(rho - rho.conj().T))))
        occs.append(occ)
        if abs(tr - 1.0) > cfg.trace_tol:
            raise IntegrationAbort(
                f"trace drift {abs(tr-1.0):.3e} exceeds {cfg.trace_tol:g} at t={t_now:.6g}")
        ctx = SampleContext(t_now, rho, model)
        for ob in observers:
            if ob.wants(t_now, sample_index):
                out = ob.sample(ctx)
                if out is not None and ob.columns:
                    rows[ob.name].append(out)
                    row_times[ob.name].append(t_now)
        return occ

    if record_initial:
        occ = record(t)
        if occ > cfg.occupancy_threshold:
            status = "occupancy"
            n_chunks = 0
            leftover = 0
    chunks_done = 0
    while chunks_done < n_chunks:
        _kernels.propagate_chunk(rho, h, stride, n_fock, lam, p, q, src, dst,
                                 g, w, sq, k1, k2, k3, k4, tmp, cfg.renormalize)
        chunks_done += 1
        sample_index += 1
        t = t_start + chunks_done * stride * h
        occ = record(t)
        if occ > cfg.occupancy_threshold:
            status = "occupancy"
            leftover = 0
            break
    if leftover and status == "completed":
        _kernels.propagate_chunk(rho, h, leftover, n_fock, lam, p, q, src, dst,
                                 g, w, sq, k1, k2, k3, k4, tmp, cfg.renormalize)
        t = t_start + (chunks_done * stride + leftover) * h
        sample_index += 1
        record(t)

    tables = {}
    for ob in observers:
        if not ob.columns:
            continue
        data = np.array(rows[ob.name], dtype=np.float64) if rows[ob.name] else \
            np.empty((0, len(ob.columns)))
        tables[ob.name] = {"columns": list(ob.columns),
                           "times": np.array(row_times[ob.name]),
                           "data": data}
    snaps = []
    for ob in observers:
        drain = getattr(ob, "drain", None)
        if drain is not None:
            snaps.extend(drain())

    return Trajectory(
        times=np.array(times),
        trace_err=np.array(tr_errs),
        herm_err=np.array(herm_errs),
        top_occupancy=np.array(occs),
        tables=tables,
        snapshots=snaps,
        final_state=rho,
        final_time=t,
        n_fock=n_fock,
        status=status,
        step_h=h,
        sample_index_end=sample_index,
    )


class StrideObserver:
    """Base class: fires every `every`-th base sample; subclasses fill
    `columns` and implement sample(ctx) returning a float tuple."""

    name = "observer"
    columns: tuple = ()

    def __init__(self, every: int = 1):
        if every < 1:
            raise ValueError("every must be >= 1")
        self.every = every

    def wants(self, t: float, sample_index: int) -> bool:
        return sample_index % self.every == 0

    def sample(self, ctx: SampleContext):
        raise NotImplementedError


class SnapshotObserver:
    """Copies the full state at the first sample at or after each requested time."""

    name = "snapshots"
    columns: tuple = ()
    snapshot = True

    def __init__(self, times):
        self.pending = sorted(float(t) for t in times)
        self.collected = []

    def wants(self, t: float, sample_index: int) -> bool:
        return bool(self.pending) and t >= self.pending[0] - 1e-12

    def sample(self, ctx: SampleContext):
        while self.pending and ctx.time >= self.pending[0] - 1e-12:
            self.pending.pop(0)
        self.collected.append((ctx.time, ctx.rho.copy()))
        return None

    def drain(self):
        out, self.collected = self.collected, []
        return out


def build_superoperator(model: ModelOps) -> np.ndarray:
    """Explicit matrix of the generator acting on row-major-vectorized rho.

    vec(A rho B) = (A kron B^T) vec(rho) for C-order vec, so
    L = -i(V kron I - I kron V^T)
        + sum_c g_c [ L_c kron conj(L_c) - 1/2 (L_c^dag L_c kron I
                                               + I kron (L_c^dag L_c)^T) ].
    """
    d = model.dim
    eye = np.eye(d, dtype=np.complex128)
    v = model.v
    sup = -1j * (np.kron(v, eye) - np.kron(eye, v.T))
    for c in model.channels:
        L = model.jump_operator(c)
        LdL = L.conj().T @ L
        sup += c.rate * (np.kron(L, L.conj())
                         - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T)))
    return sup


def liouvillian_expm(rho0: np.ndarray, model: ModelOps, t: float) -> np.ndarray:
    """Independent oracle: exp(L t) applied to vec(rho0), dimension <= 36."""
    if model.dim > 36:
        raise ValueError(f"superoperator oracle limited to dim 36, got {model.dim}")
    sup = build_superoperator(model)
    u = scipy.linalg.expm(sup * t)
    return (u @ rho0.reshape(-1)).reshape(rho0.shape)


def steady_state_power_fit(times: np.ndarray, values: np.ndarray, window: int):
    """Least-squares slope of the trailing `window` samples, with R^2.

    A perfectly constant window returns slope 0 with R^2 = 1 (the fit is
    exact); R^2 < 0.999 indicates the window still contains transient.
    """
    if window < 2 or window > len(times):
        raise ValueError(f"window {window} invalid for {len(times)} samples")
    x = np.asarray(times[-window:], dtype=np.float64)
    y = np.asarray(values[-window:], dtype=np.float64)
    if np.ptp(y) == 0.0:
        return 0.0, 1.0
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean())**2))
    r2 = 1.0 if ss_tot == 0.0 and ss_res <= 1e-300 else (
        0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot)
    return float(slope), float(r2)


def empirical_order(model: ModelOps, rho0: np.ndarray, t: float, h0: float) -> float:
    """Observed RK4 convergence order from step halving (h0, h0/2, h0/4)."""
    finals = []
    for k in (1, 2, 4):
        cfg = IntegrationConfig(step_h=h0 / k, t_final=t,
                                sample_stride=max(1, round(t / (h0 / k))))
        traj = propagate(rho0, model, cfg)
        finals.append(traj.final_state)
    e1 = float(np.max(np.abs(finals[0] - finals[1])))
    e2 = float(np.max(np.abs(finals[1] - finals[2])))
    if e2 == 0.0:
        return np.inf
    return float(np.log2(e1 / e2))
