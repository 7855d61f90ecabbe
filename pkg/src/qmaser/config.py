"""Run configuration: a structured TOML file mapped onto typed plans.

The config file is the reproducibility artifact; command-line flags only
override individual keys.  Sections:

    mode = "quantum"            # quantum | semiclassical | validate-jcm
                                # | compare | reproduce-paper
    out_dir = "runs/demo"

    [model]          three-level parameters (quantum and compare modes)
    [jcm]            two-level validation parameters (validate-jcm)
    [semiclassical]  either standalone rates or alpha_abs on top of [model]
    [integration]    step, windows, truncation and guard settings
    [initial]        matter level/mixture and field state
    [observers]      sampling cadences and snapshot times
    [sweep]          dotted parameter path and value list

Every key is validated; unknown keys are rejected so typos cannot
silently fall back to defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .models import DampedJCMParams, MaserParams
from .semiclassical import SemiclassicalParams

MODES = ("quantum", "semiclassical", "validate-jcm", "compare",
         "reproduce-paper")


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending key."""


@dataclass(frozen=True)
class Window:
    """One propagation stretch with its own sampling cadence."""

    duration: float
    sample_stride: int = 10
    step_h: float | None = None

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("window duration must be positive")
        if self.sample_stride < 1:
            raise ConfigError("window sample_stride must be >= 1")


@dataclass(frozen=True)
class IntegrationPlan:
    windows: tuple
    n_fock: int | None = None
    auto_extend: bool = True
    extension_chunk: int = 15
    renormalize: bool = False
    trace_tol: float = 1e-6
    occupancy_threshold: float = 1e-8

    @property
    def total_duration(self) -> float:
        return sum(w.duration for w in self.windows)


@dataclass(frozen=True)
class InitialSpec:
    """Initial product state: diagonal matter weights times a field state."""

    matter_weights: tuple
    field_type: str = "fock"
    field_n: int = 0
    alpha: complex = 0j
    nbar: float = 0.0

    def __post_init__(self):
        if self.field_type not in ("fock", "coherent", "thermal"):
            raise ConfigError(f"unknown field type {self.field_type!r}")
        total = sum(self.matter_weights)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError("matter weights must sum to 1")
        if any(w < 0 for w in self.matter_weights):
            raise ConfigError("matter weights must be non-negative")


@dataclass(frozen=True)
class ObserverPlan:
    """Cadence multipliers (0 disables an observer) and snapshot times."""

    thermo_every: int = 1
    matter_every: int = 1
    field_every: int = 1
    entangle_every: int = 0
    pt_t_max: float = math.inf
    probe_drop: int = 0
    qfunction_times: tuple = ()
    snapshot_times: tuple = ()


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple


@dataclass(frozen=True)
class RunConfig:
    mode: str
    out_dir: str
    model: MaserParams | None
    jcm: DampedJCMParams | None
    semiclassical: SemiclassicalParams | None
    plan: IntegrationPlan
    initial: InitialSpec
    observers: ObserverPlan
    sweep: SweepSpec | None
    raw: dict


def _section(data: dict, name: str) -> dict:
    got = data.get(name, {})
    if not isinstance(got, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(got)


def _take(sec: dict, key: str, default, path: str):
    value = sec.pop(key, default)
    if value is None:
        raise ConfigError(f"missing required key {path}.{key}")
    return value

def _reject_unknown(sec: dict, path: str):
    if sec:
        raise ConfigError(f"unknown keys in [{path}]: {sorted(sec)}")


def _dataclass_from(cls, sec: dict, path: str):
    names = {f for f in cls.__dataclass_fields__}
    unknown = set(sec) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{path}]: {sorted(unknown)}")
    try:
        return cls(**sec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{path}]: {exc}") from exc


def _parse_initial(sec: dict) -> InitialSpec:
    matter = sec.pop("matter", 0)
    if isinstance(matter, int):
        if not 0 <= matter < 3:
            raise ConfigError("initial.matter level must be 0, 1 or 2")
        weights = [0.0] * matter + [1.0]
    elif isinstance(matter, list):
        weights = [float(w) for w in matter]
    else:
        raise ConfigError("initial.matter must be a level index or a list "
                          "of weights")

    fsec = dict(sec.pop("field", {"type": "fock", "n": 0}))
    ftype = fsec.pop("type", "fock")
    spec = dict(matter_weights=tuple(weights), field_type=ftype)
    if ftype == "fock":
        spec["field_n"] = int(fsec.pop("n", 0))
    elif ftype == "coherent":
        if "alpha_abs" in fsec:
            spec["alpha"] = complex(float(fsec.pop("alpha_abs")), 0.0)
        else:
            spec["alpha"] = complex(float(fsec.pop("alpha_re", 0.0)),
                                    float(fsec.pop("alpha_im", 0.0)))
    elif ftype == "thermal":
        if "nbar" not in fsec:
            raise ConfigError("initial.field.nbar is required for a "
                              "thermal field")
        spec["nbar"] = float(fsec.pop("nbar"))
    _reject_unknown(fsec, "initial.field")
    _reject_unknown(sec, "initial")
    return InitialSpec(**spec)


def _parse_integration(sec: dict) -> IntegrationPlan:
    windows_raw = sec.pop("windows", None)
    step_h = sec.pop("step_h", None)
    if windows_raw is None:
        windows = (Window(duration=float(_take(sec, "t_final", None,
                                               "integration")),
                          sample_stride=int(sec.pop("sample_stride", 10)),
                          step_h=step_h),)
    else:
        if "t_final" in sec or "sample_stride" in sec:
            raise ConfigError("give either integration.windows or "
                              "t_final/sample_stride, not both")
        windows = tuple(
            Window(duration=float(w["duration"]),
                   sample_stride=int(w.get("sample_stride", 10)),
                   step_h=w.get("step_h", step_h))
            for w in windows_raw)
    plan = dict(windows=windows)
    for key, cast in (("n_fock", int), ("auto_extend", bool),
                      ("extension_chunk", int), ("renormalize", bool),
                      ("trace_tol", float), ("occupancy_threshold", float)):
        if key in sec:
            plan[key] = cast(sec.pop(key))
    _reject_unknown(sec, "integration")
    return IntegrationPlan(**plan)


def _parse_observers(sec: dict) -> ObserverPlan:
    plan = {}
    for key, cast in (("thermo_every", int), ("matter_every", int),
                      ("field_every", int), ("entangle_every", int),
                      ("pt_t_max", float), ("probe_drop", int)):
        if key in sec:
            plan[key] = cast(sec.pop(key))
    for key in ("qfunction_times", "snapshot_times"):
        if key in sec:
            plan[key] = tuple(float(t) for t in sec.pop(key))
    _reject_unknown(sec, "observers")
    return ObserverPlan(**plan)


def _parse_semiclassical(sec: dict, model: MaserParams | None):
    if "alpha_abs" in sec:
        if model is None:
            raise ConfigError("[semiclassical] alpha_abs requires [model]")
        alpha = float(sec.pop("alpha_abs"))
        omega = sec.pop("omega", None)
        _reject_unknown(sec, "semiclassical")
        return SemiclassicalParams.from_quantum(
            model, alpha, omega=None if omega is None else float(omega))
    return _dataclass_from(SemiclassicalParams, sec, "semiclassical")


def structure_config(data: dict) -> RunConfig:
    """Validate a parsed TOML document into a RunConfig."""
    work = dict(data)
    mode = work.pop("mode", None)
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    out_dir = work.pop("out_dir", "runs/out")

    # an empty table is a deliberate "use the defaults", so presence is
    # tested by membership rather than truthiness
    model = (_dataclass_from(MaserParams, _section(work, "model"), "model")
             if "model" in work else None)
    jcm = (_dataclass_from(DampedJCMParams, _section(work, "jcm"), "jcm")
           if "jcm" in work else None)
    sc = (_parse_semiclassical(_section(work, "semiclassical"), model)
          if "semiclassical" in work else None)

    plan = _parse_integration(_section(work, "integration")) \
        if "integration" in work else IntegrationPlan(windows=(Window(1.0),))
    initial = _parse_initial(_section(work, "initial")) \
        if "initial" in work else InitialSpec(matter_weights=(0.0, 1.0))
    observers = _parse_observers(_section(work, "observers")) \
        if "observers" in work else ObserverPlan()

    sweep = None
    if "sweep" in work:
        sec = _section(work, "sweep")
        sweep = SweepSpec(parameter=str(_take(sec, "parameter", None,
                                              "sweep")),
                          values=tuple(sec.pop("values", ())))
        _reject_unknown(sec, "sweep")
        if not sweep.values:
            raise ConfigError("sweep.values must be non-empty")

    needs_model = mode in ("quantum", "compare", "reproduce-paper")
    if needs_model and model is None:
        raise ConfigError(f"mode {mode!r} requires a [model] section")
    if mode == "validate-jcm" and jcm is None:
        jcm = DampedJCMParams()
    if mode == "semiclassical" and sc is None:
        raise ConfigError("mode 'semiclassical' requires a "
                          "[semiclassical] section")
    if mode == "compare" and sweep is None:
        raise ConfigError("mode 'compare' requires a [sweep] section with "
                          "alpha values")

    for key in ("model", "jcm", "semiclassical", "integration", "initial",
                "observers", "sweep"):
        work.pop(key, None)
    if work:
        raise ConfigError(f"unknown top-level keys: {sorted(work)}")

    return RunConfig(mode=mode, out_dir=str(out_dir), model=model, jcm=jcm,
                     semiclassical=sc, plan=plan, initial=initial,
                     observers=observers, sweep=sweep, raw=data)


def parse_override(text: str):
    """Split 'dotted.path=value' with the value parsed as a TOML literal."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    path, _, literal = text.partition("=")
    path = path.strip()
    if not path:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {literal.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = literal.strip()
    return path, value


def apply_override(data: dict, path: str, value):
    """Set a dotted path inside the raw config dict, creating tables."""
    keys = path.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {path!r} crosses the "
                              f"non-table key {key!r}")
    node[keys[-1]] = value


def load_config(path: str, overrides=()) -> RunConfig:
    """Read a TOML file, apply overrides, and validate."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for item in overrides:
        key, value = item if isinstance(item, tuple) else parse_override(item)
        apply_override(data, key, value)
    return structure_config(data)
