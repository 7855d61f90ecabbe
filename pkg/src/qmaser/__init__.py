"""Dissipative three-level maser with a quantized cavity mode.

Lindblad dynamics of a three-level emitter coupled to a single field
mode and two thermal reservoirs, with a per-sample thermodynamic ledger
(heat fluxes, powers, entropies, entropy production), entanglement and
phase-space diagnostics, and the exactly solvable classical-drive limit
used for cross-validation.
"""

__version__ = "0.1.0"

from .models import (
    Channel,
    DampedJCMParams,
    MaserParams,
    ModelOps,
    carnot_bound,
    reservoir_temperature,
)
from .evolve import IntegrationAbort, IntegrationConfig, Trajectory, propagate
from .thermo import FirstLawViolation, FluxRecord, ThermoObserver
from .semiclassical import (
    SemiclassicalParams,
    SteadyStateSolution,
    sc_propagate,
    sc_steady_state,
)
from .config import ConfigError, RunConfig, load_config

__all__ = [
    "__version__",
    "Channel",
    "ConfigError",
    "DampedJCMParams",
    "FirstLawViolation",
    "FluxRecord",
    "IntegrationAbort",
    "IntegrationConfig",
    "MaserParams",
    "ModelOps",
    "RunConfig",
    "SemiclassicalParams",
    "SteadyStateSolution",
    "ThermoObserver",
    "Trajectory",
    "carnot_bound",
    "load_config",
    "propagate",
    "reservoir_temperature",
    "sc_propagate",
    "sc_steady_state",
]
