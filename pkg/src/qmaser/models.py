"""Model definitions: a driven three-level maser coupled to a cavity mode
and two thermal reservoirs, plus a damped two-level Jaynes-Cummings model
used for integrator validation.

Both models reduce to one generic description (`ModelOps`): a matter system
of `dim_m` levels tensored with a truncated Fock space, an interaction-picture
coupling V = lam * (|p><q| (x) a_dag + |q><p| (x) a), and a list of thermal
jump channels acting on the matter factor only.  Rates stored in channels are
the full Lindblad prefactors, i.e. the factor-2 convention: a downward channel
carries 2*Gamma*(n+1) and its upward partner 2*Gamma*n, matching the rate
equations of the semiclassical limit.

The simulation frame is the interaction picture: the coherent part of the
generator is -i[V, rho] alone.  The bare Hamiltonians H_m and H_f enter only
through energy bookkeeping in the thermodynamics layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np

from .linalg import annihilation, dagger, ketbra, number_op

HOT = "hot"
COLD = "cold"


def reservoir_temperature(omega: float, n: float) -> float:
    """Temperature of a thermal reservoir with mean occupation n at frequency omega.

    T = omega / ln(1/n + 1) with k_B = 1.  n = 0 is a zero-temperature
    reservoir and returns 0.0.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    if n < 0:
        raise ValueError("occupation must be nonnegative")
    if n == 0:
        return 0.0
    return omega / math.log(1.0 / n + 1.0)


def carnot_bound(t_cold: float, t_hot: float) -> float:
    """1 - T_C/T_H, the Carnot efficiency limit."""
    if t_hot <= 0 or t_cold < 0:
        raise ValueError("need t_hot > 0 and t_cold >= 0")
    return 1.0 - t_cold / t_hot


@dataclass(frozen=True)
class Channel:
    """One matter jump |dst><src| with full Lindblad rate and reservoir tag."""

    src: int
    dst: int
    rate: float
    reservoir: str


@dataclass(frozen=True)
class ModelOps:
    """Generic dissipative matter-cavity model in the interaction picture."""

    dim_m: int
    n_fock: int
    matter_freqs: tuple
    omega_f: float
    lam: float
    p: int  # matter level raised together with a photon emission (V = lam |p><q| a_dag + h.c.)
    q: int
    channels: tuple

    def __post_init__(self):
        if self.n_fock < 2:
            raise ValueError("n_fock must be at least 2")
        if len(self.matter_freqs) != self.dim_m:
            raise ValueError("matter_freqs length must equal dim_m")
        for c in self.channels:
            if not (0 <= c.src < self.dim_m and 0 <= c.dst < self.dim_m):
                raise ValueError(f"channel {c} outside matter space")
            if c.rate < 0:
                raise ValueError("channel rates must be nonnegative")

    @property
    def dim(self) -> int:
        return self.dim_m * self.n_fock

    def with_n_fock(self, n_fock: int) -> "ModelOps":
        """Same model at a different Fock truncation."""
        return ModelOps(self.dim_m, n_fock, self.matter_freqs, self.omega_f,
                        self.lam, self.p, self.q, self.channels)

    # ------------------------------------------------------------------
    # full tensor-product operators (bookkeeping / small-system oracles)
    # ------------------------------------------------------------------

    @cached_property
    def a(self) -> np.ndarray:
        return np.kron(np.eye(self.dim_m, dtype=np.complex128), annihilation(self.n_fock))

    @cached_property
    def h_m(self) -> np.ndarray:
        return np.kron(np.diag(np.array(self.matter_freqs, dtype=np.complex128)),
                       np.eye(self.n_fock, dtype=np.complex128))

    @cached_property
    def h_f(self) -> np.ndarray:
        return self.omega_f * np.kron(np.eye(self.dim_m, dtype=np.complex128),
                                      number_op(self.n_fock))

    @cached_property
    def v(self) -> np.ndarray:
        s = ketbra(self.dim_m, self.p, self.q)
        ad = dagger(annihilation(self.n_fock))
        out = self.lam * np.kron(s, ad)
        return out + dagger(out)

    @cached_property
    def h_total(self) -> np.ndarray:
        return self.h_m + self.h_f + self.v

    def jump_operator(self, c: Channel) -> np.ndarray:
        """Full-space jump operator |dst><src| (x) 1_f (rate not included)."""
        return np.kron(ketbra(self.dim_m, c.dst, c.src),
                       np.eye(self.n_fock, dtype=np.complex128))

    # ------------------------------------------------------------------
    # reference generator (dense numpy; the numba kernel must match this)
    # ------------------------------------------------------------------

    def hamiltonian_part(self, rho: np.ndarray) -> np.ndarray:
        """-i [V, rho]."""
        v = self.v
        return -1j * (v @ rho - rho @ v)

    def dissipator(self, rho: np.ndarray, reservoir: str | None = None) -> np.ndarray:
        """Sum of Lindblad channels, optionally restricted to one reservoir.

        Uses the matter-block structure of the jump operators: for
        L = |d><s| (x) 1 the sandwich L rho L^dag copies the (s,s) matter
        block to (d,d), and L^dag L = |s><s| (x) 1 scales row/column blocks.
        """
        N = self.n_fock
        out = np.zeros_like(rho)
        r = rho.reshape(self.dim_m, N, self.dim_m, N)
        o = out.reshape(self.dim_m, N, self.dim_m, N)
        for c in self.channels:
            if reservoir is not None and c.reservoir != reservoir:
                continue
            o[c.dst, :, c.dst, :] += c.rate * r[c.src, :, c.src, :]
            o[c.src, :, :, :] -= 0.5 * c.rate * r[c.src, :, :, :]
            o[:, :, c.src, :] -= 0.5 * c.rate * r[:, :, c.src, :]
        return out

    def liouvillian(self, rho: np.ndarray) -> np.ndarray:
        """Full generator: -i[V, rho] + sum of dissipators."""
        return self.hamiltonian_part(rho) + self.dissipator(rho)

    # ------------------------------------------------------------------
    # packed arrays for the compiled kernel
    # ------------------------------------------------------------------

    def kernel_args(self):
        src = np.array([c.src for c in self.channels], dtype=np.int64)
        dst = np.array([c.dst for c in self.channels], dtype=np.int64)
        g = np.array([c.rate for c in self.channels], dtype=np.float64)
        w = np.zeros(self.dim_m, dtype=np.float64)
        for c in self.channels:
            w[c.src] += 0.5 * c.rate
        sq = np.sqrt(np.arange(self.n_fock + 1, dtype=np.float64))
        return (self.n_fock, self.lam, self.p, self.q, src, dst, g, w, sq)


def embed_state(rho: np.ndarray, dim_m: int, n_old: int, n_new: int) -> np.ndarray:
    """Embed a state into a different Fock truncation (grow or shrink).

    Growing pads with zeros; shrinking drops the top levels (only safe when
    their occupancy is negligible; callers are expected to check).
    """
    keep = min(n_old, n_new)
    out = np.zeros((dim_m * n_new, dim_m * n_new), dtype=np.complex128)
    r_in = rho.reshape(dim_m, n_old, dim_m, n_old)
    r_out = out.reshape(dim_m, n_new, dim_m, n_new)
    r_out[:, :keep, :, :keep] = r_in[:, :keep, :, :keep]
    return out


@dataclass(frozen=True)
class MaserParams:
    """Physical parameters of the three-level maser-cavity model.

    Levels: 0 is the shared ground (pump) level; 1 and 2 are the upper and
    lower lasing levels.  The hot reservoir drives 0<->1, the cold reservoir
    0<->2, and the cavity couples the 1<->2 transition resonantly.
    """

    gamma01: float = 1e-3
    gamma02: float = 1e-3
    n01: float = 10.0
    n02: float = 0.1
    lam: float = 1.0
    omega0: float = 0.0
    omega1: float = 0.1
    omega2: float = 0.025
    omega_f: float = 0.075
    n_fock: int = 30

    def __post_init__(self):
        if min(self.gamma01, self.gamma02, self.n01, self.n02) < 0:
            raise ValueError("rates and occupations must be nonnegative")
        if self.n_fock < 2:
            raise ValueError("n_fock must be at least 2")
        if not (self.omega1 > self.omega2 > self.omega0):
            raise ValueError("need omega1 > omega2 > omega0 (amplifier ordering)")

    # derived frequencies and temperatures ------------------------------

    @property
    def omega_h(self) -> float:
        return self.omega1 - self.omega0

    @property
    def omega_c(self) -> float:
        return self.omega2 - self.omega0

    @property
    def omega_s(self) -> float:
        return self.omega1 - self.omega2

    @property
    def omega_p(self) -> float:
        return self.omega_h

    @property
    def resonant(self) -> bool:
        return abs(self.omega_s - self.omega_f) <= 1e-12

    @property
    def t_hot(self) -> float:
        return reservoir_temperature(self.omega_h, self.n01)

    @property
    def t_cold(self) -> float:
        return reservoir_temperature(self.omega_c, self.n02)

    @property
    def beta_hot(self) -> float:
        return 1.0 / self.t_hot

    @property
    def beta_cold(self) -> float:
        return 1.0 / self.t_cold

    @property
    def gamma_eff(self) -> float:
        """Effective dissipation rate Gamma*(n01+n02)/2 for gamma01=gamma02."""
        if abs(self.gamma01 - self.gamma02) > 1e-15 * max(self.gamma01, self.gamma02):
            raise ValueError("gamma_eff defined for gamma01 == gamma02 only")
        return self.gamma01 * (self.n01 + self.n02) / 2.0

    @property
    def carnot(self) -> float:
        return carnot_bound(self.t_cold, self.t_hot)

    def build(self) -> ModelOps:
        ch = (
            Channel(1, 0, 2.0 * self.gamma01 * (self.n01 + 1.0), HOT),
            Channel(0, 1, 2.0 * self.gamma01 * self.n01, HOT),
            Channel(2, 0, 2.0 * self.gamma02 * (self.n02 + 1.0), COLD),
            Channel(0, 2, 2.0 * self.gamma02 * self.n02, COLD),
        )
        return ModelOps(
            dim_m=3,
            n_fock=self.n_fock,
            matter_freqs=(self.omega0, self.omega1, self.omega2),
            omega_f=self.omega_f,
            lam=self.lam,
            p=2,
            q=1,
            channels=ch,
        )


@dataclass(frozen=True)
class DampedJCMParams:
    """Resonant two-level Jaynes-Cummings model with one thermal reservoir.

    The atom (g=0, e=1) couples to the mode through V = lam(sigma_- a_dag +
    sigma_+ a); a single reservoir at occupation n_th damps the atom.  Serves
    as the analytically tractable validation model: with gamma=0 the vacuum
    Rabi population period is pi/lam and the global entropy stays zero.
    """

    gamma: float = 0.0
    n_th: float = 0.0
    lam: float = 1.0
    omega_a: float = 1.0
    omega_f: float = 1.0
    n_fock: int = 10

    def __post_init__(self):
        if self.gamma < 0 or self.n_th < 0:
            raise ValueError("gamma and n_th must be nonnegative")

    @property
    def gamma_eff(self) -> float:
        return self.gamma * (2.0 * self.n_th + 1.0) / 2.0

    def build(self) -> ModelOps:
        ch = (
            Channel(1, 0, 2.0 * self.gamma * (self.n_th + 1.0), HOT),
            Channel(0, 1, 2.0 * self.gamma * self.n_th, HOT),
        )
        return ModelOps(
            dim_m=2,
            n_fock=self.n_fock,
            matter_freqs=(0.0, self.omega_a),
            omega_f=self.omega_f,
            lam=self.lam,
            p=0,
            q=1,
            channels=ch,
        )
