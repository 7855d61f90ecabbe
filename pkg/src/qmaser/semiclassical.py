"""Semiclassical three-level amplifier: nine coupled ODEs for the matter
density matrix driven by a classical monochromatic field, their exact
steady state in closed form, and the stationary fluxes and efficiency.

The matter sees the same two thermal reservoirs as the quantum model
(hot on 0<->1, cold on 0<->2) but the cavity mode is replaced by a
classical drive of amplitude lambda_sc = lambda*|alpha| coupling levels
1<->2.  In the interaction picture at perfect resonance the equations of
motion close over the 3x3 matter state alone.

The stationary populations and coherence are rational functions of the
rates.  They are implemented twice on purpose: once as explicit
polynomial constants written out term by term, and once by solving the
3x3 linear stationarity system with a generic solver.  Both routes must
agree to 1e-12; a transcription slip in either one breaks the check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .evolve import IntegrationConfig
from .linalg import EPS_POS, assert_state
from .models import MaserParams, reservoir_temperature

RESIDUAL_RTOL = 1e-12
DUAL_ROUTE_RTOL = 1e-12


@dataclass(frozen=True)
class SemiclassicalParams:
    """Rates, occupations and frequencies of the driven three-level matter.

    lambda_sc is the product of the quantum coupling and the field
    strength |alpha|; omega is the drive frequency, which the closed
    forms keep distinct from the 1<->2 splitting so detuned bookkeeping
    stays possible.
    """

    gamma01: float
    gamma02: float
    n01: float
    n02: float
    lambda_sc: float
    omega: float
    omega0: float = 0.0
    omega1: float = 0.1
    omega2: float = 0.025

    def __post_init__(self):
        if self.gamma01 <= 0 or self.gamma02 <= 0:
            raise ValueError("decay rates must be positive")
        if self.n01 < 0 or self.n02 < 0:
            raise ValueError("thermal occupations must be non-negative")
        if self.lambda_sc < 0:
            raise ValueError("lambda_sc must be non-negative")
        if not (self.omega1 > self.omega2 > self.omega0):
            raise ValueError("level frequencies must satisfy w1 > w2 > w0")

    @classmethod
    def from_quantum(cls, p: MaserParams, alpha_abs: float,
                     omega: float | None = None) -> "SemiclassicalParams":
        """Map the quantum parameter set at field strength |alpha|."""
        return cls(gamma01=p.gamma01, gamma02=p.gamma02,
                   n01=p.n01, n02=p.n02,
                   lambda_sc=p.lam * alpha_abs,
                   omega=p.omega_f if omega is None else omega,
                   omega0=p.omega0, omega1=p.omega1, omega2=p.omega2)

    @property
    def gamma_s(self) -> float:
        """Coherence decay rate of the 1<->2 off-diagonal element."""
        return self.gamma01 * (self.n01 + 1) + self.gamma02 * (self.n02 + 1)

    @property
    def t_hot(self) -> float:
        return reservoir_temperature(self.omega1 - self.omega0, self.n01)

    @property
    def t_cold(self) -> float:
        return reservoir_temperature(self.omega2 - self.omega0, self.n02)


@dataclass(frozen=True)
class SemiclassicalState:
    rho: np.ndarray
    time: float

    def validate(self, trace_tol: float = 1e-10):
        assert_state(self.rho, trace_tol=trace_tol, check_positivity=True)


@dataclass(frozen=True)
class SteadyStateSolution:
    """Exact stationary solution together with its fluxes.

    A, B, C scale the populations of levels 0, 1, 2 and D the 1<->2
    coherence, all relative to the normalization F = A + B + C.  `case`
    records which physical branch applies: population inversion (C,
    n01 > n02), attenuation (B, n01 < n02), or the coherence-free tie
    (A).  eta is NaN outside the amplifier branch.
    """

    case: str
    A: float
    B: float
    C: float
    D: float
    F: float
    rho_ss: np.ndarray
    phi: float
    P_ss: float
    Qdot_H_ss: float
    Qdot_C_ss: float
    P_m_ss: float
    Edot_ss: float
    r: float
    eta: float


def sc_derivative(rho: np.ndarray, p: SemiclassicalParams) -> np.ndarray:
    """Right-hand side of the nine element equations at resonance.

    Written out element by element in the same grouping as the flux
    bookkeeping uses: drive terms first, then the thermal rates.  The
    lower triangle follows by conjugation.
    """
    g1, g2 = p.gamma01, p.gamma02
    n1, n2 = p.n01, p.n02
    lam = p.lambda_sc
    r00, r11, r22 = rho[0, 0], rho[1, 1], rho[2, 2]
    r12, r01, r02 = rho[1, 2], rho[0, 1], rho[0, 2]

    d = np.empty((3, 3), dtype=complex)
    d[0, 0] = (2 * g1 * (n1 + 1) * r11 - 2 * g1 * n1 * r00
               - 2 * g2 * n2 * r00 + 2 * g2 * (n2 + 1) * r22)
    d[1, 1] = (-1j * lam * np.conj(r12) + 1j * lam * r12
               - 2 * g1 * (n1 + 1) * r11 + 2 * g1 * n1 * r00)
    d[2, 2] = (-1j * lam * r12 + 1j * lam * np.conj(r12)
               - 2 * g2 * (n2 + 1) * r22 + 2 * g2 * n2 * r00)
    d[1, 2] = (-1j * lam * r22 + 1j * lam * r11
               - (g1 * (n1 + 1) + g2 * (n2 + 1)) * r12)
    d[0, 1] = (1j * lam * r02
               - (g1 * (2 * n1 + 1) + g2 * n2) * r01)
    d[0, 2] = (1j * lam * r01
               - (g2 * (2 * n2 + 1) + g1 * n1) * r02)
    d[2, 1] = np.conj(d[1, 2])
    d[1, 0] = np.conj(d[0, 1])
    d[2, 0] = np.conj(d[0, 2])
    return d


def sc_generator(p: SemiclassicalParams) -> np.ndarray:
    """Real 18x18 matrix generating d/dt [Re vec(rho); Im vec(rho)].

    sc_derivative rebuilds its lower triangle by conjugation, so as a map
    on C^{3x3} it is only real-linear; the faithful matrix representation
    acts on the stacked real and imaginary parts (row-major vec).
    """
    m = np.zeros((18, 18))
    for k in range(18):
        v = np.zeros(18)
        v[k] = 1.0
        rho = (v[:9] + 1j * v[9:]).reshape(3, 3)
        d = sc_derivative(rho, p).ravel()
        m[:, k] = np.concatenate([d.real, d.imag])
    return m


def _constants_closed_form(p: SemiclassicalParams):
    """The five stationary constants, each written term by term."""
    g1, g2, n1, n2 = p.gamma01, p.gamma02, p.n01, p.n02
    lam, gs = p.lambda_sc, p.gamma_s
    a = (lam ** 3 * (g1 * (n1 + 1) + g2 * (n2 + 1))
         + lam * gs * g1 * g2 * (n1 + 1) * (n2 + 1))
    b = (lam ** 3 * (g1 * n1 + g2 * n2)
         + lam * gs * g1 * g2 * n1 * (n2 + 1))
    c = (lam ** 3 * (g1 * n1 + g2 * n2)
         + lam * gs * g1 * g2 * n2 * (n1 + 1))
    d = lam ** 2 * g1 * g2 * (n1 - n2)
    f = (lam ** 3 * (g1 * (3 * n1 + 1) + g2 * (3 * n2 + 1))
         + lam * gs * g1 * g2 * (3 * n1 * n2 + 2 * n1 + 2 * n2 + 1))
    return a, b, c, d, f


def _solve_linear_system(p: SemiclassicalParams):
    """Stationary (rho11, rho22, Im rho12) from a generic linear solve.

    Eliminates rho00 = 1 - rho11 - rho22 and solves the three real
    stationarity conditions of the populations and the coherence.
    """
    g1, g2, n1, n2 = p.gamma01, p.gamma02, p.n01, p.n02
    lam, gs = p.lambda_sc, p.gamma_s
    mat = np.array([
        [-2 * g1 * (n1 + 1) - 2 * g1 * n1, -2 * g1 * n1, -2 * lam],
        [-2 * g2 * n2, -2 * g2 * (n2 + 1) - 2 * g2 * n2, 2 * lam],
        [lam, -lam, -gs],
    ])
    rhs = np.array([-2 * g1 * n1, -2 * g2 * n2, 0.0])
    return np.linalg.solve(mat, rhs)


def sc_steady_state(p: SemiclassicalParams) -> SteadyStateSolution:
    """Exact steady state with both derivation routes cross-checked.

    Populations x = rho11, y = rho22 and coherence Im(rho12) come from
    the closed-form constants; a generic solve of the stationarity
    system must reproduce them to DUAL_ROUTE_RTOL.  The case label
    follows the sign of n01 - n02.
    """
    if p.lambda_sc == 0:
        raise ValueError("lambda_sc = 0 has no unique driven steady state "
                         "branch; integrate the rate equations instead")
    a, b, c, d, f = _constants_closed_form(p)
    rel = abs(a + b + c - f) / f
    if rel > RESIDUAL_RTOL:
        raise AssertionError(f"A+B+C != F (relative deviation {rel:.2e})")

    x, y, wi = b / f, c / f, d / f
    solved = _solve_linear_system(p)
    dev = np.max(np.abs(solved - np.array([x, y, wi])))
    if dev > DUAL_ROUTE_RTOL * max(1.0, abs(x), abs(y)):
        raise AssertionError(
            f"closed-form and linear-solve routes disagree by {dev:.2e}")

    rho_ss = np.array([
        [a / f, 0, 0],
        [0, x, 1j * wi],
        [0, -1j * wi, y],
    ], dtype=complex)

    if p.n01 > p.n02:
        case = "C"
        phi = math.pi / 2
    elif p.n01 < p.n02:
        case = "B"
        phi = 3 * math.pi / 2
    else:
        case = "A"
        phi = 0.0

    if not (a > b and a > c):
        raise AssertionError("ground population must dominate (A > B, C)")
    if min(np.linalg.eigvalsh(rho_ss)) < -EPS_POS:
        raise AssertionError("steady state not positive semidefinite")

    resid = np.linalg.norm(sc_derivative(rho_ss, p))
    scale = np.linalg.norm(sc_generator(p))
    if resid > RESIDUAL_RTOL * scale:
        raise AssertionError(
            f"stationarity residual {resid:.2e} exceeds {RESIDUAL_RTOL:.0e} "
            f"of the generator norm {scale:.2e}")

    ss = SteadyStateSolution(
        case=case, A=a, B=b, C=c, D=d, F=f, rho_ss=rho_ss, phi=phi,
        P_ss=math.nan, Qdot_H_ss=math.nan, Qdot_C_ss=math.nan,
        P_m_ss=math.nan, Edot_ss=math.nan,
        r=x / y if y > 0 else math.inf, eta=math.nan)
    fluxes = sc_fluxes(ss, p)
    eta = ((p.omega1 - p.omega2) / (p.omega1 - p.omega0)
           if case == "C" else math.nan)
    return replace(ss, P_ss=fluxes[0], Qdot_H_ss=fluxes[1],
                   Qdot_C_ss=fluxes[2], P_m_ss=fluxes[3],
                   Edot_ss=fluxes[4], eta=eta)


def sc_dissipator(rho: np.ndarray, p: SemiclassicalParams,
                  reservoir: str) -> np.ndarray:
    """Single-reservoir Lindblad action on the bare 3x3 matter state."""
    if reservoir == "hot":
        g, n, lvl = p.gamma01, p.n01, 1
    elif reservoir == "cold":
        g, n, lvl = p.gamma02, p.n02, 2
    else:
        raise ValueError(f"unknown reservoir {reservoir!r}")
    out = np.zeros((3, 3), dtype=complex)
    for rate, src, dst in ((2 * g * (n + 1), lvl, 0), (2 * g * n, 0, lvl)):
        out[dst, dst] += rate * rho[src, src]
        out[src, :] -= 0.5 * rate * rho[src, :]
        out[:, src] -= 0.5 * rate * rho[:, src]
    return out


def sc_fluxes(ss: SteadyStateSolution, p: SemiclassicalParams):
    """(P_ss, Qdot_H_ss, Qdot_C_ss, P_m_ss, Edot_ss) in closed form.

    The shared prefactor is 2*Gamma01*Gamma02*lambda_sc^3*(n01-n02)/F;
    the drive carries omega, the reservoirs their level splittings.
    Edot_ss vanishes exactly on drive resonance.  Also asserts that the
    stationary coherence, being purely imaginary, exchanges no heat
    through the coupling operator.
    """
    k = (2 * p.gamma01 * p.gamma02 * p.lambda_sc ** 3
         * (p.n01 - p.n02) / ss.F)
    p_ss = -k * p.omega
    qdot_h = k * (p.omega1 - p.omega0)
    qdot_c = -k * (p.omega2 - p.omega0)
    p_m = -k * (p.omega1 - p.omega2)
    edot = qdot_h + qdot_c + p_ss

    v = p.lambda_sc * np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0]],
                               dtype=complex)
    scale = max(abs(qdot_h), abs(qdot_c), p.lambda_sc * p.gamma_s, 1e-300)
    for res in ("hot", "cold"):
        leak = abs(np.einsum("ij,ji->", sc_dissipator(ss.rho_ss, p, res), v))
        if leak > 1e-10 * scale:
            raise AssertionError(
                f"coupling heat leak {leak:.2e} at the steady state "
                f"({res} reservoir)")
    return p_ss, qdot_h, qdot_c, p_m, edot


def sc_efficiency(fluxes, p: SemiclassicalParams) -> float:
    """eta = -P_m_ss / Qdot_H_ss for the amplifier branch.

    Raises when the hot flux is not positive (attenuation branch or
    degenerate tie) and when the result would breach the Carnot bound,
    which cannot happen for a correct flux set.
    """
    _, qdot_h, _, p_m, _ = fluxes
    if qdot_h <= 1e-300:
        raise ValueError("efficiency undefined: hot heat flux must be "
                         "positive (amplifier branch only)")
    eta = -p_m / qdot_h
    carnot = 1.0 - p.t_cold / p.t_hot
    if eta > carnot + 1e-12:
        raise RuntimeError(f"eta = {eta:.6f} exceeds the Carnot bound "
                           f"{carnot:.6f}")
    return eta


def boltzmann_inversion_ratio(p: SemiclassicalParams) -> float:
    """Naive no-coherence prediction n01(n02+1)/(n02(n01+1)).

    The closed-form r = B/C stays marginally above 1, far below this
    value; keeping both quantifies how strongly the drive suppresses
    the population inversion."""
    if p.n02 == 0:
        return math.inf
    return p.n01 * (p.n02 + 1) / (p.n02 * (p.n01 + 1))


@dataclass(frozen=True)
class SCTrajectory:
    times: np.ndarray
    states: np.ndarray
    final_state: SemiclassicalState


def default_sc_step(p: SemiclassicalParams) -> float:
    fastest = max(p.lambda_sc, 2 * p.gamma01 * (2 * p.n01 + 1),
                  2 * p.gamma02 * (2 * p.n02 + 1))
    return 0.01 / fastest


def sc_propagate(rho0: np.ndarray, p: SemiclassicalParams,
                 cfg: IntegrationConfig) -> SCTrajectory:
    """Fixed-step RK4 for the nine element equations.

    Uses the step/final-time/stride fields of IntegrationConfig; the
    Fock-space controls do not apply here.  States are validated at
    every retained sample.
    """
    h = cfg.step_h if cfg.step_h is not None else default_sc_step(p)
    n_steps = max(1, int(round(cfg.t_final / h)))
    rho = np.array(rho0, dtype=complex)
    times = [0.0]
    states = [rho.copy()]
    done = 0
    while done < n_steps:
        chunk = min(cfg.sample_stride, n_steps - done)
        _kernels.sc_rk4_chunk(rho, h, chunk, p.gamma01, p.gamma02,
                              p.n01, p.n02, p.lambda_sc)
        done += chunk
        t = done * h
        times.append(t)
        states.append(rho.copy())
        SemiclassicalState(rho, t).validate()
    final = SemiclassicalState(states[-1], times[-1])
    return SCTrajectory(np.array(times), np.array(states), final)


def relaxation_time(p: SemiclassicalParams, factor: float = 25.0) -> float:
    """Integration horizon from the slowest decaying generator mode."""
    eigs = np.linalg.eigvals(sc_generator(p))
    decaying = [abs(e.real) for e in eigs if e.real < -1e-13]
    if not decaying:
        raise ValueError("generator has no decaying modes")
    return factor / min(decaying)


def coherence_landscape(grid) -> np.ndarray:
    """Rows (n01, n02, lambda_sc, |rho12_ss|) over a parameter iterable.

    The coherence magnitude |D|/F is symmetric under swapping the two
    occupations and peaks where the drive and the decay rates compete.
    """
    rows = []
    for p in grid:
        ss = sc_steady_state(p)
        rows.append((p.n01, p.n02, p.lambda_sc, abs(ss.D) / ss.F))
    return np.array(rows)
