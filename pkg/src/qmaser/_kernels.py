"""Compiled inner loops for the density-matrix propagator.

The generator action is evaluated block-by-block over the matter indices so
the innermost Fock loops are branch-free and vectorize.  These kernels must
stay numerically equivalent to ModelOps.liouvillian (the dense numpy
reference); the equivalence is asserted in tests at every release of the
loop structure.

Layout convention matches the rest of the package: flat index i*N + n with
matter index i slow, Fock index n fast.
"""

import numba
import numpy as np


@numba.njit(cache=True, fastmath=True)
def liouville_apply(rho, out, n_fock, lam, p, q, src, dst, g, w, sq):
    """out = L[rho] for the interaction-picture generator.

    Parameters are the packed arrays from ModelOps.kernel_args: channel
    source/destination levels ``src``/``dst`` with full rates ``g``,
    per-level loss accumulators ``w`` (0.5 * sum of outgoing rates), and a
    sqrt lookup table ``sq`` with sq[k] = sqrt(k).
    """
    N = n_fock
    dim_m = w.shape[0]
    n_ch = g.shape[0]

    # decay scaling: out = -(w_i + w_j) * rho
    for i in range(dim_m):
        for j in range(dim_m):
            wij = w[i] + w[j]
            for n in range(N):
                r0 = i * N + n
                c0 = j * N
                for m in range(N):
                    out[r0, c0 + m] = -wij * rho[r0, c0 + m]

    # sandwich feeds: block (dst,dst) += g * block (src,src)
    for c in range(n_ch):
        rs = src[c] * N
        rd = dst[c] * N
        gc = g[c]
        for n in range(N):
            for m in range(N):
                out[rd + n, rd + m] += gc * rho[rs + n, rs + m]

    # coherent part -i lam [S a_dag + S_dag a, rho] with S = |p><q|:
    # row updates (operator acting from the left) ...
    cl = -1j * lam
    for j in range(dim_m):
        c0 = j * N
        for n in range(1, N):
            rp = p * N + n
            rq = q * N + n - 1
            f = cl * sq[n]
            for m in range(N):
                out[rp, c0 + m] += f * rho[rq, c0 + m]
        for n in range(N - 1):
            rq = q * N + n
            rp = p * N + n + 1
            f = cl * sq[n + 1]
            for m in range(N):
                out[rq, c0 + m] += f * rho[rp, c0 + m]
    # ... and column updates (operator acting from the right, sign flipped)
    cr = 1j * lam
    for i in range(dim_m):
        r0 = i * N
        cp = p * N
        cq = q * N
        for n in range(N):
            row = r0 + n
            for m in range(1, N):
                out[row, cp + m] += cr * sq[m] * rho[row, cq + m - 1]
            for m in range(N - 1):
                out[row, cq + m] += cr * sq[m + 1] * rho[row, cp + m + 1]


@numba.njit(cache=True, fastmath=True)
def _axpy_into(target, base, coef, inc):
    d = target.shape[0]
    for r in range(d):
        for c in range(d):
            target[r, c] = base[r, c] + coef * inc[r, c]


@numba.njit(cache=True, fastmath=True)
def rk4_step(rho, h, n_fock, lam, p, q, src, dst, g, w, sq, k1, k2, k3, k4, tmp):
    """One classical fixed-step RK4 update of rho in place."""
    liouville_apply(rho, k1, n_fock, lam, p, q, src, dst, g, w, sq)
    _axpy_into(tmp, rho, 0.5 * h, k1)
    liouville_apply(tmp, k2, n_fock, lam, p, q, src, dst, g, w, sq)
    _axpy_into(tmp, rho, 0.5 * h, k2)
    liouville_apply(tmp, k3, n_fock, lam, p, q, src, dst, g, w, sq)
    _axpy_into(tmp, rho, h, k3)
    liouville_apply(tmp, k4, n_fock, lam, p, q, src, dst, g, w, sq)
    s = h / 6.0
    d = rho.shape[0]
    for r in range(d):
        for c in range(d):
            rho[r, c] += s * (k1[r, c] + 2.0 * (k2[r, c] + k3[r, c]) + k4[r, c])


@numba.njit(cache=True, fastmath=True)
def propagate_chunk(rho, h, n_steps, n_fock, lam, p, q, src, dst, g, w, sq,
                    k1, k2, k3, k4, tmp, renormalize):
    """Advance n_steps RK4 steps without returning to the interpreter."""
    for _ in range(n_steps):
        rk4_step(rho, h, n_fock, lam, p, q, src, dst, g, w, sq, k1, k2, k3, k4, tmp)
        if renormalize:
            tr = 0.0
            d = rho.shape[0]
            for i in range(d):
                tr += rho[i, i].real
            inv = 1.0 / tr
            for r in range(d):
                for c in range(d):
                    rho[r, c] *= inv


@numba.njit(cache=True, fastmath=True)
def sc_derivative_into(rho, out, g1, g2, n1, n2, lam):
    """Nine-element right-hand side of the classical-drive equations.

    Must stay numerically equivalent to semiclassical.sc_derivative,
    which is the readable reference; tests compare the two.
    """
    r00 = rho[0, 0]
    r11 = rho[1, 1]
    r22 = rho[2, 2]
    r12 = rho[1, 2]
    r01 = rho[0, 1]
    r02 = rho[0, 2]
    out[0, 0] = (2 * g1 * (n1 + 1) * r11 - 2 * g1 * n1 * r00
                 - 2 * g2 * n2 * r00 + 2 * g2 * (n2 + 1) * r22)
    out[1, 1] = (-1j * lam * np.conj(r12) + 1j * lam * r12
                 - 2 * g1 * (n1 + 1) * r11 + 2 * g1 * n1 * r00)
    out[2, 2] = (-1j * lam * r12 + 1j * lam * np.conj(r12)
                 - 2 * g2 * (n2 + 1) * r22 + 2 * g2 * n2 * r00)
    out[1, 2] = (-1j * lam * r22 + 1j * lam * r11
                 - (g1 * (n1 + 1) + g2 * (n2 + 1)) * r12)
    out[0, 1] = (1j * lam * r02
                 - (g1 * (2 * n1 + 1) + g2 * n2) * r01)
    out[0, 2] = (1j * lam * r01
                 - (g2 * (2 * n2 + 1) + g1 * n1) * r02)
    out[2, 1] = np.conj(out[1, 2])
    out[1, 0] = np.conj(out[0, 1])
    out[2, 0] = np.conj(out[0, 2])


@numba.njit(cache=True, fastmath=True)
def sc_rk4_chunk(rho, h, n_steps, g1, g2, n1, n2, lam):
    """RK4 stepping of the 3x3 classical-drive state, in place."""
    k1 = np.empty((3, 3), dtype=np.complex128)
    k2 = np.empty((3, 3), dtype=np.complex128)
    k3 = np.empty((3, 3), dtype=np.complex128)
    k4 = np.empty((3, 3), dtype=np.complex128)
    tmp = np.empty((3, 3), dtype=np.complex128)
    for _ in range(n_steps):
        sc_derivative_into(rho, k1, g1, g2, n1, n2, lam)
        for r in range(3):
            for c in range(3):
                tmp[r, c] = rho[r, c] + 0.5 * h * k1[r, c]
        sc_derivative_into(tmp, k2, g1, g2, n1, n2, lam)
        for r in range(3):
            for c in range(3):
                tmp[r, c] = rho[r, c] + 0.5 * h * k2[r, c]
        sc_derivative_into(tmp, k3, g1, g2, n1, n2, lam)
        for r in range(3):
            for c in range(3):
                tmp[r, c] = rho[r, c] + h * k3[r, c]
        sc_derivative_into(tmp, k4, g1, g2, n1, n2, lam)
        for r in range(3):
            for c in range(3):
                rho[r, c] += (h / 6.0) * (k1[r, c] + 2 * k2[r, c]
                                          + 2 * k3[r, c] + k4[r, c])
