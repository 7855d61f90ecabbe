"""Dense complex linear algebra for bipartite matter-field states.

Everything operates on plain ``numpy.ndarray`` of dtype complex128 in
row-major order.  The bipartite index convention used across the whole
package is: matter is the slow (outer) factor, the field Fock index the
fast (inner) one, so a product operator is ``np.kron(matter_op, field_op)``
and the flat index of |i; n> is ``i * n_fock + n``.
"""

from __future__ import annotations

import numpy as np

# Eigenvalues of a density matrix in [-EPS_POS, 0) are truncation/roundoff
# artifacts and are clamped to zero; anything below -EPS_POS is treated as a
# real positivity violation.
EPS_POS = 1e-9


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return a.conj().T


def ketbra(dim: int, i: int, j: int) -> np.ndarray:
    """|i><j| in a dim-dimensional space."""
    m = np.zeros((dim, dim), dtype=np.complex128)
    m[i, j] = 1.0
    return m


def annihilation(n_fock: int) -> np.ndarray:
    """Truncated annihilation operator a with <n-1|a|n> = sqrt(n)."""
    return np.diag(np.sqrt(np.arange(1, n_fock, dtype=np.float64)), 1).astype(
        np.complex128
    )


def number_op(n_fock: int) -> np.ndarray:
    """Photon number operator diag(0, 1, ..., n_fock-1)."""
    return np.diag(np.arange(n_fock, dtype=np.float64)).astype(np.complex128)


def fock_state(n_fock: int, n: int) -> np.ndarray:
    """Fock basis vector |n> as a length-n_fock array."""
    if not 0 <= n < n_fock:
        raise ValueError(f"Fock level {n} outside truncation {n_fock}")
    v = np.zeros(n_fock, dtype=np.complex128)
    v[n] = 1.0
    return v


def coherent_amplitudes(alpha: complex, n_fock: int, norm_tol: float = 1e-10) -> np.ndarray:
    """Truncated coherent-state amplitude vector.

    Amplitudes c_n = exp(-|alpha|^2/2) alpha^n / sqrt(n!) are built by the
    multiplicative recurrence c_n = c_{n-1} * alpha / sqrt(n), which avoids
    factorial overflow at any truncation.

    Parameters
    ----------
    alpha : complex
        Coherent amplitude; mean photon number is |alpha|^2.
    n_fock : int
        Truncation dimension.
    norm_tol : float
        The truncated norm must satisfy ||c||^2 >= 1 - norm_tol, otherwise
        the truncation is judged inadequate and ValueError is raised.  The
        vector is renormalized after passing the check.
    """
    c = np.zeros(n_fock, dtype=np.complex128)
    c[0] = np.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, n_fock):
        c[n] = c[n - 1] * alpha / np.sqrt(n)
    norm2 = float(np.sum(np.abs(c) ** 2))
    if norm2 < 1.0 - norm_tol:
        raise ValueError(
            f"coherent state |alpha|^2={abs(alpha)**2:.3f} loses "
            f"{1.0 - norm2:.3e} of its norm at n_fock={n_fock}"
        )
    return c / np.sqrt(norm2)


def thermal_state(nbar: float, n_fock: int) -> np.ndarray:
    """Thermal (geometric) field density matrix at mean occupation nbar."""
    if nbar < 0:
        raise ValueError("nbar must be nonnegative")
    if nbar == 0:
        p = np.zeros(n_fock)
        p[0] = 1.0
    else:
        q = nbar / (nbar + 1.0)
        p = q ** np.arange(n_fock)
        p /= p.sum()
    return np.diag(p).astype(np.complex128)


def partial_trace(rho: np.ndarray, dim_m: int, dim_f: int, keep: str) -> np.ndarray:
    """Reduce a bipartite density matrix to one factor.

    Parameters
    ----------
    rho : (dim_m*dim_f, dim_m*dim_f) array
    dim_m, dim_f : int
        Matter (outer) and field (inner) dimensions.
    keep : {"matter", "field"}
        Which factor survives.

    Returns
    -------
    (dim_m, dim_m) or (dim_f, dim_f) array with the same trace as rho.
    """
    d = dim_m * dim_f
    if rho.shape != (d, d):
        raise ValueError(f"state shape {rho.shape} incompatible with {dim_m}x{dim_f}")
    r = rho.reshape(dim_m, dim_f, dim_m, dim_f)
    if keep == "matter":
        return np.einsum("injn->ij", r)
    if keep == "field":
        return np.einsum("inim->nm", r)
    raise ValueError(f"keep must be 'matter' or 'field', got {keep!r}")


def partial_transpose(rho: np.ndarray, dim_m: int, dim_f: int) -> np.ndarray:
    """Transpose the field factor: out[i*F+a, j*F+b] = rho[i*F+b, j*F+a].

    An involution that preserves trace and Hermiticity; a negative
    eigenvalue of the result certifies matter-field entanglement.
    """
    d = dim_m * dim_f
    if rho.shape != (d, d):
        raise ValueError(f"state shape {rho.shape} incompatible with {dim_m}x{dim_f}")
    r = rho.reshape(dim_m, dim_f, dim_m, dim_f)
    return np.ascontiguousarray(r.transpose(0, 3, 2, 1)).reshape(d, d)


def herm_eigen(m: np.ndarray, herm_tol: float = 1e-10):
    """Eigendecomposition of a Hermitian matrix, ascending eigenvalues.

    Raises ValueError if m deviates from Hermiticity by more than
    herm_tol * max(1, max|m|).
    """
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    dev = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    if dev > herm_tol * scale:
        raise ValueError(f"matrix is not Hermitian: max|m - m^dag| = {dev:.3e}")
    vals, vecs = np.linalg.eigh(m)
    return vals, vecs


def von_neumann_entropy(rho: np.ndarray, eps_pos: float = EPS_POS) -> float:
    """S = -Tr rho ln rho in units of k_B.

    Eigenvalues in [-eps_pos, 0) are clamped to zero (harmless integrator
    and truncation artifacts); an eigenvalue below -eps_pos raises, since
    that signals an invalid state rather than roundoff.
    """
    vals, _ = herm_eigen(rho)
    if vals[0] < -eps_pos:
        raise ValueError(f"density matrix has eigenvalue {vals[0]:.3e} < -{eps_pos:g}")
    p = vals[vals > 0.0]
    if p.size == 0:
        return 0.0
    return float(-np.sum(p * np.log(p)))


def min_eigenvalue(rho: np.ndarray) -> float:
    """Smallest eigenvalue of a Hermitian matrix (positivity witness)."""
    vals, _ = herm_eigen(rho)
    return float(vals[0])


def assert_state(rho: np.ndarray, trace_tol: float = 1e-8, herm_tol: float = 1e-10,
                 eps_pos: float = EPS_POS, check_positivity: bool = False) -> None:
    """Validate density-matrix invariants; raises ValueError on breach."""
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"trace {tr:.12g} deviates from 1 by more than {trace_tol:g}")
    scale = max(1.0, float(np.max(np.abs(rho))))
    dev = float(np.max(np.abs(rho - rho.conj().T)))
    if dev > herm_tol * scale:
        raise ValueError(f"state not Hermitian: max deviation {dev:.3e}")
    if check_positivity:
        low = min_eigenvalue(rho)
        if low < -eps_pos:
            raise ValueError(f"state has eigenvalue {low:.3e} < -{eps_pos:g}")
