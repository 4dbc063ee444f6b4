"""Dense linear-algebra helpers for small Hermitian operators.

Everything here works on plain ``numpy`` complex arrays. Tolerances are
relative to ``max(1, ||A||)`` so that energy units never leak into
thresholds.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ContractError, DimensionError

HERMITIAN_RTOL = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
# |0> is the ground state: sigma_z |n> = (-1)^(1-n) |n>
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


def as_operator(a: ArrayLike) -> NDArray[np.complex128]:
    """Return ``a`` as a square complex matrix, raising on bad shapes."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    return m


def scale_of(a: NDArray) -> float:
    return max(1.0, float(np.max(np.abs(a))) if a.size else 0.0)


def is_hermitian(a: ArrayLike, rtol: float = HERMITIAN_RTOL) -> bool:
    m = as_operator(a)
    return float(np.max(np.abs(m - m.conj().T))) <= rtol * scale_of(m)


def require_hermitian(a: ArrayLike, rtol: float = HERMITIAN_RTOL) -> NDArray[np.complex128]:
    m = as_operator(a)
    dev = float(np.max(np.abs(m - m.conj().T)))
    if dev > rtol * scale_of(m):
        raise ContractError(f"matrix is not Hermitian (max |A - A^dag| = {dev:.3e})")
    return m


def require_density_matrix(rho: ArrayLike, atol: float = 1e-10) -> NDArray[np.complex128]:
    """Validate a density matrix: Hermitian, unit trace, positive semidefinite."""
    m = require_hermitian(rho)
    tr = np.trace(m)
    if abs(tr - 1.0) > atol:
        raise ContractError(f"density matrix trace is {tr.real:.12g}, expected 1")
    lam_min = float(np.linalg.eigvalsh(m)[0])
    if lam_min < -atol:
        raise ContractError(f"density matrix has negative eigenvalue {lam_min:.3e}")
    return m


def hermitian_eig(a: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.complex128]]:
    """Eigendecomposition of a Hermitian matrix.

    Returns eigenvalues in ascending order and the matching orthonormal
    eigenvectors as columns. Degenerate eigenvectors come back in whatever
    basis LAPACK picks; use :mod:`tqdbattery.spectral` when continuity in
    time matters.
    """
    m = require_hermitian(a)
    # symmetrize so round-off asymmetry cannot leak into eigh
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return w, v


def expm_hermitian(a: ArrayLike, scale: complex) -> NDArray[np.complex128]:
    """``exp(scale * A)`` for Hermitian ``A`` via its eigendecomposition."""
    if not np.isfinite(scale):
        raise ContractError("scale must be finite")
    w, v = hermitian_eig(a)
    return (v * np.exp(scale * w)) @ v.conj().T


def kron(*ops: ArrayLike) -> NDArray[np.complex128]:
    """Kronecker product of one or more operators, leftmost factor most significant."""
    if not ops:
        raise ValueError("kron needs at least one operand")
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def partial_trace(rho: ArrayLike, keep: int | Sequence[int], dims: Sequence[int]) -> NDArray[np.complex128]:
    """Trace out every factor not listed in ``keep``.

    Parameters
    ----------
    rho : array_like
        Operator on the tensor product of factors with sizes ``dims``.
    keep : int or sequence of int
        Factor indices to keep, in the order they should appear.
    dims : sequence of int
        Factor dimensions, leftmost factor most significant.
    """
    m = as_operator(rho)
    dims = [int(d) for d in dims]
    if int(np.prod(dims)) != m.shape[0]:
        raise DimensionError(f"factor dims {dims} do not match operator dimension {m.shape[0]}")
    keep = [keep] if isinstance(keep, (int, np.integer)) else list(keep)
    n = len(dims)
    if any(k < 0 or k >= n for k in keep) or len(set(keep)) != len(keep):
        raise DimensionError(f"invalid subsystem selection {keep} for {n} factors")
    traced = [i for i in range(n) if i not in keep]
    t = m.reshape(dims + dims)
    # contract each traced factor's row index with its column index
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = list(letters[:n])
    cols = list(letters[n : 2 * n])
    for i in traced:
        cols[i] = rows[i]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    reduced = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    d = int(np.prod([dims[i] for i in keep]))
    return reduced.reshape(d, d)


def hs_norm(a: ArrayLike) -> float:
    """Hilbert-Schmidt norm ``sqrt(tr(A A^dag))``."""
    m = np.asarray(a, dtype=complex)
    return float(np.sqrt(np.sum(np.abs(m) ** 2)))


def ket_to_density(psi: ArrayLike) -> NDArray[np.complex128]:
    v = np.asarray(psi, dtype=complex)
    return np.outer(v, v.conj())


def commutator(a: ArrayLike, b: ArrayLike) -> NDArray[np.complex128]:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return a @ b - b @ a
