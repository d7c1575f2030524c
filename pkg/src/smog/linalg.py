"""Dense symmetric eigendecomposition, rank-k truncation and pseudoinverses.

Thin wrappers over LAPACK (via numpy) that pin down ordering, sign and
tolerance conventions used throughout the package.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionError, ParameterError

DEFAULT_PINV_RTOL = 1e-10
SYMMETRY_RTOL = 1e-8


class SymEigResult(NamedTuple):
    eigenvalues: NDArray
    eigenvectors: NDArray


def fix_signs(V: NDArray) -> NDArray:
    """Flip columns so that each column's largest-magnitude entry is positive."""
    V = np.array(V, dtype=float, copy=True)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def check_symmetric(M: NDArray, rtol: float = SYMMETRY_RTOL) -> NDArray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ParameterError("matrix has non-finite entries")
    scale = np.max(np.abs(M)) if M.size else 0.0
    if scale > 0 and np.max(np.abs(M - M.T)) > rtol * scale:
        raise DimensionError("matrix is not symmetric")
    return M


def sym_eig(M: NDArray) -> SymEigResult:
    """Eigendecomposition of a symmetric matrix.

    Eigenvalues are sorted non-increasing; eigenvector ``i`` is column ``i`` of
    ``eigenvectors`` with its largest-magnitude entry made positive.
    """
    M = check_symmetric(M)
    M = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(M)
    order = np.argsort(vals, kind="stable")[::-1]
    return SymEigResult(vals[order], fix_signs(vecs[:, order]))


def top_k_by_magnitude(M: NDArray, k: int) -> SymEigResult:
    """The k eigenpairs of largest ``|eigenvalue|``, in non-increasing |value| order."""
    M = check_symmetric(M)
    d = M.shape[0]
    if not 1 <= k <= d:
        raise ParameterError(f"k={k} out of range [1, {d}]")
    vals, vecs = sym_eig(M)
    order = np.argsort(-np.abs(vals), kind="stable")[:k]
    return SymEigResult(vals[order], vecs[:, order])


def rank_k_approx(M: NDArray, k: int) -> NDArray:
    """Spectral-norm-best rank-k approximation of a symmetric matrix.

    Keeps the ``k`` eigenvalues of largest magnitude; those may be negative.
    """
    vals, vecs = top_k_by_magnitude(M, k)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def pseudo_inverse(M: NDArray, rel_tol: float = DEFAULT_PINV_RTOL) -> NDArray:
    """Moore-Penrose pseudoinverse, zeroing singular values below ``rel_tol * s_1``."""
    if not 0 < rel_tol < 1:
        raise ParameterError("rel_tol must lie in (0, 1)")
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {M.shape}")
    if M.size == 0:
        return np.zeros(M.T.shape)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = s > rel_tol * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def singular_values(M: NDArray) -> NDArray:
    return np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)


def sym_power(M: NDArray, power: float, rel_tol: float = DEFAULT_PINV_RTOL) -> NDArray:
    """``|M|^power`` on the eigenspaces of a symmetric matrix.

    Uses eigenvalue magnitudes. For negative ``power`` eigenvalues below
    ``rel_tol`` times the largest magnitude are treated as zero (pseudo-power).
    """
    vals, vecs = sym_eig(M)
    mags = np.abs(vals)
    top = mags.max() if mags.size else 0.0
    keep = mags > rel_tol * top if top > 0 else np.zeros_like(mags, dtype=bool)
    out = np.zeros_like(mags)
    out[keep] = mags[keep] ** power
    res = (vecs * out) @ vecs.T
    return 0.5 * (res + res.T)


def symmetrize3(T: NDArray, average: bool = False) -> NDArray:
    """Make a cubic third-order tensor exactly symmetric.

    By default every entry is copied from its sorted-index representative, so
    the output is bitwise invariant under index permutations. With
    ``average=True`` the six permutations are averaged first.
    """
    T = np.asarray(T, dtype=float)
    p = T.shape[0]
    if T.shape != (p, p, p):
        raise DimensionError(f"expected a cubic tensor, got shape {T.shape}")
    if average:
        T = (
            T
            + T.transpose(0, 2, 1)
            + T.transpose(1, 0, 2)
            + T.transpose(1, 2, 0)
            + T.transpose(2, 0, 1)
            + T.transpose(2, 1, 0)
        ) / 6.0
    idx = np.sort(np.indices(T.shape).reshape(3, -1), axis=0)
    return T[idx[0], idx[1], idx[2]].reshape(T.shape)
