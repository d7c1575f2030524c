"""Fourth-cumulant spectral estimator for independent component analysis.

Model: ``x = A h + z`` with independent zero-mean, unit-variance sources
``h_i`` of non-zero excess kurtosis and Gaussian noise ``z``. The function

    f(eta) = (m4(eta) - 3 m2(eta)^2) / 12,   m_p(eta) = E[(eta^T x)^p]

does not see the Gaussian noise, and its Hessian is ``A K D2(eta) A^T`` with
``K`` the source kurtoses and ``D2(eta) = diag((eta^T a_i)^2)``. Hence
``H(phi) H(psi)^{-1} = A D2(phi) D2(psi)^{-1} A^{-1}`` has the columns of A as
eigenvectors.

Hessian derivation. With ``b(eta) = E[(eta^T x) x]`` and ``C = E[x x^T]``:
grad m4 = 4 E[(eta^T x)^3 x], hess m4 = 12 E[(eta^T x)^2 x x^T],
grad m2 = 2 b, hess m2 = 2 C, hess (m2^2) = 8 b b^T + 4 m2 C, so

    hess f = E[(eta^T x)^2 x x^T] - 2 b b^T - m2 C.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionError, KurtosisDegeneracyError, ParameterError
from .model import SampleSet
from .moments import DEFAULT_CHUNK, _chunks, _CompensatedSum
from .seeding import make_rng, unit_vector

MAX_DRAWS = 16
SINGULAR_RTOL = 1e-10
SINGULAR_ZSCORE = 4.0
IMAG_RTOL = 1e-6
DISTINCT_RTOL = 1e-6


@dataclass(frozen=True)
class CumulantHessian:
    eta: NDArray
    H: NDArray
    stderr: Optional[NDArray] = None


def _power_moments(data: SampleSet, eta: NDArray, chunk_size: int):
    """Return (m2, m4, b, C, E[(eta^T x)^2 x x^T])."""
    accs = [_CompensatedSum() for _ in range(5)]
    for Xc, wc in _chunks(data, chunk_size):
        s = Xc @ eta
        s2 = s * s
        accs[0].add(wc @ s2)
        accs[1].add(wc @ (s2 * s2))
        accs[2].add((wc * s) @ Xc)
        accs[3].add((Xc * wc[:, None]).T @ Xc)
        accs[4].add((Xc * (wc * s2)[:, None]).T @ Xc)
    return tuple(a.value() for a in accs)


def cumulant_f(data: SampleSet, eta: NDArray, chunk_size: int = DEFAULT_CHUNK) -> float:
    """Empirical ``(m4(eta) - 3 m2(eta)^2) / 12``."""
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (data.d,):
        raise DimensionError("eta must match the data dimension")
    acc2, acc4 = _CompensatedSum(), _CompensatedSum()
    for Xc, wc in _chunks(data, chunk_size):
        s2 = (Xc @ eta) ** 2
        acc2.add(wc @ s2)
        acc4.add(wc @ (s2 * s2))
    m2, m4 = float(acc2.value()), float(acc4.value())
    return (m4 - 3.0 * m2 * m2) / 12.0


def cumulant_hessian(
    data: SampleSet, eta: NDArray, chunk_size: int = DEFAULT_CHUNK, stderr: bool = False
) -> CumulantHessian:
    """Closed-form Hessian of the empirical ``f`` at ``eta``.

    With ``stderr=True`` (unweighted data only) also returns entrywise
    delta-method standard errors of H.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (data.d,):
        raise DimensionError("eta must match the data dimension")
    if data.n < 2:
        raise ParameterError("need at least two samples")
    m2, _, b, C, E2 = _power_moments(data, eta, chunk_size)
    H = E2 - 2.0 * np.outer(b, b) - m2 * C
    H = 0.5 * (H + H.T)
    se = None
    if stderr and data.weights is None:
        se = _hessian_stderr(data, eta, m2, b, C, chunk_size)
    return CumulantHessian(eta, H, se)


def _hessian_stderr(data, eta, m2, b, C, chunk_size):
    # influence of sample j: s^2 xx^T - 2(s x b^T + b s x^T) - s^2 C - m2 xx^T
    acc1, acc2 = _CompensatedSum(), _CompensatedSum()
    for Xc, _ in _chunks(data, chunk_size):
        s = Xc @ eta
        s2 = s * s
        xx = Xc[:, :, None] * Xc[:, None, :]
        sx = s[:, None] * Xc
        infl = (
            (s2 - m2)[:, None, None] * xx
            - 2.0 * (sx[:, :, None] * b[None, None, :] + b[None, :, None] * sx[:, None, :])
            - s2[:, None, None] * C
        )
        acc1.add(infl.sum(axis=0))
        acc2.add((infl * infl).sum(axis=0))
    n = data.n
    mean = acc1.value() / n
    var = np.maximum(acc2.value() / n - mean * mean, 0.0)
    return np.sqrt(var / n)


def _hessian_is_singular(ch: CumulantHessian) -> bool:
    eig = np.linalg.eigvalsh(ch.H)
    small = np.min(np.abs(eig))
    scale = np.max(np.abs(eig))
    if scale == 0 or small <= SINGULAR_RTOL * scale:
        return True
    if ch.stderr is not None:
        return bool(small <= SINGULAR_ZSCORE * np.linalg.norm(ch.stderr))
    return False


def normalize_columns(V: NDArray) -> NDArray:
    """Unit l2 columns, first non-zero entry of each column positive."""
    V = np.asarray(V, dtype=float)
    V = V / np.linalg.norm(V, axis=0)
    for j in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, j]) > 1e-300)
        if nz.size and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    return V


def _ica_from_hessians(
    hess: Callable[[NDArray], CumulantHessian], k: int, seed: int, max_draws: int = MAX_DRAWS
) -> dict:
    phi = unit_vector(make_rng(seed, "ica", "phi"), k)
    H_phi = hess(phi)
    if np.max(np.abs(H_phi.H)) == 0:
        raise KurtosisDegeneracyError("cumulant Hessian vanishes identically")
    reason = "no draws"
    for attempt in range(max_draws):
        psi = unit_vector(make_rng(seed, "ica", "psi", attempt), k)
        H_psi = hess(psi)
        if _hessian_is_singular(H_psi):
            reason = "singular Hessian at psi"
            continue
        M = H_phi.H @ np.linalg.inv(H_psi.H)
        vals, vecs = np.linalg.eig(M)
        radius = np.max(np.abs(vals))
        if radius == 0 or np.max(np.abs(vals.imag)) > IMAG_RTOL * radius:
            reason = "complex eigenvalues"
            continue
        vals, vecs = vals.real, vecs.real
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        if k > 1 and np.min(np.abs(np.diff(vals))) <= DISTINCT_RTOL * radius:
            reason = "eigenvalue ratios not distinct"
            continue
        return {
            "columns": normalize_columns(vecs),
            "eigenvalues": vals,
            "phi": phi,
            "psi": psi,
            "attempts": attempt + 1,
        }
    raise KurtosisDegeneracyError(
        f"no usable (phi, psi) pair in {max_draws} draws ({reason}); "
        "some source likely has zero excess kurtosis"
    )


def ica_estimate(data: SampleSet, seed: int = 0, chunk_size: int = DEFAULT_CHUNK) -> dict:
    """Estimate the mixing matrix columns (unit norm, up to sign/permutation).

    Returns a dict with ``columns`` (k x k), ``eigenvalues`` (the ratios
    ``(phi^T a_i)^2 / (psi^T a_i)^2``), the directions used and the draw count.
    """
    if data.n < 2:
        raise ParameterError("need at least two samples")

    def hess(eta):
        return cumulant_hessian(data, eta, chunk_size, stderr=data.weights is None)

    return _ica_from_hessians(hess, data.d, seed)


def population_hessian(A: NDArray, kurtosis: NDArray, eta: NDArray) -> NDArray:
    """Exact ``A diag(kappa_i (eta^T a_i)^2) A^T``."""
    A = np.asarray(A, dtype=float)
    proj = np.asarray(eta, dtype=float) @ A
    return (A * (np.asarray(kurtosis, dtype=float) * proj**2)) @ A.T


def ica_estimate_exact(A: NDArray, kurtosis: NDArray, seed: int = 0) -> dict:
    """Exact-moment estimator using the analytic population Hessian."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError("mixing matrix must be square")

    def hess(eta):
        return CumulantHessian(eta, population_hessian(A, kurtosis, eta))

    return _ica_from_hessians(hess, A.shape[0], seed)


def rademacher_sources(n: int, k: int, seed: int) -> NDArray:
    return make_rng(seed, "ica", "sources").choice([-1.0, 1.0], size=(n, k))


def rademacher_exact_sampleset(A: NDArray) -> SampleSet:
    """All 2^k sign patterns pushed through A, equally weighted (exact moments)."""
    A = np.asarray(A, dtype=float)
    k = A.shape[1]
    signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * k, indexing="ij")).reshape(k, -1).T
    return SampleSet(signs @ A.T, np.full(signs.shape[0], 1.0 / signs.shape[0]))


def angular_errors(estimate: NDArray, truth: NDArray) -> tuple[NDArray, NDArray]:
    """Match columns up to sign/permutation; return (perm, angles in radians).

    Greedy on absolute cosine similarity: repeatedly take the best remaining
    pair.
    """
    E = normalize_columns(estimate)
    T = normalize_columns(truth)
    cos = np.abs(T.T @ E)
    k = T.shape[1]
    perm = np.full(k, -1)
    used_t, used_e = set(), set()
    for flat in np.argsort(-cos, axis=None):
        i, j = divmod(int(flat), k)
        if i in used_t or j in used_e:
            continue
        perm[i] = j
        used_t.add(i)
        used_e.add(j)
    ang = np.array([math.acos(min(1.0, cos[i, perm[i]])) for i in range(k)])
    return perm, ang
