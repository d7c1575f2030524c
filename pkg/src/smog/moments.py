"""Empirical moment statistics computed from samples.

All accumulations stream over row chunks. Chunk partial sums are combined with
Neumaier compensated summation, so results do not drift with the chunk size.
Nothing here ever materializes a d x d x d array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionError, ParameterError
from .linalg import sym_eig, symmetrize3
from .model import PopulationMoments, SampleSet

DEFAULT_CHUNK = 1 << 16


class _CompensatedSum:
    """Neumaier summation for same-shaped arrays."""

    def __init__(self):
        self.total = None
        self.comp = None

    def add(self, x):
        x = np.asarray(x, dtype=float)
        if self.total is None:
            self.total = x.copy()
            self.comp = np.zeros_like(x)
            return
        t = self.total + x
        big = np.abs(self.total) >= np.abs(x)
        self.comp += np.where(big, (self.total - t) + x, (x - t) + self.total)
        self.total = t

    def value(self):
        return self.total + self.comp


def _chunks(data: SampleSet, chunk_size: int):
    """Yield ``(rows, row_weights)``; unweighted sets get weight 1/n per row."""
    if chunk_size < 1:
        raise ParameterError("chunk_size must be positive")
    n = data.n
    for start in range(0, n, chunk_size):
        stop = min(start + chunk_size, n)
        if data.weights is None:
            w = np.full(stop - start, 1.0 / n)
        else:
            w = data.weights[start:stop]
        yield data.X[start:stop], w


def weighted_mean(data: SampleSet, chunk_size: int = DEFAULT_CHUNK) -> NDArray:
    acc = _CompensatedSum()
    for Xc, wc in _chunks(data, chunk_size):
        acc.add(wc @ Xc)
    return acc.value()


@dataclass(frozen=True)
class MomentSummary:
    """First-half statistics: mean, raw second moment E[xx^T], noise level."""

    mu_hat: NDArray
    raw2: NDArray
    sigma2_hat: float
    n: int

    @property
    def covariance(self) -> NDArray:
        return self.raw2 - np.outer(self.mu_hat, self.mu_hat)

    @classmethod
    def from_moments(cls, mu_hat, raw2, k: int, n: int = 0) -> "MomentSummary":
        """Build a summary from given moments, estimating the noise level."""
        mu_hat = np.asarray(mu_hat, dtype=float)
        raw2 = np.asarray(raw2, dtype=float)
        raw2 = 0.5 * (raw2 + raw2.T)
        vals = sym_eig(raw2 - np.outer(mu_hat, mu_hat)).eigenvalues
        return cls(mu_hat, raw2, float(vals[k - 1]), n)


@dataclass(frozen=True)
class WhitenedTensor:
    """Symmetric k x k x k tensor ``M3[W, W, W]``."""

    entries: NDArray

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def contract(self, theta: NDArray) -> NDArray:
        """``T[theta]``: contract the last index, giving a symmetric k x k matrix."""
        M = self.entries @ np.asarray(theta, dtype=float)
        return 0.5 * (M + M.T)


def summarize(
    data: SampleSet, k: int, chunk_size: int = DEFAULT_CHUNK, exact: bool = False
) -> MomentSummary:
    """Sample mean, raw second moment and sigma2_hat.

    ``sigma2_hat`` is the k-th largest eigenvalue of the biased (1/n)
    covariance. With ``exact=True`` every sum is correctly rounded
    (``math.fsum``), which makes the result independent of row order; that
    mode is slow and meant for small inputs.
    """
    if data.n < 2:
        raise ParameterError("need at least two samples")
    if not 1 <= k <= data.d:
        raise ParameterError(f"k={k} must satisfy 1 <= k <= d={data.d}")
    if exact:
        w = np.full(data.n, 1.0 / data.n) if data.weights is None else data.weights
        WX = w[:, None] * data.X
        mu = np.array([math.fsum(col) for col in WX.T])
        d = data.d
        raw2 = np.empty((d, d))
        for i in range(d):
            for j in range(i, d):
                raw2[i, j] = raw2[j, i] = math.fsum(WX[:, i] * data.X[:, j])
    else:
        mu_acc, raw_acc = _CompensatedSum(), _CompensatedSum()
        for Xc, wc in _chunks(data, chunk_size):
            WXc = Xc * wc[:, None]
            mu_acc.add(WXc.sum(axis=0))
            raw_acc.add(WXc.T @ Xc)
        mu, raw2 = mu_acc.value(), raw_acc.value()
    return MomentSummary.from_moments(mu, raw2, k, data.n)


def noise_eigvec(summary: MomentSummary) -> NDArray:
    """Unit eigenvector of the empirical covariance for its smallest eigenvalue."""
    vecs = sym_eig(summary.covariance).eigenvectors
    return vecs[:, -1].copy()


def estimate_M1(
    data: SampleSet, v: NDArray, mu_hat: NDArray, chunk_size: int = DEFAULT_CHUNK
) -> NDArray:
    """Empirical ``E[x (v^T (x - mu_hat))^2]``."""
    v = np.asarray(v, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    if v.shape != (data.d,) or mu_hat.shape != (data.d,):
        raise DimensionError("v and mu_hat must be d-vectors")
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ParameterError("v must be a unit vector")
    acc = _CompensatedSum()
    for Xc, wc in _chunks(data, chunk_size):
        s = (Xc - mu_hat) @ v
        acc.add((wc * s * s) @ Xc)
    return acc.value()


def m3_eta_slice(
    data: SampleSet, eta: NDArray, M1: NDArray, chunk_size: int = DEFAULT_CHUNK
) -> NDArray:
    """Empirical third moment contracted with ``eta`` in its last index.

    Returns ``E[(eta^T x) x x^T] - M1 eta^T - eta M1^T - (M1^T eta) I``.
    """
    eta = np.asarray(eta, dtype=float)
    M1 = np.asarray(M1, dtype=float)
    if eta.shape != (data.d,) or M1.shape != (data.d,):
        raise DimensionError("eta and M1 must be d-vectors")
    acc = _CompensatedSum()
    for Xc, wc in _chunks(data, chunk_size):
        acc.add((Xc * (wc * (Xc @ eta))[:, None]).T @ Xc)
    S = acc.value()
    S -= np.outer(M1, eta) + np.outer(eta, M1) + (M1 @ eta) * np.eye(data.d)
    return 0.5 * (S + S.T)


def contracted_third_moment(
    data: SampleSet, R: NDArray, correction: NDArray, chunk_size: int = DEFAULT_CHUNK
) -> NDArray:
    """``E[y (x) y (x) y] - sum_i (c (x) g_i (x) g_i + perms)`` for ``y = R^T x``.

    ``g_i = R^T e_i`` and ``c = R^T correction``. The correction sum collapses
    to outer products with ``G = R^T R``, so the cost is O(n r^3 + d r^2).
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != data.d:
        raise DimensionError(f"R must have {data.d} rows, got shape {R.shape}")
    r = R.shape[1]
    acc = _CompensatedSum()
    for Xc, wc in _chunks(data, chunk_size):
        Y = Xc @ R
        WY = Y * wc[:, None]
        part = np.empty((r, r, r))
        for a in range(r):
            part[a] = (WY * Y[:, a : a + 1]).T @ Y
        acc.add(part)
    T = acc.value()
    c = R.T @ np.asarray(correction, dtype=float)
    G = R.T @ R
    T -= (
        np.einsum("a,bc->abc", c, G)
        + np.einsum("b,ac->abc", c, G)
        + np.einsum("c,ab->abc", c, G)
    )
    return symmetrize3(T, average=True)


def whitened_third_moment(
    data2: SampleSet, W: NDArray, sigma2_hat: float, chunk_size: int = DEFAULT_CHUNK
) -> WhitenedTensor:
    """Whitened third moment with the common-variance noise correction.

    ``data2`` must be the second half of the sample (independent of the one
    that produced ``W`` and ``sigma2_hat``).
    """
    if data2.split == "first":
        raise ParameterError("whitened_third_moment needs the second half-sample")
    mean2 = weighted_mean(data2, chunk_size)
    return WhitenedTensor(
        contracted_third_moment(data2, W, sigma2_hat * mean2, chunk_size)
    )


def empirical_moments(
    data: SampleSet, k: int, chunk_size: int = DEFAULT_CHUNK
) -> PopulationMoments:
    """Plug-in analogue of :func:`smog.model.population_moments`."""
    summary = summarize(data, k, chunk_size)
    v = noise_eigvec(summary)
    M1 = estimate_M1(data, v, summary.mu_hat, chunk_size)
    M2 = summary.raw2 - summary.sigma2_hat * np.eye(data.d)

    def M3_slice(eta):
        return m3_eta_slice(data, eta, M1, chunk_size)

    def M3_contracted(R):
        return contracted_third_moment(data, R, M1, chunk_size)

    return PopulationMoments(summary.mu_hat, M1, M2, summary.sigma2_hat, M3_slice, M3_contracted)
