"""Spherical Gaussian mixture models: parameters, sampling, exact moments."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionError, ParameterError
from .linalg import singular_values, symmetrize3
from .seeding import make_rng

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class MixtureModel:
    """Mixture of k spherical Gaussians in R^d.

    Column ``i`` of ``means`` is the mean of component ``i``; ``variances[i]``
    is its per-coordinate variance.
    """

    weights: NDArray
    means: NDArray
    variances: NDArray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        A = np.array(self.means, dtype=float)
        if A.ndim == 1:
            A = A.reshape(-1, 1)
        var = np.array(self.variances, dtype=float).reshape(-1)
        if var.size == 1 and w.size > 1:
            var = np.full(w.size, var[0])
        if A.ndim != 2 or A.shape[1] != w.size or var.size != w.size:
            raise DimensionError(
                f"inconsistent shapes: weights {w.shape}, means {A.shape}, variances {var.shape}"
            )
        if w.size == 0:
            raise DimensionError("need at least one component")
        for arr in (w, A, var):
            if not np.all(np.isfinite(arr)):
                raise ParameterError("model parameters must be finite")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError("weights must be a probability vector")
        if np.any(var < 0):
            raise ParameterError("variances must be non-negative")
        for name, arr in (("weights", w), ("means", A), ("variances", var)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def d(self) -> int:
        return self.means.shape[0]

    @property
    def k(self) -> int:
        return self.means.shape[1]

    @property
    def common_variance(self) -> bool:
        return bool(np.all(self.variances == self.variances[0]))

    @classmethod
    def common(cls, weights, means, sigma2: float) -> "MixtureModel":
        w = np.asarray(weights, dtype=float)
        return cls(w, means, np.full(w.size, float(sigma2)))

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "k": self.k,
            "weights": self.weights.tolist(),
            "means": self.means.T.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MixtureModel":
        try:
            d, k = int(obj["d"]), int(obj["k"])
            means = np.array(obj["means"], dtype=float).reshape(k, d).T
            m = cls(obj["weights"], means, obj["variances"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ParameterError):
                raise
            raise DimensionError(f"malformed model description: {exc}") from exc
        return m

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "MixtureModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SampleSet:
    """n observations in R^d, optionally with probability weights per row.

    ``weights`` turns the set into a discrete distribution; empirical moments
    are then weighted averages. ``split`` records which half of a larger sample
    this is (``"first"``, ``"second"``) or ``None``.
    """

    X: NDArray
    weights: Optional[NDArray] = None
    split: Optional[str] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DimensionError(f"samples must be an n x d array, got shape {X.shape}")
        object.__setattr__(self, "X", X)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.size != X.shape[0]:
                raise DimensionError("one weight per sample required")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ParameterError("sample weights must be a probability vector")
            object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def halves(self) -> tuple["SampleSet", "SampleSet"]:
        """Split into first and second half (the first gets ``n // 2`` rows)."""
        if self.weights is not None:
            raise ParameterError("cannot split a weighted sample set")
        h = self.n // 2
        return SampleSet(self.X[:h], split="first"), SampleSet(self.X[h:], split="second")

    def relabel(self, split: Optional[str]) -> "SampleSet":
        return SampleSet(self.X, self.weights, split)


@dataclass(frozen=True)
class PopulationMoments:
    """Noise-corrected moments of a mixture.

    ``M3_slice(eta)`` is the third-order moment contracted with ``eta`` in its
    last index (a d x d matrix); ``M3_contracted(R)`` is ``M3[R, R, R]``.
    """

    mean: NDArray
    M1: NDArray
    M2: NDArray
    sigma_bar2: float
    M3_slice: Callable[[NDArray], NDArray] = field(repr=False)
    M3_contracted: Callable[[NDArray], NDArray] = field(repr=False)

    @property
    def d(self) -> int:
        return self.mean.size

    @property
    def raw2(self) -> NDArray:
        """E[x x^T]."""
        return self.M2 + self.sigma_bar2 * np.eye(self.d)

    @property
    def covariance(self) -> NDArray:
        return self.raw2 - np.outer(self.mean, self.mean)


def validate_model(m: MixtureModel) -> dict:
    """Check non-degeneracy: rank-k mean matrix and strictly positive weights."""
    M2 = (m.means * m.weights) @ m.means.T
    s = singular_values(M2)
    sigma_k = float(s[m.k - 1]) if m.k <= s.size else 0.0
    w_min = float(m.weights.min())
    rank_ok = bool(s[0] > 0 and sigma_k > RANK_RTOL * s[0] and w_min > 0)
    return {"rank_ok": rank_ok, "sigma_k_M2": sigma_k, "w_min": w_min}


def sample(m: MixtureModel, n: int, seed: int) -> SampleSet:
    """Draw n i.i.d. observations ``x = mu_h + sigma_h * z``.

    Component labels and Gaussian noise come from separate labeled streams.
    """
    if n < 1:
        raise ParameterError("n must be at least 1")
    h = make_rng(seed, "sample", "labels").choice(m.k, size=n, p=m.weights)
    z = make_rng(seed, "sample", "noise").standard_normal((n, m.d))
    X = m.means.T[h] + np.sqrt(m.variances)[h, None] * z
    return SampleSet(X)


def population_moments(m: MixtureModel) -> PopulationMoments:
    """Exact moments computed from the parameters (never via d^3 tensors)."""
    A, w, var = m.means, m.weights, m.variances
    mean = A @ w
    sigma_bar2 = float(w @ var)
    M1 = A @ (w * var)
    M2 = (A * w) @ A.T

    def M3_slice(eta):
        proj = np.asarray(eta, dtype=float) @ A
        return (A * (w * proj)) @ A.T

    def M3_contracted(R):
        P = np.asarray(R, dtype=float).T @ A
        return symmetrize3(np.einsum("i,ai,bi,ci->abc", w, P, P, P))

    for arr in (mean, M1, M2):
        arr.setflags(write=False)
    return PopulationMoments(mean, M1, M2, sigma_bar2, M3_slice, M3_contracted)


def moment_matched_sampleset(m: MixtureModel) -> SampleSet:
    """Weighted point set whose moments of order <= 3 equal the model's.

    Each component contributes the 2d points ``mu_i +/- sigma_i sqrt(d) e_j``
    with weight ``w_i / (2d)``: odd central moments vanish by symmetry and the
    second central moment is ``sigma_i^2 I``. Used as an exact-moment oracle
    that never touches the closed-form moment expressions.
    """
    d = m.d
    offsets = np.sqrt(d) * np.vstack([np.eye(d), -np.eye(d)])
    pts, wts = [], []
    for i in range(m.k):
        pts.append(m.means[:, i] + np.sqrt(m.variances[i]) * offsets)
        wts.append(np.full(2 * d, m.weights[i] / (2 * d)))
    wts = np.concatenate(wts)
    return SampleSet(np.vstack(pts), wts / wts.sum())
