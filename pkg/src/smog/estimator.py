"""Spectral estimators for mixtures of spherical Gaussians.

Two pipelines:

* :func:`estimate_spherical_exact` diagonalizes ``M2^{+1/2} M3(eta) M2^{+1/2}``
  and recovers means, weights and per-component variances. It runs on exact
  population moments or on plug-in empirical ones.
* :func:`learn_gmm_common` is the sample-split algorithm for a common
  spherical covariance: whiten with the first half, build the whitened third
  moment from the second half, try several random contractions and keep the
  one with the widest eigenvalue separation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import (
    DegeneracyError,
    DimensionError,
    EtaCollisionError,
    IllConditionedTrialError,
    ParameterError,
)
from .linalg import pseudo_inverse, rank_k_approx, sym_eig, top_k_by_magnitude
from .model import MixtureModel, PopulationMoments, SampleSet
from .moments import (
    DEFAULT_CHUNK,
    MomentSummary,
    WhitenedTensor,
    empirical_moments,
    summarize,
    whitened_third_moment,
)
from .seeding import make_rng, unit_vector

RANK_RTOL = 1e-10
THETA_DOT_TOL = 1e-12
ETA_COLLISION_RTOL = 1e-8
MAX_ETA_ATTEMPTS = 16
EXHAUSTIVE_MATCH_MAX_K = 8


def gamma_threshold(k: int, w_max: float) -> float:
    """Separation level a uniformly random theta exceeds with probability >= 1/2."""
    if k < 1:
        raise ParameterError("k must be at least 1")
    if not 0 < w_max <= 1:
        raise ParameterError("w_max must lie in (0, 1]")
    return 1.0 / (2.0 * math.sqrt(w_max) * math.sqrt(math.e * k) * math.comb(k + 1, 2))


def trials_for_delta(delta: float) -> int:
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    return max(1, math.ceil(math.log2(1.0 / delta)))


@dataclass(frozen=True)
class WhiteningState:
    U_hat: NDArray
    M2_hat: NDArray
    W_hat: NDArray
    B_hat: NDArray
    sigma_k: float


def whitening_from_matrix(M2: NDArray, k: int) -> WhiteningState:
    """Rank-k truncation of ``M2`` and its whitening / un-whitening maps.

    The k x k core ``U^T M2_hat U`` is square-rooted through eigenvalue
    magnitudes; fewer than k magnitudes above ``1e-10 * sigma_1`` is an error.
    """
    vals, U = top_k_by_magnitude(M2, k)
    mags = np.abs(vals)
    sigma_k = float(mags[-1])
    if mags[0] == 0 or sigma_k <= RANK_RTOL * mags[0]:
        raise DegeneracyError(
            f"M2 estimate is rank deficient: sigma_k[M2_hat]={sigma_k:.3e}", sigma_k=sigma_k
        )
    M2_hat = rank_k_approx(M2, k)
    core = U.T @ M2_hat @ U
    cvals, cvecs = sym_eig(0.5 * (core + core.T))
    cmag = np.abs(cvals)
    root = (cvecs * np.sqrt(cmag)) @ cvecs.T
    inv_root = (cvecs / np.sqrt(cmag)) @ cvecs.T
    return WhiteningState(U, M2_hat, U @ inv_root, U @ root, sigma_k)


def build_whitening(summary: MomentSummary, k: int) -> WhiteningState:
    d = summary.raw2.shape[0]
    return whitening_from_matrix(summary.raw2 - summary.sigma2_hat * np.eye(d), k)


@dataclass(frozen=True)
class TrialResult:
    theta: NDArray
    eigenvalues: NDArray
    eigenvectors: NDArray
    min_gap: float

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "min_gap": self.min_gap,
        }


def min_gap(eigenvalues: NDArray) -> float:
    """Smallest of all pairwise distances and all magnitudes."""
    lam = np.asarray(eigenvalues, dtype=float)
    gaps = list(np.abs(lam))
    for i, j in itertools.combinations(range(lam.size), 2):
        gaps.append(abs(lam[i] - lam[j]))
    return float(min(gaps))


def run_trials(T_hat: WhitenedTensor, t: int, seed: int) -> tuple[list[TrialResult], int]:
    """Eigendecompose ``T_hat[theta]`` for t random unit thetas.

    Returns all trials and the index with the largest ``min_gap`` (lowest
    index on ties). Trial i draws theta from its own labeled stream.
    """
    if t < 1:
        raise ParameterError("need at least one trial")
    trials = []
    for i in range(t):
        theta = unit_vector(make_rng(seed, "theta", i), T_hat.k)
        vals, vecs = sym_eig(T_hat.contract(theta))
        trials.append(TrialResult(theta, vals, vecs, min_gap(vals)))
    chosen = max(range(t), key=lambda i: (trials[i].min_gap, -i))
    return trials, chosen


@dataclass
class EstimateReport:
    means_hat: NDArray
    weights_hat: NDArray
    sigma2_hat: object
    trials: list = field(default_factory=list)
    chosen_trial: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        s2 = self.sigma2_hat
        return {
            "d": int(self.means_hat.shape[0]),
            "k": int(self.means_hat.shape[1]),
            "means": self.means_hat.T.tolist(),
            "weights": self.weights_hat.tolist(),
            "sigma2": s2.tolist() if isinstance(s2, np.ndarray) else s2,
            "trials": [t.to_dict() for t in self.trials],
            "chosen_trial": self.chosen_trial,
            "diagnostics": self.diagnostics,
        }


def recover_parameters(
    state: WhiteningState, trial: TrialResult, mu_hat: NDArray
) -> EstimateReport:
    """Un-whiten the chosen trial's eigenvectors into means, then solve for weights."""
    dots = trial.eigenvectors.T @ trial.theta
    if np.any(np.abs(dots) < THETA_DOT_TOL):
        raise IllConditionedTrialError(
            f"theta nearly orthogonal to an eigenvector (min |theta^T v|={np.abs(dots).min():.3e})"
        )
    scale = trial.eigenvalues / dots
    means = (state.B_hat @ trial.eigenvectors) * scale
    weights = pseudo_inverse(means) @ np.asarray(mu_hat, dtype=float)
    return EstimateReport(means, weights, None, [trial], 0)


def _gamma_diag(k: int, weights: NDArray) -> float:
    w_max = float(np.clip(np.max(weights), np.finfo(float).tiny, 1.0))
    return gamma_threshold(k, w_max)


def learn_gmm_halves(
    first: SampleSet,
    second: SampleSet,
    k: int,
    delta: float = 0.01,
    seed: int = 0,
    n_trials: Optional[int] = None,
    chunk_size: int = DEFAULT_CHUNK,
) -> EstimateReport:
    """The common-covariance algorithm on an explicit (first, second) split."""
    if first.d != second.d:
        raise DimensionError("half-samples have different dimensions")
    if not 1 <= k <= first.d:
        raise ParameterError(f"k={k} must satisfy 1 <= k <= d={first.d}")
    t = trials_for_delta(delta) if n_trials is None else int(n_trials)
    summary = summarize(first, k, chunk_size)
    state = build_whitening(summary, k)
    T_hat = whitened_third_moment(second, state.W_hat, summary.sigma2_hat, chunk_size)
    trials, chosen = run_trials(T_hat, t, seed)
    report = recover_parameters(state, trials[chosen], summary.mu_hat)
    report.sigma2_hat = summary.sigma2_hat
    report.trials = trials
    report.chosen_trial = chosen
    report.diagnostics = {
        "sigma_k_M2_hat": state.sigma_k,
        "gamma": _gamma_diag(k, report.weights_hat),
        "n_used": first.n + second.n,
        "n_trials": t,
    }
    return report


def learn_gmm_common(
    data: SampleSet,
    k: int,
    delta: float = 0.01,
    seed: int = 0,
    n_trials: Optional[int] = None,
    chunk_size: int = DEFAULT_CHUNK,
) -> EstimateReport:
    """Estimate a common-covariance spherical mixture from samples.

    Uses ``ceil(log2(1/delta))`` random trials unless ``n_trials`` is given.
    """
    if data.d < k:
        raise ParameterError(f"need d >= k (d={data.d}, k={k})")
    if data.n < 2 * k or data.n < 4:
        raise ParameterError(f"need n >= 2k samples (n={data.n}, k={k})")
    first, second = data.halves()
    return learn_gmm_halves(first, second, k, delta, seed, n_trials, chunk_size)


def _infer_rank(M2: NDArray) -> int:
    vals = np.abs(sym_eig(M2).eigenvalues)
    return int(np.sum(vals > RANK_RTOL * vals.max())) if vals.max() > 0 else 0


def estimate_spherical_exact(
    pm: PopulationMoments, eta: NDArray, k: Optional[int] = None
) -> EstimateReport:
    """Recover means, weights and per-component variances from ``pm``.

    ``k`` defaults to the numerical rank of ``pm.M2`` (right for exact
    moments; pass it explicitly for plug-in moments). Raises
    :class:`EtaCollisionError` when the projections ``eta^T mu_i`` are not
    distinct and non-zero.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (pm.d,):
        raise DimensionError("eta must be a d-vector")
    if k is None:
        k = _infer_rank(pm.M2)
    vals, U = top_k_by_magnitude(pm.M2, k)
    mags = np.abs(vals)
    if mags[-1] <= RANK_RTOL * mags[0]:
        raise DegeneracyError(f"sigma_k[M2]={mags[-1]:.3e} is zero", sigma_k=float(mags[-1]))
    S = np.sqrt(mags)
    Mk = (U.T @ pm.M3_slice(eta) @ U) / np.outer(S, S)
    lam, V = sym_eig(0.5 * (Mk + Mk.T))
    scale = np.max(np.abs(lam))
    if scale == 0 or min_gap(lam) <= ETA_COLLISION_RTOL * scale:
        raise EtaCollisionError("eta^T mu_i not distinct and non-zero; re-draw eta")
    B = U @ (V * S[:, None])
    means = B * (lam / (eta @ B))
    Apinv = pseudo_inverse(means)
    weights = Apinv @ pm.mean
    sigma2 = (Apinv @ pm.M1) / weights
    report = EstimateReport(means, weights, sigma2)
    report.diagnostics = {
        "sigma_k_M2_hat": float(mags[-1]),
        "eigenvalues": lam.tolist(),
        "negative_variances": [int(i) for i in np.flatnonzero(sigma2 < 0)],
        "gamma": _gamma_diag(k, weights),
    }
    return report


def estimate_spherical(
    pm: PopulationMoments, k: Optional[int] = None, seed: int = 0,
    max_attempts: int = MAX_ETA_ATTEMPTS,
) -> EstimateReport:
    """:func:`estimate_spherical_exact` with random eta, re-drawn on collision."""
    last = None
    for attempt in range(max_attempts):
        eta = unit_vector(make_rng(seed, "eta", attempt), pm.d)
        try:
            report = estimate_spherical_exact(pm, eta, k)
        except EtaCollisionError as exc:
            last = exc
            continue
        report.diagnostics["eta_attempts"] = attempt + 1
        report.diagnostics["eta"] = eta.tolist()
        return report
    raise EtaCollisionError(f"eta collided in {max_attempts} attempts: {last}")


def estimate_spherical_plugin(
    data: SampleSet, k: int, seed: int = 0, chunk_size: int = DEFAULT_CHUNK
) -> EstimateReport:
    """Plug-in version on empirical moments; recovers per-component variances."""
    if data.d < k:
        raise ParameterError(f"need d >= k (d={data.d}, k={k})")
    report = estimate_spherical(empirical_moments(data, k, chunk_size), k, seed)
    report.diagnostics["n_used"] = data.n
    return report


def _bottleneck_assignment(cost: NDArray) -> NDArray:
    """Permutation minimizing the max cost, then the total cost among those."""
    k = cost.shape[0]
    levels = np.unique(cost)
    lo, hi = 0, levels.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        graph = csr_matrix((cost <= levels[mid]).astype(np.int8))
        if np.all(maximum_bipartite_matching(graph, perm_type="column") >= 0):
            hi = mid
        else:
            lo = mid + 1
    big = cost.sum() + 1.0
    masked = np.where(cost <= levels[lo], cost, big)
    rows, cols = linear_sum_assignment(masked)
    perm = np.empty(k, dtype=int)
    perm[rows] = cols
    return perm


def match_columns(estimate: NDArray, truth: NDArray, exhaustive: Optional[bool] = None) -> NDArray:
    """``perm[i]`` = estimate column matched to truth column i (min-max l2 error)."""
    k = truth.shape[1]
    cost = np.linalg.norm(truth[:, :, None] - estimate[:, None, :], axis=0)
    if exhaustive is None:
        exhaustive = k <= EXHAUSTIVE_MATCH_MAX_K
    if not exhaustive:
        return _bottleneck_assignment(cost)
    best, best_key = None, None
    rows = np.arange(k)
    for perm in itertools.permutations(range(k)):
        c = cost[rows, list(perm)]
        key = (c.max(), c.sum())
        if best_key is None or key < best_key:
            best, best_key = perm, key
    return np.array(best)


def match_and_score(estimate: NDArray, truth: MixtureModel, exhaustive: Optional[bool] = None) -> dict:
    """Permutation-matched per-component errors and the relative max error.

    ``max_rel`` divides each error by ``||mu_i|| + sqrt(sigma_1[M2])``.
    """
    estimate = np.asarray(estimate, dtype=float)
    if estimate.shape != truth.means.shape:
        raise DimensionError(
            f"estimate shape {estimate.shape} does not match truth {truth.means.shape}"
        )
    perm = match_columns(estimate, truth.means, exhaustive)
    err = np.linalg.norm(estimate[:, perm] - truth.means, axis=0)
    M2 = (truth.means * truth.weights) @ truth.means.T
    s1 = float(np.linalg.norm(M2, 2))
    unit = np.linalg.norm(truth.means, axis=0) + math.sqrt(s1)
    return {
        "permutation": [int(p) for p in perm],
        "per_component_l2": err.tolist(),
        "max_rel": float(np.max(err / unit)),
    }
