"""Coherence, Haar rotations and random three-way coordinate partitions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ParameterError, RankError
from .seeding import make_rng

RANK_RTOL = 1e-10


def _orthonormal_range(A: NDArray) -> NDArray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ParameterError("expected a matrix")
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0 or s[-1] <= RANK_RTOL * s[0] or A.shape[1] > A.shape[0]:
        raise RankError("matrix does not have full column rank")
    return U


def coherence(A: NDArray) -> float:
    """Largest diagonal entry of the orthogonal projector onto range(A)."""
    U = _orthonormal_range(A)
    return float(np.max(np.sum(U * U, axis=1)))


def coherence_bound(d: int, k: int, eta: float) -> float:
    """Upper bound on coherence(Q A) holding w.p. >= 1 - eta for Haar Q."""
    L = math.log(d / eta)
    return (k + math.sqrt(2 * k * L) + 2 * L) / (d * (1 - 1 / (4 * d) - 1 / (360 * d**3)) ** 2)


def random_rotation(d: int, seed: int) -> NDArray:
    """Haar-distributed element of SO(d).

    QR of a Gaussian matrix with R's diagonal made positive gives Haar O(d);
    flipping the first column when det = -1 maps that onto Haar SO(d).
    """
    if d < 1:
        raise ParameterError("d must be at least 1")
    G = make_rng(seed, "rotation").standard_normal((d, d))
    Q, R = np.linalg.qr(G)
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


@dataclass(frozen=True)
class Partition3:
    groups: tuple

    def __post_init__(self):
        flat = np.concatenate([np.asarray(g, dtype=int) for g in self.groups])
        if len(self.groups) != 3 or flat.size != np.unique(flat).size:
            raise ParameterError("need three disjoint groups")

    @property
    def sizes(self) -> tuple:
        return tuple(len(g) for g in self.groups)


def random_partition(d: int, seed: int) -> Partition3:
    labels = make_rng(seed, "partition").integers(0, 3, size=d)
    return Partition3(tuple(np.flatnonzero(labels == t) for t in range(3)))


def partition_and_check(A: NDArray, seed: int) -> dict:
    """Randomly split the rows of A into three views and check each has rank k.

    Empty or short groups get ``sigma_k = 0`` rather than raising.
    """
    A = np.asarray(A, dtype=float)
    d, k = A.shape
    if d < 3:
        raise ParameterError("need d >= 3 for a three-way partition")
    part = random_partition(d, seed)
    s1 = float(np.linalg.norm(A, 2))
    sig = []
    for g in part.groups:
        if len(g) < k:
            sig.append(0.0)
            continue
        sig.append(float(np.linalg.svd(A[g], compute_uv=False)[k - 1]))
    return {
        "partition": part,
        "sigma_k_per_group": sig,
        "all_full_rank": bool(s1 > 0 and all(s > RANK_RTOL * s1 for s in sig)),
    }


def partition_sweep(d_values, k: int, seeds: int, root_seed: int = 0) -> dict:
    """Full-rank frequency of random partitions of a rotated rank-k matrix, per d.

    Exploratory only: how large must d be relative to k?
    """
    out = {}
    for d in d_values:
        hits = 0
        for s in range(seeds):
            A = random_rotation(d, root_seed * 1_000_003 + s)[:, :k]
            hits += partition_and_check(A, s)["all_full_rank"]
        out[int(d)] = hits / seeds
    return out
