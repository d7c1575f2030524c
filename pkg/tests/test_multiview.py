import math

import numpy as np
import pytest
from scipy.stats import chisquare

from smog.errors import ParameterError, RankError
from smog.multiview import (
    coherence,
    coherence_bound,
    partition_and_check,
    random_partition,
    random_rotation,
)


def partition_coherence_limit(eps, k, delta):
    """Largest coherence for which the three-way partition guarantee applies."""
    return (eps**2 / 6) / math.log(3 * k / delta)


class TestCoherence:
    def test_coordinate_axes(self):
        assert coherence(np.eye(6)[:, :3]) == pytest.approx(1.0, abs=1e-12)

    def test_hadamard_minimum(self):
        A = np.array([[1, 1], [1, -1], [1, 1], [1, -1]]) / 2.0
        assert coherence(A) == pytest.approx(0.5, abs=1e-12)

    def test_invariant_to_column_mixing(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((7, 3))
        R = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        assert coherence(A @ R) == pytest.approx(coherence(A), abs=1e-12)

    def test_range(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            d = int(rng.integers(2, 15))
            k = int(rng.integers(1, d + 1))
            c = coherence(rng.standard_normal((d, k)))
            assert k / d - 1e-12 <= c <= 1 + 1e-12

    def test_rank_deficient(self):
        with pytest.raises(RankError):
            coherence(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]))


class TestRotation:
    def test_d1(self):
        assert random_rotation(1, 3)[0, 0] in (-1.0, 1.0)

    @pytest.mark.parametrize("d", [2, 5, 17, 40])
    def test_orthogonal_special(self, d):
        Q = random_rotation(d, d)
        assert np.linalg.norm(Q.T @ Q - np.eye(d), 2) <= 1e-12
        assert np.linalg.det(Q) == pytest.approx(1.0, abs=1e-10)

    def test_coherence_bound_d20(self):
        A = np.random.default_rng(2).standard_normal((20, 5))
        bound = coherence_bound(20, 5, 0.01)
        hits = sum(coherence(random_rotation(20, s) @ A) <= bound for s in range(1000))
        assert hits >= 990

    def test_haar_first_column_moments(self):
        # Under Haar measure each entry of a column has mean 0 and variance 1/d.
        d = 4
        col = np.array([random_rotation(d, s)[:, 1] for s in range(4000)])
        assert np.abs(col.mean(0)).max() < 0.05
        np.testing.assert_allclose((col**2).mean(0), 1 / d, atol=0.02)


class TestPartition:
    def test_identity_k1(self):
        # Only the group that receives row 0 sees a non-zero row of A.
        A = np.eye(3)[:, :1]
        out = partition_and_check(A, 4)
        owner = next(t for t, g in enumerate(out["partition"].groups) if 0 in g)
        for t in range(3):
            assert (out["sigma_k_per_group"][t] > 0) == (t == owner)
        assert not out["all_full_rank"]

    def test_deterministic(self):
        p, q = random_partition(30, 5), random_partition(30, 5)
        for g, h in zip(p.groups, q.groups):
            np.testing.assert_array_equal(g, h)
        assert sum(p.sizes) == 30

    def test_needs_three_coordinates(self):
        with pytest.raises(ParameterError):
            partition_and_check(np.ones((2, 1)), 0)

    def test_group_sizes_multinomial(self):
        d = 6
        counts = np.zeros(3)
        for s in range(10_000):
            counts += random_partition(d, s).sizes
        assert chisquare(counts).pvalue > 0.001

    def test_singular_value_bound_low_coherence(self):
        # d=4000, k=2: coherence ~0.009 lies under the (eps=0.5, delta=0.1) limit.
        d, k, eps, delta = 4000, 2, 0.5, 0.1
        A, _ = np.linalg.qr(np.random.default_rng(6).standard_normal((d, k)))
        assert coherence(A) <= partition_coherence_limit(eps, k, delta)
        sk = np.linalg.svd(A, compute_uv=False)[k - 1]
        good = 0
        for s in range(200):
            out = partition_and_check(A, s)
            good += out["all_full_rank"] and min(out["sigma_k_per_group"]) >= math.sqrt((1 - eps) / 3) * sk
        assert good >= 180

    @pytest.mark.xfail(
        strict=True,
        reason="d=60, k=4 has coherence >= k/d = 0.067, far above the ~0.01 the "
        "singular-value guarantee needs at eps=0.5; the bound then fails often",
    )
    def test_d60_k4_singular_value_bound(self):
        d, k, eps = 60, 4, 0.5
        good = 0
        for s in range(200):
            A = random_rotation(d, 1000 + s)[:, :k]
            out = partition_and_check(A, s)
            good += out["all_full_rank"] and min(out["sigma_k_per_group"]) >= math.sqrt((1 - eps) / 3)
        assert good >= 180

    def test_d60_k4_full_rank(self):
        hits = sum(
            partition_and_check(random_rotation(60, 1000 + s)[:, :4], s)["all_full_rank"]
            for s in range(200)
        )
        assert hits >= 180
