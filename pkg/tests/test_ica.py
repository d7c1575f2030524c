import math

import numpy as np
import pytest

from smog.errors import DimensionError, KurtosisDegeneracyError
from smog.ica import (
    angular_errors,
    cumulant_f,
    cumulant_hessian,
    ica_estimate,
    ica_estimate_exact,
    normalize_columns,
    population_hessian,
    rademacher_exact_sampleset,
    rademacher_sources,
)
from smog.model import SampleSet
from smog.multiview import random_rotation


def column_distance(est, truth):
    """Largest l2 gap between matched unit columns after sign alignment."""
    perm, _ = angular_errors(est, truth)
    E, T = normalize_columns(est)[:, perm], normalize_columns(truth)
    E = E * np.sign(np.sum(E * T, axis=0))
    return np.linalg.norm(E - T, axis=0).max()


def rot2(deg):
    t = math.radians(deg)
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


class TestHessian:
    def test_rademacher_identity(self):
        s = rademacher_exact_sampleset(np.eye(3))
        eta = np.array([0.5, -1.0, 2.0])
        np.testing.assert_allclose(cumulant_hessian(s, eta).H, -2 * np.diag(eta**2), atol=1e-12)

    def test_rademacher_mixed_matches_population(self):
        A = random_rotation(3, 4) @ np.diag([1.0, 2.0, 0.5])
        s = rademacher_exact_sampleset(A)
        eta = np.array([0.3, 0.1, -0.7])
        np.testing.assert_allclose(
            cumulant_hessian(s, eta).H, population_hessian(A, [-2, -2, -2], eta), atol=1e-12
        )

    def test_f_closed_form(self):
        s = rademacher_exact_sampleset(np.eye(2))
        eta = np.array([0.4, -1.1])
        assert cumulant_f(s, eta) == pytest.approx(-np.sum(eta**4) / 6, rel=1e-13)

    def test_gaussian_vanishes(self):
        X = np.random.default_rng(0).standard_normal((1_000_000, 3))
        eta = np.array([0.6, 0.0, 0.8])
        assert np.abs(cumulant_hessian(SampleSet(X), eta).H).max() <= 0.05

    def test_zero_eta(self):
        X = np.random.default_rng(1).standard_normal((100, 3))
        np.testing.assert_array_equal(cumulant_hessian(SampleSet(X), np.zeros(3)).H, np.zeros((3, 3)))

    def test_symmetric(self):
        X = np.random.default_rng(2).exponential(size=(500, 4))
        H = cumulant_hessian(SampleSet(X), np.ones(4) / 2).H
        assert np.abs(H - H.T).max() <= 1e-10 * np.abs(H).max()

    def test_dimension(self):
        with pytest.raises(DimensionError):
            cumulant_hessian(SampleSet(np.zeros((5, 3))), np.ones(2))


class TestEstimate:
    def test_identity_exact(self):
        out = ica_estimate(rademacher_exact_sampleset(np.eye(3)), seed=0)
        assert column_distance(out["columns"], np.eye(3)) <= 1e-8

    def test_eigenvalue_ratios(self):
        A = random_rotation(3, 5)
        out = ica_estimate_exact(A, np.full(3, -2.0), seed=3)
        perm, _ = angular_errors(out["columns"], A)
        ratio = (out["phi"] @ A) ** 2 / (out["psi"] @ A) ** 2
        np.testing.assert_allclose(out["eigenvalues"][perm], ratio, rtol=1e-8)

    def test_rotation_30_degrees(self):
        A = rot2(30)
        X = rademacher_sources(1_000_000, 2, 7) @ A.T
        out = ica_estimate(SampleSet(X), seed=7)
        _, ang = angular_errors(out["columns"], A)
        assert ang.max() <= 0.05

    def test_gaussian_sources_degenerate(self):
        X = np.random.default_rng(3).standard_normal((200_000, 2))
        with pytest.raises(KurtosisDegeneracyError):
            ica_estimate(SampleSet(X), seed=0)

    def test_exact_hessian_degenerate(self):
        with pytest.raises(KurtosisDegeneracyError):
            ica_estimate_exact(np.eye(2), np.zeros(2))

    def test_rescaling_invariance(self):
        A = random_rotation(3, 6)
        X = rademacher_sources(20_000, 3, 1) @ A.T
        a = ica_estimate(SampleSet(X), seed=2)
        b = ica_estimate(SampleSet(3.0 * X), seed=2)
        np.testing.assert_allclose(a["eigenvalues"], b["eigenvalues"], rtol=1e-9)

    def test_permuting_sources(self):
        A = random_rotation(3, 8)
        exact = ica_estimate_exact(A, np.full(3, -2.0), seed=1)["columns"]
        permuted = ica_estimate_exact(A[:, [2, 0, 1]], np.full(3, -2.0), seed=1)["columns"]
        assert column_distance(permuted, exact) <= 1e-8


def test_normalize_columns():
    V = normalize_columns(np.array([[0.0, -3.0], [-2.0, 4.0]]))
    np.testing.assert_allclose(V, [[0.0, 0.6], [1.0, -0.8]])


def test_angular_errors_sign_and_perm():
    T = random_rotation(3, 9)
    perm, ang = angular_errors(-T[:, [1, 2, 0]], T)
    np.testing.assert_array_equal(perm, [2, 0, 1])
    assert ang.max() <= 1e-7
