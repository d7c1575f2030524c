import numpy as np
import pytest

from smog.model import MixtureModel


def random_model(rng, d, k, common=False, sigma2_range=(0.5, 2.0)):
    """Random well-posed mixture: Gaussian means, weights bounded away from 0."""
    A = rng.standard_normal((d, k)) * 2.0
    w = 1.0 + rng.random(k)
    w /= w.sum()
    if common:
        var = np.full(k, rng.uniform(*sigma2_range))
    else:
        var = rng.uniform(*sigma2_range, size=k)
    return MixtureModel(w, A, var)


def random_model_family(seed, count, common=False):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        d = int(rng.integers(2, 13))
        k = int(rng.integers(1, min(d, 6) + 1))
        out.append(random_model(rng, d, k, common=common))
    return out


@pytest.fixture
def two_comp():
    """mu_1 = e1, mu_2 = e2 in R^3, equal weights, variances (1, 3)."""
    return MixtureModel([0.5, 0.5], np.eye(3)[:, :2], [1.0, 3.0])
