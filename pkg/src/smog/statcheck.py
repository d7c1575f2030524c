"""Monte Carlo checks of Gaussian tail and anti-concentration inequalities.

Each checker simulates the statistic ``trials`` times and counts how often it
lands on the wrong side of the bound's threshold. The bounds guarantee a
violation probability of at most ``delta``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionError, ParameterError
from .seeding import make_rng

MIN_TRIALS = 100


@dataclass(frozen=True)
class TailCheckResult:
    trials: int
    violations: int
    bound_delta: float
    threshold: float
    vacuous: bool = False

    @property
    def violation_rate(self) -> float:
        return self.violations / self.trials

    def slack(self) -> float:
        """Binomial sampling slack ``3 sqrt(delta (1 - delta) / trials)``."""
        d = self.bound_delta
        return 3.0 * math.sqrt(d * (1.0 - d) / self.trials)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["violation_rate"] = self.violation_rate
        return out


def _check(delta: float, trials: int):
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    if trials < MIN_TRIALS:
        raise ParameterError(f"need at least {MIN_TRIALS} trials")


def chi2_threshold(m: int, delta: float) -> float:
    L = math.log(1.0 / delta)
    return m + 2.0 * math.sqrt(m * L) + 2.0 * L


def cubes_threshold(m: int, delta: float) -> float:
    return math.sqrt(27.0 * math.e**3 * m * math.ceil(math.log(1.0 / delta)) ** 3)


def _batched(trials: int, m: int, batch_elems: int = 1 << 22):
    step = max(1, batch_elems // max(m, 1))
    for start in range(0, trials, step):
        yield min(step, trials - start)


def mc_tail_chi2(m: int, delta: float, trials: int, seed: int) -> TailCheckResult:
    """Exceedances of ``sum z_i^2 > m + 2 sqrt(m ln(1/delta)) + 2 ln(1/delta)``."""
    _check(delta, trials)
    if m < 1:
        raise ParameterError("m must be at least 1")
    thr = chi2_threshold(m, delta)
    rng = make_rng(seed, "chi2")
    hits = 0
    for b in _batched(trials, m):
        z = rng.standard_normal((b, m))
        hits += int(np.count_nonzero(np.sum(z * z, axis=1) > thr))
    return TailCheckResult(trials, hits, delta, thr)


def mc_tail_cubes(m: int, delta: float, trials: int, seed: int) -> TailCheckResult:
    """Exceedances of ``|sum z_i^3| > sqrt(27 e^3 m ceil(ln(1/delta))^3)``."""
    _check(delta, trials)
    if m < 1:
        raise ParameterError("m must be at least 1")
    thr = cubes_threshold(m, delta)
    rng = make_rng(seed, "cubes")
    hits = 0
    for b in _batched(trials, m):
        z = rng.standard_normal((b, m))
        hits += int(np.count_nonzero(np.abs(np.sum(z**3, axis=1)) > thr))
    return TailCheckResult(trials, hits, delta, thr)


def anticoncentration_threshold(X: NDArray, Q: NDArray, delta: float) -> float:
    p = X.shape[0]
    norms = np.linalg.norm(X @ Q, axis=0)
    return float(norms.min() * delta / (math.sqrt(math.e * p) * Q.shape[1]))


def mc_anticoncentration(X: NDArray, Q, delta: float, trials: int, seed: int) -> TailCheckResult:
    """Trials where ``min_q |theta^T X q|`` falls to or below the bound's level.

    ``Q`` is a p x |Q| array of column vectors (or a sequence of p-vectors).
    A zero threshold makes the bound vacuous; the result is flagged.
    """
    _check(delta, trials)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionError("X must be square")
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 1:
        Q = Q[:, None]
    elif Q.shape[0] != X.shape[0]:
        Q = Q.T
    if Q.size == 0 or Q.shape[0] != X.shape[0]:
        raise DimensionError("Q must be a non-empty set of p-vectors")
    p = X.shape[0]
    thr = anticoncentration_threshold(X, Q, delta)
    XQ = X @ Q
    rng = make_rng(seed, "anticonc")
    hits = 0
    for b in _batched(trials, p):
        theta = rng.standard_normal((b, p))
        theta /= np.linalg.norm(theta, axis=1, keepdims=True)
        hits += int(np.count_nonzero(np.min(np.abs(theta @ XQ), axis=1) <= thr))
    return TailCheckResult(trials, hits, delta, thr, vacuous=thr == 0.0)


# The two checks below involve covering-number constants; they are loose by
# design and only checked directionally (rate <= delta) at small p.


def opnorm_threshold(p: int, m: int, delta: float, eps0: float = 0.25) -> float:
    L = math.log((1.0 + 2.0 / eps0) ** p / delta)
    return (math.sqrt(32.0 * L / m) + 2.0 * L / m) / (1.0 - 2.0 * eps0)


def mc_tail_opnorm(
    p: int, m: int, delta: float, trials: int, seed: int, eps0: float = 0.25
) -> TailCheckResult:
    """Exceedances of ``||(1/m) sum y y^T - I||_2`` for standard normal y in R^p."""
    _check(delta, trials)
    if not 0 < eps0 < 0.5:
        raise ParameterError("eps0 must lie in (0, 1/2)")
    thr = opnorm_threshold(p, m, delta, eps0)
    rng = make_rng(seed, "opnorm")
    hits = 0
    for _ in range(trials):
        Y = rng.standard_normal((m, p))
        dev = Y.T @ Y / m - np.eye(p)
        hits += bool(np.max(np.abs(np.linalg.eigvalsh(dev))) > thr)
    return TailCheckResult(trials, hits, delta, thr)


def tensor_threshold(p: int, m: int, delta: float, eps0: float = 0.2) -> float:
    L = math.ceil(math.log((1.0 + 2.0 / eps0) ** p / delta))
    return math.sqrt(27.0 * math.e**3 * L**3 / m) / (1.0 - 3.0 * eps0)


def symmetric_tensor_norm(Y: NDArray, restarts: int = 8, iters: int = 100, seed: int = 0) -> float:
    """``sup_u |Y[u,u,u]|`` by multi-start power iteration (a lower estimate)."""
    p = Y.shape[0]
    rng = make_rng(seed, "tensor-norm")
    best = 0.0
    for _ in range(restarts):
        u = rng.standard_normal(p)
        u /= np.linalg.norm(u)
        for _ in range(iters):
            g = np.einsum("abc,b,c->a", Y, u, u)
            nrm = np.linalg.norm(g)
            if nrm == 0:
                break
            u = g / nrm
        best = max(best, abs(float(np.einsum("abc,a,b,c->", Y, u, u, u))))
    return best


def mc_tail_tensor(
    p: int, m: int, delta: float, trials: int, seed: int, eps0: float = 0.2
) -> TailCheckResult:
    """Exceedances of the norm of ``(1/m) sum y (x) y (x) y`` for standard normal y."""
    _check(delta, trials)
    if not 0 < eps0 < 1 / 3:
        raise ParameterError("eps0 must lie in (0, 1/3)")
    thr = tensor_threshold(p, m, delta, eps0)
    rng = make_rng(seed, "tensor")
    hits = 0
    for t in range(trials):
        Y = rng.standard_normal((m, p))
        T = np.einsum("ia,ib,ic->abc", Y, Y, Y) / m
        hits += symmetric_tensor_norm(T, seed=t) > thr
    return TailCheckResult(trials, int(hits), delta, thr)
