"""Analytic and brute-force ground truths used to check the estimators.

Autocovariance models carry a geometric envelope ``|gamma(h)| <= f0_norm2 * lam**h``
(``lam`` bounds the operator norm of the Markov kernel on mean-zero functions),
which makes every infinite sum below truncatable with a rigorous tail bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaincc

from bmclt.errors import NonConvergent
from bmclt.estimators import BatchSchedule, Fixed, normal_cdf
from bmclt.samplers import (
    TOY_INNOVATION_VAR,
    TOY_RHO,
    RngStream,
    ar1_chains,
    ar1_stationary_variance,
)

TOY_SIGMA2 = 1.5
TOY_GAMMA0 = 0.5


@dataclass(frozen=True)
class AutocovModel:
    gamma: Callable[[int], float]
    lambda_bound: float
    f0_norm2: float
    name: str = ""


def toy_autocovariance(h: int) -> float:
    """Lag-h autocovariance of the toy chain, 2**-(1+h)."""
    if h < 0:
        raise ValueError(f"lag must be nonnegative, got {h}")
    return 2.0 ** -(1 + h)


def toy_model() -> AutocovModel:
    return AutocovModel(toy_autocovariance, 0.5, TOY_GAMMA0, "toy")


def ar1_model(rho: float, tau2: float) -> AutocovModel:
    g0 = ar1_stationary_variance(rho, tau2)
    return AutocovModel(lambda h: g0 * rho**h, abs(rho), g0, f"ar1(rho={rho}, tau2={tau2})")


def white_noise_model(variance: float) -> AutocovModel:
    return AutocovModel(lambda h: variance if h == 0 else 0.0, 0.0, variance, "white-noise")


class SeriesSum(NamedTuple):
    value: float
    tail_bound: float
    terms: int


def _truncation_lag(model: AutocovModel, tol: float) -> int:
    """Smallest H with 2 * f0 * lam**(H+1) / (1 - lam) < tol."""
    lam, f0 = model.lambda_bound, model.f0_norm2
    if not 0.0 <= lam < 1.0:
        raise NonConvergent(f"lambda bound {lam} is not in [0, 1)")
    if lam == 0.0 or f0 == 0.0:
        return 0
    h = max(0, math.ceil(math.log(tol * (1.0 - lam) / (2.0 * f0)) / math.log(lam)) - 1)
    while 2.0 * f0 * lam ** (h + 1) / (1.0 - lam) >= tol:
        h += 1
    while h > 0 and 2.0 * f0 * lam**h / (1.0 - lam) < tol:
        h -= 1
    return h


def _tail_bound(model: AutocovModel, h: int) -> float:
    lam = model.lambda_bound
    if lam == 0.0:
        return 0.0
    return 2.0 * model.f0_norm2 * lam ** (h + 1) / (1.0 - lam)


def sigma2_from_autocov(model: AutocovModel, tol: float = 1e-12) -> SeriesSum:
    """``gamma(0) + 2 sum_{k>=1} gamma(k)`` truncated once the geometric tail is below tol."""
    h = _truncation_lag(model, tol)
    value = math.fsum([model.gamma(0)] + [2.0 * model.gamma(k) for k in range(1, h + 1)])
    return SeriesSum(value, _tail_bound(model, h), h + 1)


def analytic_batch_second_moment(model: AutocovModel, b: int) -> float:
    """Exact ``b * E(batch mean^2)`` for a stationary chain with the model's autocovariance."""
    if b < 1:
        raise ValueError(f"batch size must be positive, got {b}")
    terms = [model.gamma(0)] + [2.0 * (b - k) * model.gamma(k) / b for k in range(1, b)]
    return math.fsum(terms)


def bias_upper_bound(a: int, b: int, lambda_bound: float, f0_norm2: float) -> float:
    """Envelope ``(2 sqrt(a) / b) * f0_norm2 * lam / (1 - lam)**2`` on the scaled bias.

    Follows from ``|gamma_k| <= f0_norm2 * lam**k`` and
    ``sum_{k<b} k lam^k + b sum_{k>=b} lam^k <= sum_{k>=1} k lam^k = lam / (1 - lam)**2``.
    """
    if not 0.0 <= lambda_bound < 1.0:
        raise NonConvergent(f"lambda bound {lambda_bound} is not in [0, 1)")
    return 2.0 * math.sqrt(a) / b * f0_norm2 * lambda_bound / (1.0 - lambda_bound) ** 2


def bias_lower_bound(a: int, b: int, gamma2: float) -> float:
    """``4 (sqrt(a) / b) gamma_2``, valid when every autocovariance is nonnegative."""
    return 4.0 * math.sqrt(a) / b * gamma2


def shifted_bias(model: AutocovModel, schedule: BatchSchedule, tol: float = 1e-12) -> float:
    """Signed ``sqrt(a) * (b E(batch mean^2) - sigma2)``.

    Evaluated as ``-(2 sqrt(a) / b) (sum_{k<b} k gamma_k + b sum_{k>=b} gamma_k)``
    so that no large cancelling terms are subtracted.
    """
    a, b = schedule.a_n, schedule.b_n
    h = max(b - 1, _truncation_lag(model, tol))
    head = math.fsum(k * model.gamma(k) for k in range(1, b))
    tail = math.fsum(model.gamma(k) for k in range(b, h + 1))
    return -2.0 * math.sqrt(a) / b * (head + b * tail)


def grid_schedule(a: int, b: int) -> BatchSchedule:
    return BatchSchedule(n=a * b, b_n=b, a_n=a, rule=Fixed(b))


# ---------------------------------------------------------------------------
# Monte Carlo moment limits

ChainFactory = Callable[[int, int, np.random.Generator], np.ndarray]
"""``factory(count, length, rng)`` returns ``count`` centered stationary paths as rows."""

_CHUNK_VALUES = 4_000_000


def toy_stationary_factory(count: int, length: int, rng) -> np.ndarray:
    init = rng.normal(0.0, math.sqrt(TOY_GAMMA0), size=count)
    return ar1_chains(TOY_RHO, TOY_INNOVATION_VAR, length, init, rng, count)


def white_noise_factory(variance: float) -> ChainFactory:
    def factory(count, length, rng):
        return rng.normal(0.0, math.sqrt(variance), size=(count, length))

    return factory


class MomentEstimate(NamedTuple):
    mean: float
    stderr: float
    replicates: int


def _scaled_batch_moment(factory, b, replicates, rng, batches, stat) -> MomentEstimate:
    if b < 1 or replicates < 2:
        raise ValueError("need b >= 1 and at least two replicates")
    chunk = max(1, _CHUNK_VALUES // (batches * b))
    values = []
    done = 0
    while done < replicates:
        count = min(chunk, replicates - done)
        paths = factory(count, batches * b, rng)
        means = paths.reshape(count, batches, b).mean(axis=2)
        values.append(stat(means, b))
        done += count
    vals = np.concatenate(values)
    return MomentEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)), vals.size)


def empirical_fourth_moment(factory: ChainFactory, b: int, replicates: int, rng) -> MomentEstimate:
    """Monte Carlo mean of ``b**2 * Ybar**4`` over single-batch paths of length b."""
    return _scaled_batch_moment(factory, b, replicates, rng, 1, lambda m, b: b * b * m[:, 0] ** 4)


def empirical_cross_moment(factory: ChainFactory, b: int, replicates: int, rng) -> MomentEstimate:
    """Monte Carlo mean of ``b**2 * Ybar_1**2 * Ybar_2**2`` over two adjacent batches."""
    return _scaled_batch_moment(
        factory, b, replicates, rng, 2, lambda m, b: b * b * m[:, 0] ** 2 * m[:, 1] ** 2
    )


@dataclass(frozen=True)
class MomentCheck:
    name: str
    limit: float
    estimate: MomentEstimate
    comparison: MomentEstimate
    slack: float

    @property
    def tolerance(self) -> float:
        return 4.0 * (self.estimate.stderr + self.slack)

    @property
    def passed(self) -> bool:
        return abs(self.estimate.mean - self.limit) <= self.tolerance


def toy_moment_check(kind: str, b: int = 4096, replicates: int = 20000, seed: int = 0) -> MomentCheck:
    """Compare the toy chain's scaled batch moment at ``b`` with its limit.

    ``kind`` is ``"fourth"`` (limit ``3 sigma^4``) or ``"cross"`` (limit ``sigma^4``).
    The slack term is the discrepancy to a run at ``b // 2`` on an independent stream.
    """
    if kind == "fourth":
        fn, limit = empirical_fourth_moment, 3.0 * TOY_SIGMA2**2
    elif kind == "cross":
        fn, limit = empirical_cross_moment, TOY_SIGMA2**2
    else:
        raise ValueError(f"unknown moment kind {kind!r}")
    main = fn(toy_stationary_factory, b, replicates, RngStream(seed, 0).generator())
    half = fn(toy_stationary_factory, max(1, b // 2), replicates, RngStream(seed, 1).generator())
    return MomentCheck(kind, limit, main, half, abs(main.mean - half.mean))


# ---------------------------------------------------------------------------
# distribution oracles


def gauss_jordan_inverse(matrix) -> np.ndarray:
    """Matrix inverse by Gauss-Jordan elimination with partial pivoting."""
    a = [list(map(float, row)) for row in matrix]
    n = len(a)
    inv = [[float(i == j) for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if a[piv][col] == 0.0:
            raise ValueError("matrix is singular")
        a[col], a[piv] = a[piv], a[col]
        inv[col], inv[piv] = inv[piv], inv[col]
        d = a[col][col]
        a[col] = [v / d for v in a[col]]
        inv[col] = [v / d for v in inv[col]]
        for r in range(n):
            if r != col and a[r][col] != 0.0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
                inv[r] = [x - f * y for x, y in zip(inv[r], inv[col])]
    return np.array(inv)


def inverse_gamma_cdf(x: float, shape: float, rate: float) -> float:
    if x <= 0.0:
        return 0.0
    return float(gammaincc(shape, rate / x))


def inverse_gaussian_cdf(x: float, mu: float, lam: float) -> float:
    if x <= 0.0:
        return 0.0
    s = math.sqrt(lam / x)
    return normal_cdf(s * (x / mu - 1.0)) + math.exp(2.0 * lam / mu) * normal_cdf(-s * (x / mu + 1.0))


def numeric_quantile(cdf: Callable[[float], float], q: float, hint: float = 1.0) -> float:
    """Invert a continuous CDF on (0, inf) by bracketing and Brent's method."""
    lo, hi = hint, hint
    while cdf(lo) > q:
        lo /= 2.0
    while cdf(hi) < q:
        hi *= 2.0
    return brentq(lambda x: cdf(x) - q, lo, hi, xtol=1e-14, rtol=1e-14)
