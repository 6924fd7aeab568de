"""Batch means estimation of the asymptotic variance of an ergodic average.

All functions here are pure: they take a trace (any 1-D sequence of finite
floats) and return plain values or frozen dataclasses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from bmclt.errors import (
    InvalidLevel,
    LagTooLarge,
    NonFiniteInput,
    ScheduleDegenerate,
    TraceTooShort,
    ZeroVarianceEstimate,
)

# ---------------------------------------------------------------------------
# batch size rules


def _floor_power(n: int, exponent: float) -> int:
    x = n**exponent
    r = round(x)
    # n**e lands a few ulps below an exact integer for e.g. 100000**0.4
    if abs(x - r) <= 1e-9 * max(r, 1):
        return int(r)
    return math.floor(x)


@dataclass(frozen=True)
class SqrtN:
    def batch_size(self, n: int) -> int:
        return math.isqrt(n)

    @property
    def tag(self) -> str:
        return "sqrt"


@dataclass(frozen=True)
class Pow:
    exponent: float

    def __post_init__(self):
        if not 0.0 < self.exponent < 1.0:
            raise ScheduleDegenerate(f"exponent must lie in (0, 1), got {self.exponent}")

    def batch_size(self, n: int) -> int:
        return _floor_power(n, self.exponent)

    @property
    def tag(self) -> str:
        return f"pow:{self.exponent!r}"


@dataclass(frozen=True)
class CubeRootPlusDelta:
    delta: float = 1e-5

    def __post_init__(self):
        if not self.delta > 0.0:
            raise ScheduleDegenerate(f"delta must be positive, got {self.delta}")

    def batch_size(self, n: int) -> int:
        return _floor_power(n, 1.0 / 3.0 + self.delta)

    @property
    def tag(self) -> str:
        return f"cbrt:{self.delta!r}"


@dataclass(frozen=True)
class Fixed:
    b: int

    def batch_size(self, n: int) -> int:
        return self.b

    @property
    def tag(self) -> str:
        return f"fixed:{self.b}"


Rule = Union[SqrtN, Pow, CubeRootPlusDelta, Fixed]


def parse_rule(text: str) -> Rule:
    """Parse a rule tag such as ``sqrt``, ``pow:0.4``, ``cbrt`` or ``fixed:100``.

    ``cbrt`` alone means ``n**(1/3 + 1e-5)``; ``cbrt:<delta>`` overrides delta.
    """
    name, _, arg = text.strip().lower().partition(":")
    try:
        if name in ("sqrt", "sqrtn"):
            return SqrtN()
        if name == "pow":
            return Pow(float(arg))
        if name in ("cbrt", "cuberoot"):
            return CubeRootPlusDelta(float(arg)) if arg else CubeRootPlusDelta()
        if name == "fixed":
            return Fixed(int(arg))
    except ValueError as exc:
        raise ScheduleDegenerate(f"bad rule {text!r}: {exc}") from None
    raise ScheduleDegenerate(f"unknown batch rule {text!r}")


@dataclass(frozen=True)
class BatchSchedule:
    n: int
    b_n: int
    a_n: int
    rule: Rule

    @property
    def used(self) -> int:
        """Number of leading trace values the estimator consumes."""
        return self.a_n * self.b_n


def batch_schedule(n: int, rule: Rule) -> BatchSchedule:
    if n < 4:
        raise ScheduleDegenerate(f"need n >= 4, got {n}")
    b = int(rule.batch_size(n))
    if b < 1:
        raise ScheduleDegenerate(f"batch size {b} < 1 for n={n}")
    a = n // b
    if a < 2:
        raise ScheduleDegenerate(f"only {a} batch(es) of size {b} fit in n={n}")
    return BatchSchedule(n=n, b_n=b, a_n=a, rule=rule)


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class BmEstimate:
    sigma2_hat: float
    schedule: BatchSchedule
    chain_mean: float
    modified: bool = False


def as_trace(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate and convert to a 1-D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise NonFiniteInput(f"trace must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise TraceTooShort("trace is empty")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise NonFiniteInput(f"non-finite value at index {bad}")
    return arr


def batch_means(values, schedule: BatchSchedule) -> np.ndarray:
    arr = as_trace(values)
    if arr.size < schedule.used:
        raise TraceTooShort(f"trace has {arr.size} values, schedule needs {schedule.used}")
    return arr[: schedule.used].reshape(schedule.a_n, schedule.b_n).mean(axis=1)


def estimate_from_batch_means(means: np.ndarray, schedule: BatchSchedule) -> BmEstimate:
    grand = float(np.mean(means))
    ss = float(np.sum((means - grand) ** 2))
    sigma2 = schedule.b_n * ss / (schedule.a_n - 1)
    return BmEstimate(sigma2_hat=sigma2, schedule=schedule, chain_mean=grand)


def batch_means_estimate(trace, schedule: BatchSchedule) -> BmEstimate:
    """Non-overlapping batch means estimate of the asymptotic variance.

    Only the first ``a_n * b_n`` values are used; any remainder is ignored.
    """
    return estimate_from_batch_means(batch_means(trace, schedule), schedule)


def modified_batch_means_estimate(trace, schedule: BatchSchedule) -> BmEstimate:
    est = batch_means_estimate(trace, schedule)
    a = schedule.a_n
    return BmEstimate(
        sigma2_hat=est.sigma2_hat * (a - 1) / a,
        schedule=schedule,
        chain_mean=est.chain_mean,
        modified=True,
    )


# ---------------------------------------------------------------------------
# normal distribution helpers

# Acklam's rational approximation, refined by one Halley step below.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF."""
    if not 0.0 < p < 1.0:
        raise InvalidLevel(f"probability must lie in (0, 1), got {p}")
    if p > 0.5:
        # 1 - p is exact for p in [0.5, 1]
        return -normal_quantile(1.0 - p)
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    else:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    # one Halley step takes the ~1e-9 relative error down to rounding level
    e = normal_cdf(x) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


# ---------------------------------------------------------------------------
# derived quantities


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float

    @property
    def truncated_lower(self) -> float:
        return max(self.lower, 0.0)

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def variance_ci(est: BmEstimate, level: float = 0.95) -> ConfidenceInterval:
    """Normal-theory interval for the variance itself, ``s2 * (1 +/- z * sqrt(2/a_n))``."""
    if not 0.0 < level < 1.0:
        raise InvalidLevel(f"level must lie in (0, 1), got {level}")
    a = est.schedule.a_n
    if a < 2:
        raise ScheduleDegenerate(f"need at least two batches, got {a}")
    z = normal_quantile(0.5 * (1.0 + level))
    half = z * math.sqrt(2.0 / a) * est.sigma2_hat
    return ConfidenceInterval(est.sigma2_hat - half, est.sigma2_hat + half, level)


def mcmcse(est: BmEstimate) -> float:
    """Monte Carlo standard error of the chain mean."""
    return math.sqrt(est.sigma2_hat / est.schedule.n)


def ess(trace, sigma2_hat: float) -> float:
    arr = as_trace(trace)
    if arr.size < 2:
        raise TraceTooShort("effective sample size needs at least two values")
    if not sigma2_hat > 0.0:
        raise ZeroVarianceEstimate(f"variance estimate must be positive, got {sigma2_hat}")
    return arr.size * float(np.var(arr, ddof=1)) / sigma2_hat


def sample_autocovariance(trace, h: int) -> float:
    """Lag-``h`` autocovariance with divisor n and the full-trace mean."""
    arr = as_trace(trace)
    n = arr.size
    if h < 0 or h >= n:
        raise LagTooLarge(f"lag {h} outside [0, {n - 1}]")
    dev = arr - arr.mean()
    return float(np.dot(dev[: n - h], dev[h:])) / n
