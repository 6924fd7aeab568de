"""Random streams, variate generators and the autoregressive toy chain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.signal import lfilter

from bmclt.errors import (
    InvalidParameter,
    InvalidRho,
    NotPositiveDefinite,
    NumericalBreakdown,
)

TOY_RHO = 0.5
TOY_INNOVATION_VAR = 0.375

_UINT64 = 2**64


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by the counter-based Philox generator, keyed directly with the
    pair, so distinct ids give independent sequences with no jump-ahead cost.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= v < _UINT64:
                raise InvalidParameter(f"{name} must be a 64-bit unsigned integer, got {v}")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def _positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0.0):
        raise InvalidParameter(f"{name} must be positive and finite, got {value}")


# ---------------------------------------------------------------------------
# variates


def draw_inverse_gamma(shape: float, rate: float, rng: np.random.Generator, size=None):
    """Draw X with 1/X ~ Gamma(shape, rate)."""
    _positive("shape", shape)
    _positive("rate", rate)
    x = 1.0 / rng.gamma(shape, 1.0 / rate, size=size)
    if size is None:
        if not (math.isfinite(x) and x > 0.0):
            raise NumericalBreakdown(f"inverse-gamma draw {x} for shape={shape}, rate={rate}")
        return float(x)
    return x


def draw_inverse_gaussian(mu, shape_lambda, rng: np.random.Generator, size=None):
    """Inverse-Gaussian(mu, lambda) variates by Michael, Schucany and Haas (1976).

    ``mu`` and ``shape_lambda`` may be arrays; they broadcast against ``size``.
    The smaller root of the quadratic is computed in a cancellation-free form,
    which stays accurate when ``mu`` is enormous (tiny coefficients in the
    lasso sampler).
    """
    mu = np.asarray(mu, dtype=np.float64)
    lam = np.asarray(shape_lambda, dtype=np.float64)
    if not (np.all(mu > 0) and np.all(np.isfinite(mu))):
        raise InvalidParameter("mu must be positive and finite")
    if not (np.all(lam > 0) and np.all(np.isfinite(lam))):
        raise InvalidParameter("shape_lambda must be positive and finite")
    shape = np.broadcast_shapes(mu.shape, lam.shape) if size is None else size
    v = rng.standard_normal(size=shape) ** 2
    u = rng.random(size=shape)
    w = mu * v / (2.0 * lam)
    x = mu / (1.0 + w + np.sqrt(w) * np.sqrt(w + 2.0))
    with np.errstate(over="ignore"):
        # the reflected root may overflow in lanes where np.where discards it
        out = np.where(u <= mu / (mu + x), x, mu * (mu / x))
    if out.ndim == 0 and size is None:
        return float(out)
    return out


def cholesky_or_raise(precision, exc=NotPositiveDefinite) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError:
        raise exc("precision matrix is not positive definite") from None
    if not np.all(np.isfinite(chol)):
        raise exc("Cholesky factor is not finite")
    return chol


def cho_solve_lower(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``(L L^T) x = b`` given the lower factor L."""
    y = solve_triangular(chol, b, lower=True)
    return solve_triangular(chol.T, y, lower=False)


def mvn_from_cholesky(mean: np.ndarray, chol: np.ndarray, scale: float, rng, size=None):
    p = mean.shape[0]
    if size is None:
        g = rng.standard_normal(p)
        return mean + solve_triangular(chol.T, math.sqrt(scale) * g, lower=False)
    g = rng.standard_normal((size, p))
    return mean + solve_triangular(chol.T, math.sqrt(scale) * g.T, lower=False).T


def draw_mvn_precision(mean_rhs, precision, scale: float, rng: np.random.Generator, size=None):
    """Draw from N(P^-1 rhs, scale * P^-1) given the precision matrix P.

    With ``size`` set, returns an array of shape ``(size, p)``.
    """
    _positive("scale", scale)
    rhs = np.asarray(mean_rhs, dtype=np.float64)
    chol = cholesky_or_raise(np.asarray(precision, dtype=np.float64))
    return mvn_from_cholesky(cho_solve_lower(chol, rhs), chol, scale, rng, size)


# ---------------------------------------------------------------------------
# toy normal chain and AR(1)


def toy_marginal_step(x: float, rng) -> float:
    """One step of the x-marginal of the toy Gibbs sampler: x/2 + N(0, 3/8)."""
    return x / 2 + math.sqrt(TOY_INNOVATION_VAR) * float(rng.standard_normal())


def ar1_chain(rho: float, tau2: float, n: int, burn_in: int, init: float, rng) -> np.ndarray:
    """Run ``x' = rho * x + sqrt(tau2) * g`` for burn_in + n steps, keep the last n.

    The recursion is evaluated by ``scipy.signal.lfilter``, which performs the
    same multiply-add per step as the scalar loop and so reproduces it exactly.
    """
    if not -1.0 < rho < 1.0:
        raise InvalidRho(f"rho must lie in (-1, 1), got {rho}")
    _positive("tau2", tau2)
    if n < 1 or burn_in < 0:
        raise InvalidParameter(f"need n >= 1 and burn_in >= 0, got n={n}, burn_in={burn_in}")
    total = burn_in + n
    innov = math.sqrt(tau2) * np.asarray(rng.standard_normal(total), dtype=np.float64)
    x = lfilter([1.0], [1.0, -rho], innov, zi=[rho * init])[0]
    return x[burn_in:]


def ar1_chains(rho: float, tau2: float, length: int, init: np.ndarray, innovations_rng, count: int):
    """``count`` independent AR(1) paths of ``length`` steps as rows, one rng for all.

    Used by the moment checkers, which need many short stationary paths.
    """
    innov = math.sqrt(tau2) * innovations_rng.standard_normal((count, length))
    zi = (rho * np.asarray(init, dtype=np.float64)).reshape(count, 1)
    return lfilter([1.0], [1.0, -rho], innov, axis=1, zi=zi)[0]


def toy_chain(n: int, burn_in: int, init_x: float, rng) -> np.ndarray:
    return ar1_chain(TOY_RHO, TOY_INNOVATION_VAR, n, burn_in, init_x, rng)


def ar1_stationary_variance(rho: float, tau2: float) -> float:
    return tau2 / (1.0 - rho * rho)


def ar1_sigma2(rho: float, tau2: float) -> float:
    """Closed-form asymptotic variance of the AR(1) mean, gamma0 (1+rho)/(1-rho)."""
    return ar1_stationary_variance(rho, tau2) * (1.0 + rho) / (1.0 - rho)
