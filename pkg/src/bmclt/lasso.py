"""Two-block Gibbs sampler for Bayesian lasso regression.

Model: ``Y ~ N(mu 1 + X beta, eta2 I)``, ``beta | eta2, tau ~ N(0, eta2 D_tau)``,
``tau_j ~ Exponential(rate = lambda^2 / 2)``, flat prior on ``mu`` and
``1/eta2`` prior on ``eta2``. The intercept is removed by centering ``Y``.

Two switches select between parameterizations of the conditionals:

``eta2_mode``
    ``"blocked"`` (default) draws ``eta2 | tau`` with ``beta`` integrated out,
    shape ``(m-1)/2`` and rate ``(Y~'Y~ - Y~'X A^-1 X'Y~)/2``, then
    ``beta | eta2, tau``. ``"as-printed"`` draws ``eta2 | beta, tau`` with shape
    ``(m+p-1)/2`` and rate ``|Y~ - X beta|^2/2 + beta' D^-1 beta/2`` using the
    current ``beta``. Both leave the same posterior invariant.
``ig_mode``
    ``"standard"`` (default) draws ``1/tau_j`` from
    Inverse-Gaussian(``sqrt(lambda^2 eta2 / beta_j^2)``, ``lambda^2``);
    ``"as-printed"`` uses mean ``sqrt(lambda eta2 / beta_j^2)`` and shape ``lambda``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from bmclt.errors import (
    DegenerateBeta,
    DimensionMismatch,
    InvalidParameter,
    NumericalBreakdown,
)
from bmclt.samplers import (
    cho_solve_lower,
    cholesky_or_raise,
    draw_inverse_gamma,
    draw_inverse_gaussian,
    mvn_from_cholesky,
)

ETA2_MODES = ("blocked", "as-printed")
IG_MODES = ("standard", "as-printed")
STANDARDIZATION = "center columns, scale to unit sample standard deviation (ddof=1)"
BETA_FLOOR = 1e-300


@dataclass(frozen=True)
class LassoData:
    y: np.ndarray
    x: np.ndarray
    lam: float
    y_tilde: np.ndarray
    xtx: np.ndarray = field(repr=False)
    xty: np.ndarray = field(repr=False)
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class LassoState:
    beta: np.ndarray
    eta2: float
    tau: np.ndarray

    def check(self) -> None:
        """Raise NumericalBreakdown unless every invariant holds."""
        if not (math.isfinite(self.eta2) and self.eta2 > 0.0):
            raise NumericalBreakdown(f"eta2 left its support: {self.eta2}")
        if not np.all(np.isfinite(self.beta)):
            raise NumericalBreakdown("beta has non-finite entries")
        if not (np.all(np.isfinite(self.tau)) and np.all(self.tau > 0.0)):
            raise NumericalBreakdown("tau has non-positive or non-finite entries")


def standardize_columns(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    centers = x.mean(axis=0)
    scales = x.std(axis=0, ddof=1)
    if np.any(scales == 0.0):
        bad = np.flatnonzero(scales == 0.0).tolist()
        raise InvalidParameter(f"constant predictor column(s) {bad} cannot be standardized")
    return (x - centers) / scales, centers, scales


def make_lasso_data(y, x, lam: float, standardize: bool = True, provenance=None) -> LassoData:
    y = np.asarray(y, dtype=np.float64).ravel()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"Y has {y.shape[0]} rows but X has shape {x.shape}")
    m, p = x.shape
    if m < 2 or p < 1:
        raise DimensionMismatch(f"need m >= 2 and p >= 1, got m={m}, p={p}")
    if not (math.isfinite(lam) and lam > 0.0):
        raise InvalidParameter(f"lambda must be positive, got {lam}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
        raise InvalidParameter("lasso data contains non-finite values")
    meta = dict(provenance or {})
    if standardize:
        x, centers, scales = standardize_columns(x)
        meta["standardization"] = STANDARDIZATION
    else:
        meta["standardization"] = "none"
    y_tilde = y - y.mean()
    return LassoData(
        y=y,
        x=x,
        lam=float(lam),
        y_tilde=y_tilde,
        xtx=x.T @ x,
        xty=x.T @ y_tilde,
        provenance=meta,
    )


def initial_state(data: LassoData, rng) -> LassoState:
    """beta ~ N(0, I), eta2 ~ Exponential(1), tau = 1."""
    beta = rng.standard_normal(data.p)
    eta2 = float(rng.standard_exponential())
    while eta2 <= 0.0:
        eta2 = float(rng.standard_exponential())
    return LassoState(beta=beta, eta2=eta2, tau=np.ones(data.p))


def lasso_gibbs_step(
    state: LassoState,
    data: LassoData,
    rng,
    eta2_mode: str = "blocked",
    ig_mode: str = "standard",
) -> LassoState:
    if eta2_mode not in ETA2_MODES:
        raise InvalidParameter(f"eta2_mode must be one of {ETA2_MODES}, got {eta2_mode!r}")
    if ig_mode not in IG_MODES:
        raise InvalidParameter(f"ig_mode must be one of {IG_MODES}, got {ig_mode!r}")
    m, p = data.m, data.p
    inv_tau = 1.0 / state.tau
    a_tau = data.xtx + np.diag(inv_tau)
    chol = cholesky_or_raise(a_tau, NumericalBreakdown)
    mean = cho_solve_lower(chol, data.xty)

    if eta2_mode == "blocked":
        # Y~'(I - X A^-1 X')Y~ written as a sum of squares so it cannot go negative
        resid = data.y_tilde - data.x @ mean
        rate = 0.5 * (resid @ resid + mean @ (inv_tau * mean))
        shape = 0.5 * (m - 1)
    else:
        resid = data.y_tilde - data.x @ state.beta
        rate = 0.5 * (resid @ resid) + 0.5 * (state.beta @ (inv_tau * state.beta))
        shape = 0.5 * (m + p - 1)
    if not (math.isfinite(rate) and rate > 0.0):
        raise NumericalBreakdown(f"inverse-gamma rate is {rate}")
    eta2 = draw_inverse_gamma(shape, rate, rng)
    beta = mvn_from_cholesky(mean, chol, eta2, rng)
    if not np.all(np.isfinite(beta)):
        raise NumericalBreakdown("beta draw is not finite")

    abs_beta = np.maximum(np.abs(beta), BETA_FLOOR)
    lam = data.lam
    if ig_mode == "standard":
        ig_mean = lam * math.sqrt(eta2) / abs_beta
        ig_shape = lam * lam
    else:
        ig_mean = math.sqrt(lam * eta2) / abs_beta
        ig_shape = lam
    if not np.all(np.isfinite(ig_mean)):
        raise DegenerateBeta("inverse-Gaussian mean overflowed for a vanishing coefficient")
    inv_tau_new = draw_inverse_gaussian(ig_mean, ig_shape, rng)
    with np.errstate(divide="ignore", over="ignore"):
        tau = 1.0 / inv_tau_new
    if not (np.all(np.isfinite(tau)) and np.all(tau > 0.0)):
        raise DegenerateBeta("tau draw left (0, inf)")
    new = LassoState(beta=beta, eta2=eta2, tau=tau)
    new.check()
    return new


def lasso_log_likelihood(state: LassoState, data: LassoData) -> float:
    resid = data.y_tilde - data.x @ state.beta
    return -0.5 * data.m * math.log(state.eta2) - 0.5 * float(resid @ resid) / state.eta2


def lasso_chain(
    data: LassoData,
    n: int,
    burn_in: int,
    rng,
    init: LassoState | None = None,
    eta2_mode: str = "blocked",
    ig_mode: str = "standard",
) -> np.ndarray:
    """Log-likelihood trace of the last ``n`` states after ``burn_in`` steps."""
    if n < 1 or burn_in < 0:
        raise InvalidParameter(f"need n >= 1 and burn_in >= 0, got n={n}, burn_in={burn_in}")
    state = initial_state(data, rng) if init is None else init
    out = np.empty(n)
    for i in range(burn_in + n):
        state = lasso_gibbs_step(state, data, rng, eta2_mode, ig_mode)
        if i >= burn_in:
            out[i - burn_in] = lasso_log_likelihood(state, data)
    return out


def synthetic_lasso_data(m: int, p: int, lam: float, rng, sparsity: int | None = None) -> LassoData:
    """Gaussian design with a few nonzero coefficients, for tests and demos."""
    x = rng.standard_normal((m, p))
    k = max(1, p // 4) if sparsity is None else sparsity
    beta = np.zeros(p)
    beta[:k] = rng.choice([-2.0, -1.0, 1.0, 2.0], size=k)
    y = 1.0 + x @ beta + rng.standard_normal(m)
    return make_lasso_data(y, x, lam, provenance={"source": "synthetic", "m": m, "p": p})
