import math

import numpy as np
import pytest

import bmclt.lasso as lasso_mod
from bmclt.errors import DimensionMismatch, InvalidParameter, NumericalBreakdown
from bmclt.estimators import SqrtN, batch_means_estimate, batch_schedule, mcmcse
from bmclt.lasso import (
    LassoData,
    LassoState,
    initial_state,
    lasso_chain,
    lasso_gibbs_step,
    lasso_log_likelihood,
    make_lasso_data,
    synthetic_lasso_data,
)
from bmclt.samplers import RngStream


def raw_data(y_tilde, x):
    y_tilde = np.asarray(y_tilde, float)
    x = np.asarray(x, float)
    return LassoData(y_tilde, x, 1.0, y_tilde, x.T @ x, x.T @ y_tilde)


def test_log_likelihood_examples():
    d = make_lasso_data([1.0, 1.0], [[1.0], [2.0]], 1.0)
    assert lasso_log_likelihood(LassoState(np.zeros(1), 1.0, np.ones(1)), d) == 0.0
    d = raw_data([1.0, 1.0], [[0.0], [0.0]])
    assert lasso_log_likelihood(LassoState(np.zeros(1), 1.0, np.ones(1)), d) == -1.0
    d = raw_data([0.0] * 4, [[1.0]] * 4)
    assert lasso_log_likelihood(LassoState(np.zeros(1), math.e**2, np.ones(1)), d) == pytest.approx(-4.0, abs=1e-15)


def test_standardization_contract():
    d = make_lasso_data([1.0, 2.0, 4.0], [[1.0, 10.0], [2.0, 0.0], [6.0, 5.0]], 0.5)
    assert np.all(np.abs(d.x.mean(axis=0)) < 1e-12)
    assert np.allclose(d.x.std(axis=0, ddof=1), 1.0)
    assert abs(d.y_tilde.sum()) < 1e-12
    with pytest.raises(DimensionMismatch):
        make_lasso_data([1.0, 2.0], [[1.0], [2.0], [3.0]], 1.0)
    with pytest.raises(InvalidParameter):
        make_lasso_data([1.0, 2.0], [[1.0], [2.0]], 0.0)
    with pytest.raises(InvalidParameter):
        make_lasso_data([1.0, 2.0, 3.0], [[1.0], [1.0], [1.0]], 1.0)


@pytest.fixture(scope="module")
def small():
    return synthetic_lasso_data(30, 5, 1.0, RngStream(100, 0).generator())


@pytest.mark.parametrize("eta2_mode", ["blocked", "as-printed"])
@pytest.mark.parametrize("ig_mode", ["standard", "as-printed"])
def test_states_stay_in_support(small, eta2_mode, ig_mode):
    rng = RngStream(1, 0).generator()
    state = initial_state(small, rng)
    for _ in range(2000):
        state = lasso_gibbs_step(state, small, rng, eta2_mode, ig_mode)
        assert state.eta2 > 0 and np.all(state.tau > 0)
        assert np.all(np.isfinite(state.beta))


def test_hundred_thousand_steps_no_violation(small):
    rng = RngStream(2, 0).generator()
    state = initial_state(small, rng)
    violations = 0
    for _ in range(100_000):
        state = lasso_gibbs_step(state, small, rng)
        violations += not (state.eta2 > 0 and np.all(state.tau > 0) and np.all(np.isfinite(state.beta)))
    assert violations == 0


def test_scalar_beta_conditional():
    rng = RngStream(3, 0).generator()
    d = synthetic_lasso_data(25, 1, 0.7, rng)
    tau = np.array([0.8])
    state = LassoState(np.array([0.3]), 1.0, tau)
    a = float(d.x[:, 0] @ d.x[:, 0]) + 1.0 / tau[0]
    mean = float(d.x[:, 0] @ d.y_tilde) / a
    z = []
    eta2 = []
    for _ in range(40_000):
        new = lasso_gibbs_step(state, d, rng)
        z.append((new.beta[0] - mean) / math.sqrt(new.eta2 / a))
        eta2.append(new.eta2)
    z = np.array(z)
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert abs(z.var() - 1.0) < 4 * math.sqrt(2 / z.size)
    # blocked eta2 | tau: inverse gamma with shape (m-1)/2 and the beta-free rate
    resid = d.y_tilde - d.x[:, 0] * mean
    rate = 0.5 * (resid @ resid + mean * mean / tau[0])
    shape = 0.5 * (d.m - 1)
    eta2 = np.array(eta2)
    assert abs(eta2.mean() - rate / (shape - 1)) < 4 * eta2.std() / math.sqrt(eta2.size)


def test_eta2_modes_share_posterior(small):
    """Blocked and sequential eta2 updates leave the same posterior invariant."""
    results = {}
    for mode in ("blocked", "as-printed"):
        rng = RngStream(4, 0).generator()
        state = initial_state(small, rng)
        trace = []
        for i in range(21_000):
            state = lasso_gibbs_step(state, small, rng, eta2_mode=mode)
            if i >= 1000:
                trace.append(state.eta2)
        trace = np.array(trace)
        est = batch_means_estimate(trace, batch_schedule(trace.size, SqrtN()))
        results[mode] = (trace.mean(), mcmcse(est))
    (m1, s1), (m2, s2) = results.values()
    assert abs(m1 - m2) < 4 * math.hypot(s1, s2)


def test_zero_beta_is_clamped(small, monkeypatch):
    monkeypatch.setattr(lasso_mod, "mvn_from_cholesky", lambda mean, chol, scale, rng: np.zeros_like(mean))
    rng = RngStream(5, 0).generator()
    new = lasso_gibbs_step(initial_state(small, rng), small, rng)
    assert np.all(np.isfinite(new.tau)) and np.all(new.tau > 0)


def test_breakdown_is_reported():
    d = synthetic_lasso_data(4, 8, 1.0, RngStream(6, 0).generator())
    state = LassoState(np.zeros(8), 1.0, np.full(8, np.inf))
    with pytest.raises(NumericalBreakdown):
        lasso_gibbs_step(state, d, RngStream(6, 1).generator())
    with pytest.raises(NumericalBreakdown):
        LassoState(np.zeros(2), float("nan"), np.ones(2)).check()


def test_bad_modes(small):
    rng = RngStream(7, 0).generator()
    with pytest.raises(InvalidParameter):
        lasso_gibbs_step(initial_state(small, rng), small, rng, eta2_mode="nope")
    with pytest.raises(InvalidParameter):
        lasso_gibbs_step(initial_state(small, rng), small, rng, ig_mode="nope")


def test_chain_reproducible(small):
    a = lasso_chain(small, 200, 10, RngStream(8, 2).generator())
    b = lasso_chain(small, 200, 10, RngStream(8, 2).generator())
    assert np.array_equal(a, b)
    assert np.all(np.isfinite(a))
