import math

import pytest

from bmclt.errors import NonConvergent
from bmclt.oracles import (
    AutocovModel,
    analytic_batch_second_moment,
    ar1_model,
    bias_lower_bound,
    bias_upper_bound,
    empirical_cross_moment,
    empirical_fourth_moment,
    grid_schedule,
    shifted_bias,
    sigma2_from_autocov,
    toy_autocovariance,
    toy_model,
    toy_stationary_factory,
    white_noise_factory,
    white_noise_model,
)
from bmclt.samplers import RngStream

GRID = (2, 4, 8, 16, 32, 64)


def test_toy_autocovariance_values():
    assert toy_autocovariance(0) == 0.5
    assert toy_autocovariance(1) == 0.25
    assert toy_autocovariance(3) == 0.0625


@pytest.mark.parametrize("model", [toy_model(), ar1_model(0.9, 1.0), ar1_model(-0.6, 2.0), white_noise_model(3.0)])
def test_geometric_envelope(model):
    for h in range(65):
        assert abs(model.gamma(h)) <= model.f0_norm2 * model.lambda_bound**h * (1 + 1e-12)


def test_sigma2_values():
    toy = sigma2_from_autocov(toy_model())
    assert abs(toy.value - 1.5) < 1e-10
    assert toy.tail_bound < 1e-12
    assert sigma2_from_autocov(white_noise_model(2.5)).value == 2.5
    assert sigma2_from_autocov(ar1_model(0.9, 1.0)).value == pytest.approx(100.0, abs=1e-8)
    # closed form gamma0 (1 + rho) / (1 - rho) for a negative coefficient too
    g0 = 2.0 / (1 - 0.36)
    assert sigma2_from_autocov(ar1_model(-0.6, 2.0)).value == pytest.approx(g0 * 0.4 / 1.6, rel=1e-11)
    with pytest.raises(NonConvergent):
        sigma2_from_autocov(AutocovModel(lambda h: 1.0, 1.0, 1.0))


def test_tail_bound_is_honest():
    model = toy_model()
    for tol in (1e-3, 1e-6, 1e-9):
        res = sigma2_from_autocov(model, tol)
        assert res.tail_bound < tol
        assert abs(res.value - 1.5) <= res.tail_bound + 1e-15


def test_batch_second_moment():
    m = toy_model()
    assert analytic_batch_second_moment(m, 1) == 0.5
    assert analytic_batch_second_moment(m, 2) == 0.75
    vals = [analytic_batch_second_moment(m, b) for b in range(1, 65)]
    assert all(x <= y for x, y in zip(vals, vals[1:]))
    assert all(v <= 1.5 for v in vals)
    # gap = (2/b) sum_{k<b} k gamma_k + 2 sum_{k>=b} gamma_k, about 2/b here
    gap = math.fsum(2 / 64 * k * 2.0 ** -(k + 1) for k in range(1, 64)) + 2 * 2.0**-64
    assert 1.5 - vals[-1] == pytest.approx(gap, abs=1e-15)
    assert 1.5 - vals[-1] < 0.032


def test_geometric_series_closed_form():
    # sum_{k>=1} k lam^k = lam / (1 - lam)^2, which the upper bound relies on
    for lam in (0.1, 0.5, 0.9):
        brute = math.fsum(k * lam**k for k in range(1, 2000))
        assert brute == pytest.approx(lam / (1 - lam) ** 2, rel=1e-12)


def test_bias_upper_bound_formula():
    assert bias_upper_bound(100, 100, 0.5, 0.5) == pytest.approx(0.2, rel=1e-15)
    assert bias_upper_bound(7, 3, 0.0, 1.0) == 0.0
    assert bias_upper_bound(400, 10, 0.3, 2.0) == pytest.approx(2 * bias_upper_bound(100, 10, 0.3, 2.0), rel=1e-15)


def test_shifted_bias_against_second_moment():
    m = toy_model()
    for a in GRID:
        for b in GRID:
            direct = math.sqrt(a) * (analytic_batch_second_moment(m, b) - 1.5)
            assert shifted_bias(m, grid_schedule(a, b)) == pytest.approx(direct, abs=1e-10)


def test_bias_bounds_on_grid():
    m = toy_model()
    for a in GRID:
        for b in GRID:
            sb = abs(shifted_bias(m, grid_schedule(a, b)))
            assert sb <= bias_upper_bound(a, b, 0.5, 0.5)
            assert sb >= bias_lower_bound(a, b, 0.125)
            assert sb >= math.sqrt(a) / b * 0.5


def test_bias_bound_ar1():
    m = ar1_model(0.8, 1.0)
    for a in GRID:
        for b in GRID:
            assert abs(shifted_bias(m, grid_schedule(a, b))) <= bias_upper_bound(a, b, m.lambda_bound, m.f0_norm2)


def test_white_noise_has_no_bias():
    assert shifted_bias(white_noise_model(1.3), grid_schedule(10, 10)) == 0.0


def test_fourth_moment_small_b():
    est = empirical_fourth_moment(toy_stationary_factory, 1, 200_000, RngStream(10, 0).generator())
    assert abs(est.mean - 0.75) < 4 * est.stderr


def test_white_noise_moment_limits():
    v = 2.0
    f = white_noise_factory(v)
    four = empirical_fourth_moment(f, 1024, 20_000, RngStream(11, 0).generator())
    assert abs(four.mean - 3 * v * v) < 4 * four.stderr
    cross = empirical_cross_moment(f, 1024, 20_000, RngStream(11, 1).generator())
    assert abs(cross.mean - v * v) < 4 * cross.stderr
    cross1 = empirical_cross_moment(f, 1, 200_000, RngStream(11, 2).generator())
    assert abs(cross1.mean - v * v) < 4 * cross1.stderr
