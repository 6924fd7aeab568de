import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from bmclt.errors import (
    InvalidLevel,
    LagTooLarge,
    NonFiniteInput,
    ScheduleDegenerate,
    TraceTooShort,
    ZeroVarianceEstimate,
)
from bmclt.estimators import (
    BatchSchedule,
    BmEstimate,
    CubeRootPlusDelta,
    Fixed,
    Pow,
    SqrtN,
    batch_means_estimate,
    batch_schedule,
    ess,
    mcmcse,
    modified_batch_means_estimate,
    normal_quantile,
    parse_rule,
    sample_autocovariance,
    variance_ci,
)


def two_loop_estimate(values, a, b):
    """Direct transcription of the batch means formula, no numpy."""
    means = []
    for k in range(a):
        s = 0.0
        for i in range(b):
            s += values[k * b + i]
        means.append(s / b)
    grand = sum(means) / a
    total = 0.0
    for m in means:
        total += (m - grand) ** 2
    return b / (a - 1) * total


def est_with(sigma2, a, b=10):
    return BmEstimate(sigma2, BatchSchedule(n=a * b, b_n=b, a_n=a, rule=Fixed(b)), 0.0)


@pytest.mark.parametrize(
    "n, rule, b, a",
    [
        (10000, SqrtN(), 100, 100),
        (100000, Pow(0.4), 100, 1000),
        (1000, CubeRootPlusDelta(1e-5), 10, 100),
        (50000, SqrtN(), 223, 224),
        (50000, CubeRootPlusDelta(), 36, 1388),
    ],
)
def test_schedule_examples(n, rule, b, a):
    s = batch_schedule(n, rule)
    assert (s.b_n, s.a_n) == (b, a)
    assert s.a_n * s.b_n <= n


def test_schedule_degenerate():
    with pytest.raises(ScheduleDegenerate):
        batch_schedule(4, Fixed(4))
    with pytest.raises(ScheduleDegenerate):
        batch_schedule(3, SqrtN())
    with pytest.raises(ScheduleDegenerate):
        batch_schedule(10, Fixed(0))


@pytest.mark.parametrize("n", [4, 5, 17, 99, 100, 101, 4095, 4096, 10**6 + 7])
def test_power_rules_floor(n):
    assert batch_schedule(n, SqrtN()).b_n == math.floor(math.sqrt(n))
    assert batch_schedule(n, Pow(0.5)).b_n == math.isqrt(n)


def test_parse_rule():
    assert parse_rule("sqrt") == SqrtN()
    assert parse_rule("pow:0.4") == Pow(0.4)
    assert parse_rule("cbrt") == CubeRootPlusDelta(1e-5)
    assert parse_rule("fixed:7") == Fixed(7)
    for r in (SqrtN(), Pow(0.4), CubeRootPlusDelta(), Fixed(3)):
        assert parse_rule(r.tag) == r
    with pytest.raises(ScheduleDegenerate):
        parse_rule("bogus")
    with pytest.raises(ScheduleDegenerate):
        parse_rule("pow:1.5")


def test_hand_case():
    s = BatchSchedule(4, 2, 2, Fixed(2))
    est = batch_means_estimate([1, 2, 3, 4], s)
    assert est.sigma2_hat == 4.0
    assert est.chain_mean == 2.5
    assert modified_batch_means_estimate([1, 2, 3, 4], s).sigma2_hat == 2.0


def test_constant_trace_is_zero():
    s = batch_schedule(100, SqrtN())
    assert batch_means_estimate([3.7] * 100, s).sigma2_hat == 0.0
    assert modified_batch_means_estimate([3.7] * 100, s).sigma2_hat == 0.0


def test_remainder_is_discarded():
    s = batch_schedule(9, Fixed(2))
    assert (s.a_n, s.b_n) == (4, 2)
    base = [0.1, 2.0, -1.0, 4.0, 0.5, 0.25, 3.0, -2.0]
    assert batch_means_estimate(base + [1e6], s) == batch_means_estimate(base + [-7.0], s)


def test_input_errors():
    s = BatchSchedule(4, 2, 2, Fixed(2))
    with pytest.raises(TraceTooShort):
        batch_means_estimate([1.0, 2.0, 3.0], s)
    with pytest.raises(NonFiniteInput):
        batch_means_estimate([1.0, float("nan"), 3.0, 4.0], s)
    with pytest.raises(NonFiniteInput):
        batch_means_estimate([1.0, float("inf"), 3.0, 4.0], s)


traces = st.lists(
    st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False),
    min_size=4,
    max_size=64,
)


@settings(max_examples=200, deadline=None)
@given(traces, st.integers(min_value=1, max_value=8))
def test_matches_two_loop_oracle(values, b):
    if len(values) // b < 2:
        b = 1
    s = batch_schedule(len(values), Fixed(b))
    got = batch_means_estimate(values, s).sigma2_hat
    want = two_loop_estimate(values, s.a_n, s.b_n)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-9)
    assert got >= 0.0
    mod = modified_batch_means_estimate(values, s).sigma2_hat
    assert mod == got * (s.a_n - 1) / s.a_n


@settings(max_examples=100, deadline=None)
@given(traces, st.floats(min_value=-100, max_value=100), st.floats(min_value=0.1, max_value=10))
def test_location_and_scale(values, shift, scale):
    s = batch_schedule(len(values), SqrtN())
    base = batch_means_estimate(values, s).sigma2_hat
    shifted = batch_means_estimate([v + shift for v in values], s).sigma2_hat
    scaled = batch_means_estimate([v * scale for v in values], s).sigma2_hat
    assert shifted == pytest.approx(base, rel=1e-10, abs=1e-7)
    assert scaled == pytest.approx(base * scale**2, rel=1e-10, abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(traces, st.randoms(use_true_random=False))
def test_within_batch_permutation(values, rnd):
    # integer-valued data keeps batch sums exact, so the invariance is exact
    values = [float(round(v)) for v in values]
    s = batch_schedule(len(values), SqrtN())
    perm = list(values)
    for k in range(s.a_n):
        block = perm[k * s.b_n : (k + 1) * s.b_n]
        rnd.shuffle(block)
        perm[k * s.b_n : (k + 1) * s.b_n] = block
    assert batch_means_estimate(perm, s) == batch_means_estimate(values, s)


@settings(max_examples=100, deadline=None)
@given(traces, st.lists(st.floats(-1e3, 1e3), max_size=20))
def test_appending_never_changes_estimate(values, extra):
    s = batch_schedule(len(values), SqrtN())
    assert batch_means_estimate(values + extra, s) == batch_means_estimate(values, s)


def test_normal_quantile_against_scipy():
    ps = np.concatenate([np.logspace(-300, -1, 150), np.linspace(0.01, 0.99, 197), 1 - np.logspace(-15, -1, 50)])
    for p in ps:
        assert abs(normal_quantile(float(p)) - stats.norm.ppf(p)) < 1e-9
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    with pytest.raises(InvalidLevel):
        normal_quantile(1.0)


def test_variance_ci_example():
    ci = variance_ci(est_with(1.5, 100), 0.95)
    z = stats.norm.ppf(0.975)
    assert ci.lower == pytest.approx(1.5 - z * math.sqrt(0.02) * 1.5, abs=1e-12)
    assert ci.upper == pytest.approx(1.5 + z * math.sqrt(0.02) * 1.5, abs=1e-12)
    assert ci.lower == pytest.approx(1.0843, abs=1e-4)
    assert ci.upper == pytest.approx(1.9157, abs=1e-4)
    assert ci.truncated_lower == ci.lower


def test_variance_ci_zero_and_width():
    ci = variance_ci(est_with(0.0, 37), 0.9)
    assert (ci.lower, ci.upper) == (0.0, 0.0)
    w100 = variance_ci(est_with(2.0, 100)).upper - variance_ci(est_with(2.0, 100)).lower
    w400 = variance_ci(est_with(2.0, 400)).upper - variance_ci(est_with(2.0, 400)).lower
    assert w400 == pytest.approx(w100 / 2, rel=1e-12)


def test_variance_ci_truncation_and_level():
    ci = variance_ci(est_with(1.0, 2), 0.99)
    assert ci.lower < 0.0 and ci.truncated_lower == 0.0
    for bad in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(InvalidLevel):
            variance_ci(est_with(1.0, 10), bad)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1e6), st.integers(2, 10**6), st.floats(0.01, 0.999))
def test_ci_contains_point_estimate(s2, a, level):
    ci = variance_ci(est_with(s2, a), level)
    assert ci.lower <= s2 <= ci.upper
    assert ci.truncated_lower == max(ci.lower, 0.0)


def test_mcmcse():
    assert mcmcse(BmEstimate(1.5, BatchSchedule(150, 10, 15, Fixed(10)), 0.0)) == pytest.approx(0.1, abs=1e-15)
    assert mcmcse(BmEstimate(0.0, BatchSchedule(150, 10, 15, Fixed(10)), 0.0)) == 0.0
    assert mcmcse(BmEstimate(4.0, BatchSchedule(4, 2, 2, Fixed(2)), 0.0)) == 1.0


def test_ess():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(1000)
    assert ess(x, float(np.var(x, ddof=1))) == pytest.approx(1000.0, rel=1e-14)
    # scale a unit-variance-0.5 trace: n * 0.5 / 1.5
    y = (x - x.mean()) / x.std(ddof=1) * math.sqrt(0.5)
    assert ess(y, 1.5) == pytest.approx(1000 / 3, rel=1e-12)
    with pytest.raises(ZeroVarianceEstimate):
        ess(x, 0.0)


def test_sample_autocovariance():
    assert sample_autocovariance([1, -1, 1, -1], 1) == -0.75
    x = np.array([0.3, 1.2, -0.4, 2.0, 0.0])
    assert sample_autocovariance(x, 0) == pytest.approx(np.var(x), rel=1e-14)
    assert sample_autocovariance([2.0] * 6, 3) == 0.0
    with pytest.raises(LagTooLarge):
        sample_autocovariance([1.0, 2.0], 2)
