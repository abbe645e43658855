from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiermiss import DataError, EstimationError, NoEventsError
from hiermiss.km import (
    CensoredSample,
    max_deviation,
    pooled_variance_combine,
    product_limit,
    recursive_cdf,
)


def fraction_km(pairs):
    """Exact product-limit survival at each distinct event time."""
    times = sorted({t for t, e in pairs if e})
    surv, out = Fraction(1), []
    for t in times:
        n = sum(1 for u, _ in pairs if u >= t)
        d = sum(1 for u, e in pairs if u == t and e)
        surv *= 1 - Fraction(d, n)
        out.append(surv)
    return times, out


def test_three_point_example():
    pairs = [(1, True), (2, False), (3, True)]
    cdf = recursive_cdf(CensoredSample.from_pairs(pairs))
    np.testing.assert_array_equal(cdf.knots, [1.0, 3.0])
    assert cdf.values[0] == pytest.approx(1 / 3, abs=1e-15)
    assert cdf.values[1] == 1.0
    _, exact = fraction_km(pairs)
    assert [1 - float(s) for s in exact] == pytest.approx(cdf.values.tolist(), abs=1e-15)


def test_five_point_example():
    pairs = [(1, True), (3, True), (5, True), (2, False), (4, False)]
    cdf = recursive_cdf(CensoredSample.from_pairs(pairs))
    _, exact = fraction_km(pairs)
    assert exact == [Fraction(4, 5), Fraction(8, 15), Fraction(0)]
    np.testing.assert_allclose(cdf.survival, [0.8, 8 / 15, 0.0], atol=1e-15)


def test_no_censoring_is_the_empirical_cdf(rng):
    t = rng.exponential(size=25) + 0.01
    cdf = recursive_cdf(CensoredSample(t, np.ones(25, dtype=bool)))
    np.testing.assert_allclose(cdf.values, np.arange(1, 26) / 25, atol=1e-14)


def test_product_limit_examples():
    pl = product_limit(CensoredSample.from_pairs([(1, True), (2, False), (3, True)]))
    np.testing.assert_allclose(pl.survival, [2 / 3, 0.0], atol=1e-15)
    pl = product_limit(CensoredSample.from_pairs([(3, True), (1, True), (2, True), (4, True)]))
    np.testing.assert_allclose(pl.survival, [0.75, 0.5, 0.25, 0.0], atol=1e-15)
    with pytest.raises(NoEventsError, match="no estimable CDF"):
        product_limit(CensoredSample.from_pairs([(1, False)]))
    with pytest.raises(NoEventsError):
        recursive_cdf(CensoredSample.from_pairs([(1, False), (2, False)]))


def test_ties_follow_product_limit_convention():
    pairs = [(2, True), (2, True), (2, False), (3, False), (3, True), (5, True), (1, False)]
    sample = CensoredSample.from_pairs(pairs)
    _, exact = fraction_km(pairs)
    np.testing.assert_allclose(recursive_cdf(sample).survival, [float(s) for s in exact], atol=1e-15)
    assert max_deviation(recursive_cdf(sample), product_limit(sample)) <= 1e-15


def test_censoring_times_beyond_last_event_do_not_matter():
    base = [(1, True), (2, False), (3, True), (4, True)]
    a = recursive_cdf(CensoredSample.from_pairs(base + [(5, False), (6, False)]))
    b = recursive_cdf(CensoredSample.from_pairs(base + [(9, False), (40, False)]))
    np.testing.assert_array_equal(a.knots, b.knots)
    np.testing.assert_array_equal(a.values, b.values)


def test_step_function_evaluation():
    cdf = recursive_cdf(CensoredSample.from_pairs([(1, True), (3, True)]))
    np.testing.assert_allclose(cdf([0.5, 1.0, 2.0, 3.0, 9.0]), [0.0, 0.5, 0.5, 1.0, 1.0])


def test_sample_validation():
    with pytest.raises(DataError):
        CensoredSample([1.0, -2.0], [True, True])
    with pytest.raises(DataError):
        CensoredSample([1.0, np.inf], [True, True])


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (1.0, 1.0, (0.5, 0.5, 0.5)),
        (1.0, 3.0, (0.75, 0.25, 0.75)),
    ],
)
def test_pooled_variance_combine(a, b, expected):
    assert pooled_variance_combine(a, b) == pytest.approx(expected, abs=1e-15)


def test_pooled_variance_exact_knowledge_dominates():
    wa, wb, v = pooled_variance_combine(2.0, 1e-14)
    assert v < 1e-13
    assert wb > 1 - 1e-13
    with pytest.raises(EstimationError, match="invalid variance"):
        pooled_variance_combine(0.0, 1.0)
    with pytest.raises(EstimationError):
        pooled_variance_combine(1.0, -1.0)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.tuples(st.integers(1, 12), st.booleans()), min_size=1, max_size=40).filter(
        lambda xs: any(e for _, e in xs)
    )
)
def test_recursive_equals_product_limit_with_ties(pairs):
    sample = CensoredSample.from_pairs(pairs)
    rec = recursive_cdf(sample)
    _, exact = fraction_km(pairs)
    np.testing.assert_allclose(rec.survival, [float(s) for s in exact], atol=1e-12, rtol=0)
    assert np.all(np.diff(rec.values) >= 0)
    assert rec.values.min() >= 0 and rec.values.max() <= 1


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_information_adds(a, b):
    wa, wb, v = pooled_variance_combine(a, b)
    assert 1 / v == pytest.approx(1 / a + 1 / b, rel=1e-12)
    assert wa + wb == pytest.approx(1.0, abs=1e-15)
