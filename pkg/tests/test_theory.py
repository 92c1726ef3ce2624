import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from mcastle.errors import GridTooSmall, ValidationError
from mcastle.theory import (
    WINDOW_OVERLAP,
    complexity_compare,
    design_effect_1d,
    design_effect_window,
    design_effect_window_limit,
    effective_samples,
    effective_samples_dependent,
    error_reduction,
    variance_inflation_factor,
)


def test_effective_samples_examples():
    assert effective_samples(30, 30, 7) == 5488
    assert effective_samples(3, 3, 1) == 1
    assert effective_samples(4, 4, 1000) == 4000
    with pytest.raises(GridTooSmall):
        effective_samples(2, 5, 10)


@given(st.integers(3, 40), st.integers(3, 40), st.integers(1, 500), st.integers(1, 5))
def test_effective_samples_multiplicative_in_T(r, c, T, k):
    assert effective_samples(r, c, k * T) == k * effective_samples(r, c, T)


def test_design_effect_1d_examples():
    assert design_effect_1d([]) == 1.0
    assert design_effect_1d([0.0] * 10) == 1.0
    assert design_effect_1d([0.5]) == 2.0
    with pytest.warns(RuntimeWarning):
        design_effect_1d([-0.6])


def test_design_effect_1d_power_law_growth():
    de = {K: design_effect_1d([k ** -0.5 for k in range(1, K + 1)]) for K in (100, 400, 1600, 6400)}
    ratios = [de[4 * K] / de[K] for K in (100, 400, 1600)]
    # sum of k^-1/2 grows like 2 sqrt(K): quadrupling K roughly doubles DE
    assert all(1.8 < r < 2.1 for r in ratios)


def test_variance_inflation_factor_limits():
    rho = [0.5, 0.25]
    assert variance_inflation_factor(rho, 10 ** 9) == pytest.approx(design_effect_1d(rho))
    assert variance_inflation_factor(rho, 2) == pytest.approx(1 + 2 * 0.5 * 0.5)
    with pytest.raises(ValidationError):
        variance_inflation_factor(rho, 0)


def test_window_overlap_table():
    assert WINDOW_OVERLAP[(0, 0)] == 1
    assert WINDOW_OVERLAP[(1, 0)] == Fraction(2, 3)
    assert WINDOW_OVERLAP[(1, 1)] == Fraction(4, 9)
    assert WINDOW_OVERLAP[(2, 2)] == Fraction(1, 9)


def test_design_effect_window_single_window():
    assert design_effect_window(1, 1) == 1.0


def test_design_effect_window_limit_by_summation():
    brute = 1 + 2 * sum((3 - i) * (3 - j) / 9 for i in range(3) for j in range(3) if (i, j) != (0, 0))
    assert design_effect_window_limit() == pytest.approx(brute) == pytest.approx(7.0)
    assert design_effect_window(10 ** 6, 10 ** 6) == pytest.approx(7.0, abs=1e-4)


def test_design_effect_window_bounds_and_growth():
    prev = 0.0
    for n in range(1, 60):
        de = design_effect_window(n, n)
        assert 1.0 <= de <= design_effect_window_limit()
        # finite-lattice weights only grow with n, so DE rises toward the limit
        assert de >= prev
        prev = de


def test_dependent_effective_samples_and_error_reduction():
    assert error_reduction(3, 50) == 1.0
    N, T = 10, 100
    L = effective_samples(N, N, T)
    de = design_effect_window(N - 2, N - 2)
    assert effective_samples_dependent(N, N, T) == pytest.approx(L / de)
    assert error_reduction(N, T) == pytest.approx(math.sqrt(L / de / T))


def test_complexity_examples():
    c = complexity_compare(4, 1)
    assert c.log10_search_ratio == pytest.approx(7 * math.log10(2)) == pytest.approx(2.107, abs=1e-3)
    c3 = complexity_compare(3, 2)
    assert c3.naive_exponent == c3.castle_exponent == 18 and c3.log10_search_ratio == 0
    big = complexity_compare(30, 3, 7)
    assert (big.naive_exponent, big.castle_exponent) == (2700, 27)
    assert big.log10_search_ratio > 800
    assert math.isfinite(big.naive_log10_cost)


@given(st.integers(3, 50), st.integers(1, 10), st.integers(1, 1000), st.integers(2, 10))
def test_complexity_costs_scale_linearly_in_T(N, V, T, k):
    a, b = complexity_compare(N, V, T), complexity_compare(N, V, k * T)
    assert b.naive_log10_cost - a.naive_log10_cost == pytest.approx(math.log10(k))
    assert b.castle_log10_cost - a.castle_log10_cost == pytest.approx(math.log10(k))
    assert b.log10_search_ratio == a.log10_search_ratio
