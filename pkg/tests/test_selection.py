from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import piecewise
from trendbreak.errors import DomainError
from trendbreak.scan import scan_change_point
from trendbreak.segfit import AnnualSeries
from trendbreak.selection import (
    K_DUAL,
    K_SINGLE,
    delta_bic_from_rss,
    information_criteria,
    select_model,
)


def test_known_values():
    aic, bic = information_criteria(70.0, 70, 2)
    assert aic == pytest.approx(4.0, abs=1e-12)
    assert bic == pytest.approx(2 * math.log(70), abs=1e-12)
    _, bic4 = information_criteria(70.0, 70, 4)
    assert bic4 == pytest.approx(4 * math.log(70), abs=1e-12)
    # commonly quoted roundings of 2 ln 70 and 4 ln 70 are only good to ~1e-3
    assert bic == pytest.approx(8.4967, abs=1e-3)
    assert bic4 == pytest.approx(16.9934, abs=1e-3)


def test_perfect_fit_is_minus_infinity():
    aic, bic = information_criteria(0.0, 30, 4)
    assert aic == -math.inf and bic == -math.inf


def test_invalid_inputs():
    with pytest.raises(DomainError):
        information_criteria(-1.0, 10, 2)
    with pytest.raises(DomainError):
        information_criteria(np.nan, 10, 2)
    with pytest.raises(DomainError):
        information_criteria(1.0, 0, 2)


def test_array_input():
    aic, bic = information_criteria(np.array([1.0, 2.0]), 10, 2)
    assert aic.shape == (2,) and bic[1] > bic[0]


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6), st.integers(5, 10_000))
def test_delta_identity(rss_d, rss_s, n):
    got = delta_bic_from_rss(rss_d, rss_s, n)
    assert float(got) == pytest.approx(n * math.log(rss_d / rss_s) + 2 * math.log(n),
                                       rel=1e-9, abs=1e-9)


def test_noiseless_two_segment_prefers_dual():
    s = AnnualSeries(1, piecewise(70, 35, 0, 0, 0.04) + 287.0)
    sel = select_model(s, scan_change_point(s))
    assert sel.preferred == "dual"
    assert sel.delta_bic == -math.inf


def test_exact_line_keeps_single():
    s = AnnualSeries(1, 0.02 * np.arange(1, 71) + 10)
    sel = select_model(s, scan_change_point(s))
    assert sel.delta_bic == 0.0 and sel.preferred == "single"


def test_k_values():
    s = AnnualSeries(1, np.random.default_rng(3).normal(size=40))
    sel = select_model(s, scan_change_point(s))
    assert (sel.k_single, sel.k_dual) == (K_SINGLE, K_DUAL) == (2, 4)
    assert (sel.preferred == "dual") == (sel.delta_bic < 0)
    assert sel.delta_aic == pytest.approx(sel.aic_dual - sel.aic_single)


@given(st.integers(0, 2**31), st.floats(0.01, 100), st.floats(-1e3, 1e3))
def test_scale_and_shift_invariance(seed, c, shift):
    x = np.random.default_rng(seed).normal(size=50)
    s0 = AnnualSeries(1, x)
    s1 = AnnualSeries(1, c * x + shift)
    a = select_model(s0, scan_change_point(s0))
    b = select_model(s1, scan_change_point(s1))
    assert b.delta_bic == pytest.approx(a.delta_bic, abs=1e-6)
    assert b.preferred == a.preferred
    assert b.bic_single - a.bic_single == pytest.approx(50 * math.log(c * c), abs=1e-6)


@given(st.integers(0, 2**31), st.integers(21, 120))
def test_delta_bic_upper_bound(seed, n):
    s = AnnualSeries(1, np.random.default_rng(seed).normal(size=n))
    sel = select_model(s, scan_change_point(s))
    assert sel.delta_bic <= 2 * math.log(n) + 1e-9
