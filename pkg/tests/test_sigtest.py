from __future__ import annotations

import numpy as np
import pytest

from conftest import piecewise
from trendbreak.errors import ConfigError
from trendbreak.scan import scan_change_point
from trendbreak.segfit import AnnualSeries, DualFit, fit_single
from trendbreak.sigtest import (
    NullConfig,
    _conditional_thresholds,
    null_ensemble,
    slope_gap,
    test_change_point,
    threshold_table,
)
from trendbreak.stochastic import gaussian_noise


def test_slope_gap():
    f = DualFit(30, 1950, -0.0027, 0.0, 0.0303, 0.0, 1.0, 72)
    assert slope_gap(f) == pytest.approx(0.0330, abs=1e-12)
    assert slope_gap(DualFit(30, 1950, 0.01, 0, 0.01, 0.3, 1.0, 72)) == 0


def test_config_validation():
    with pytest.raises(ConfigError):
        NullConfig(ensemble_size=199)
    with pytest.raises(ConfigError):
        NullConfig(noise="red")
    with pytest.raises(ConfigError):
        NullConfig(level=1.0)
    with pytest.raises(ConfigError):
        threshold_table(70, NullConfig(noise="arfima"))


def test_null_is_line_invariant_and_scales_with_sigma(rng):
    # adding a straight line changes neither the detected index nor s
    z = rng.normal(size=60)
    t = np.arange(1, 61)
    a = scan_change_point(AnnualSeries(1, z))
    b = scan_change_point(AnnualSeries(1, 3.0 * z + 0.05 * t - 7))
    assert a.best.T == b.best.T
    assert slope_gap(b.best) == pytest.approx(3.0 * slope_gap(a.best), rel=1e-9)


def test_null_ensemble_deterministic_across_workers(rng):
    s = AnnualSeries(1, rng.normal(size=70))
    a = null_ensemble(s, NullConfig(ensemble_size=600, seed=4, workers=1))
    b = null_ensemble(s, NullConfig(ensemble_size=600, seed=4, workers=3))
    np.testing.assert_array_equal(a.change_indices, b.change_indices)
    np.testing.assert_array_equal(a.s, b.s)
    assert len(a) == 600 and len(list(a)) == 600
    assert a.sigma == pytest.approx(np.sqrt(fit_single(s).rss / 68))


def test_null_explicit_against_brute_force(rng):
    # surrogate = fitted line + sigma * unit noise, scanned directly
    s = AnnualSeries(1, rng.normal(size=40) + 0.02 * np.arange(40))
    cfg = NullConfig(ensemble_size=200, seed=8)
    ens = null_ensemble(s, cfg, margin=5)
    fit = fit_single(s)
    from trendbreak.stochastic import member_seed
    line = fit.predict(np.arange(1, 41))
    for i in (0, 17, 199):
        y = line + gaussian_noise(40, ens.sigma, member_seed(8, i))
        r = scan_change_point(AnnualSeries(1, y), 5)
        assert r.best.T == ens.change_indices[i]
        assert slope_gap(r.best) == pytest.approx(ens.s[i], rel=1e-8)


def test_longer_series_smaller_gap():
    short = null_ensemble(AnnualSeries(1, gaussian_noise(70, 1.0, 1)), NullConfig(ensemble_size=200))
    long = null_ensemble(AnnualSeries(1, gaussian_noise(2000, 1.0, 1)), NullConfig(ensemble_size=200))
    assert long.s.mean() < short.s.mean()


def test_edge_thresholds_exceed_central():
    table = threshold_table(70, NullConfig(ensemble_size=2000, seed=3), 10)
    thr = table.thresholds
    edge = 0.5 * (thr[:5].mean() + thr[-5:].mean())
    centre = thr[table.thresholds.size // 2 - 2: table.thresholds.size // 2 + 3].mean()
    assert edge >= 0.9 * centre


def test_pooling_and_fallback():
    T = np.array([10] * 60 + [30] * 3)
    s = np.concatenate([np.linspace(0, 1, 60), [5.0, 5.0, 5.0]])
    thr, pooled, fb = _conditional_thresholds(T, s, 10, 34, 0.95, 5, 50)
    assert not fb.any()
    assert pooled[0] == 60  # first bin alone suffices
    assert pooled[-1] >= 50  # last bin pooled with neighbours
    thr, pooled, fb = _conditional_thresholds(T, s, 10, 34, 0.95, 5, 1000)
    assert fb.all() and np.all(thr == np.quantile(s, 0.95))


def test_noiseless_break_rejects():
    s = AnnualSeries(1, piecewise(70, 35, 0, 0, 0.04))
    r = test_change_point(s, NullConfig(ensemble_size=300))
    assert r.reject and r.s_obs == pytest.approx(0.04, rel=1e-9)
    assert r.threshold < r.s_obs


def test_result_fields_and_fallback_warning():
    s = AnnualSeries(1950, gaussian_noise(72, 0.5, 2))
    r = test_change_point(s, NullConfig(ensemble_size=300))
    assert r.reject == (r.s_obs > r.threshold)
    assert r.change_year_obs == scan_change_point(s).change_year
    d = r.to_dict()
    assert d["ensemble_size"] == 300 and d["bin_width"] == 5 and d["level"] == 0.95
    with pytest.warns(RuntimeWarning):
        r2 = test_change_point(s, NullConfig(ensemble_size=300, min_bin_samples=10_000))
    assert r2.unconditional_fallback


def test_monotone_in_statistic():
    table = threshold_table(70, NullConfig(ensemble_size=300), 10)
    thr = table.unit_threshold(35)
    flags = [s > thr for s in np.linspace(0, 2 * thr, 50)]
    assert flags == sorted(flags)


def test_arfima_null_estimates_d():
    from trendbreak.stochastic import arfima_noise
    s = AnnualSeries(1, arfima_noise(256, 0.3, 1.0, 6))
    r = test_change_point(s, NullConfig(ensemble_size=200, noise="arfima"))
    assert 0.0 < r.d_null < 0.49
    assert any("DFA" in n for n in r.notes)
