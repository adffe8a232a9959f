from __future__ import annotations

import json

import numpy as np
import pytest

from trendbreak.errors import ConfigError, DomainError
from trendbreak.scan import scan_change_point
from trendbreak.stochastic import (
    SynthConfig,
    arfima_noise,
    arfima_weights,
    ensemble_experiment,
    gaussian_noise,
    member_seed,
    noise_matrix,
    synth_series,
)


class TestGaussian:
    def test_moments(self):
        z = gaussian_noise(100_000, 1.0, 7)
        assert abs(z.mean()) < 0.02 and abs(z.std() - 1) < 0.02

    def test_deterministic(self):
        np.testing.assert_array_equal(gaussian_noise(50, 0.45, 3), gaussian_noise(50, 0.45, 3))
        assert not np.array_equal(gaussian_noise(50, 0.45, 3), gaussian_noise(50, 0.45, 4))

    def test_ensemble_std(self):
        stds = [gaussian_noise(70, 0.45, member_seed(0, i)).std(ddof=1) for i in range(100)]
        assert np.mean(stds) == pytest.approx(0.45, abs=0.02)

    def test_bad_args(self):
        with pytest.raises(DomainError):
            gaussian_noise(0, 1.0, 0)
        with pytest.raises(DomainError):
            gaussian_noise(5, 0.0, 0)


class TestArfima:
    def test_weights(self):
        d = 0.3
        psi = arfima_weights(d, 5)
        assert psi[0] == 1 and psi[1] == pytest.approx(d)
        assert psi[2] == pytest.approx(d * (1 + d) / 2)
        np.testing.assert_array_equal(arfima_weights(0.0, 6), [1, 0, 0, 0, 0, 0])

    def test_d_zero_is_gaussian(self):
        np.testing.assert_array_equal(arfima_noise(300, 0.0, 0.7, 11), gaussian_noise(300, 0.7, 11))

    @pytest.mark.parametrize("d", [-0.5, 0.5, 0.7])
    def test_domain(self, d):
        with pytest.raises(DomainError):
            arfima_noise(10, d, 1.0, 0)

    def test_matrix_rows_match_members(self):
        m = noise_matrix([0, 5, 9], 64, 0.5, 42, "arfima", 0.2)
        for row, i in zip(m, [0, 5, 9]):
            np.testing.assert_allclose(row, arfima_noise(64, 0.2, 0.5, member_seed(42, i)),
                                       rtol=1e-12, atol=1e-14)

    def test_marginal_variance(self):
        m = noise_matrix(range(3000), 40, 1.0, 1, "arfima", 0.3)
        assert np.var(m[:, 20]) == pytest.approx(1.0, abs=0.08)

    def test_positive_lag1(self):
        m = noise_matrix(range(200), 256, 1.0, 2, "arfima", 0.2)
        m = m - m.mean(axis=1, keepdims=True)
        r1 = np.sum(m[:, 1:] * m[:, :-1], axis=1) / np.sum(m * m, axis=1)
        assert r1.mean() > 0.1


class TestSynth:
    def test_noiseless_recovery(self):
        s = synth_series(SynthConfig(sigma=1e-12))
        assert scan_change_point(s).best.T == 35

    def test_fig2a_geometry(self):
        tr = SynthConfig().trend()
        assert tr[34] == 0 and tr[-1] == pytest.approx(1.4)
        assert np.all(tr[:35] == 0)

    def test_no_break_is_pure_noise(self):
        cfg = SynthConfig(change_index=None, slope1=0.0, seed=5)
        np.testing.assert_array_equal(synth_series(cfg).values, gaussian_noise(70, 0.45, 5))

    def test_hurst(self):
        assert SynthConfig(noise="arfima", d=0.15).hurst == pytest.approx(0.65)

    @pytest.mark.parametrize("kw", [dict(sigma=0), dict(noise="arfima", d=0.5),
                                    dict(change_index=80), dict(noise="pink")])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SynthConfig(**kw)


class TestEnsemble:
    def test_histogram_and_fractions(self):
        e = ensemble_experiment(SynthConfig(), members=300)
        assert sum(e.histogram().values()) == 300
        for f in (e.fraction_within(5), e.fraction_within(8), e.dual_fraction):
            assert 0 <= f <= 1
        assert e.fraction_within(5) <= e.fraction_within(8)
        d = json.loads(e.to_json())
        assert d["members"] == 300 and "BIC_single - BIC_dual" in d["delta_bic_convention"]

    def test_independent_of_workers(self):
        cfg = SynthConfig(noise="arfima", d=0.15, seed=9)
        a = ensemble_experiment(cfg, members=520, workers=1)
        b = ensemble_experiment(cfg, members=520, workers=3)
        np.testing.assert_array_equal(a.change_indices, b.change_indices)
        np.testing.assert_array_equal(a.delta_bic_single_minus_dual, b.delta_bic_single_minus_dual)

    def test_single_member(self):
        e = ensemble_experiment(SynthConfig(), members=1)
        assert len(list(e.member_rows())) == 1
        assert any("small ensemble" in n for n in e.notes)

    def test_no_break_accuracy_counts_single(self):
        e = ensemble_experiment(SynthConfig(change_index=None, slope1=0.0), members=200)
        assert e.fraction_within(5) is None
        assert e.selection_accuracy == pytest.approx(1 - e.dual_fraction)

    def test_members_validation(self):
        with pytest.raises(ConfigError):
            ensemble_experiment(SynthConfig(), members=0)


def _ks(a, b):
    grid = np.union1d(a, b)
    ca = np.searchsorted(np.sort(a), grid, side="right") / a.size
    cb = np.searchsorted(np.sort(b), grid, side="right") / b.size
    return float(np.max(np.abs(ca - cb)))


@pytest.mark.slow
@pytest.mark.parametrize("d", [0.15, 0.3])
def test_long_memory_histograms_similar_to_white(d):
    white = ensemble_experiment(SynthConfig(), members=1000)
    lm = ensemble_experiment(SynthConfig(noise="arfima", d=d), members=1000)
    assert _ks(white.change_indices, lm.change_indices) < 0.15
