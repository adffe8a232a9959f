from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from trendbreak import _pykernels, kernels

try:
    from trendbreak import _ckernels
except ImportError:
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def _data(rng, m=300, n=72, offset=280.0):
    return offset + np.cumsum(rng.normal(0, 0.3, (m, n)), axis=1)


@needs_ext
def test_backends_agree(rng):
    x = _data(rng)
    T = rng.integers(2, 71, size=x.shape[0])
    for a, b in zip(_ckernels.single_fit(x), _pykernels.single_fit(x)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    ca, cr = _ckernels.dual_fit(x, T)
    pa, pr = _pykernels.dual_fit(x, T)
    np.testing.assert_allclose(ca, pa, rtol=1e-11, atol=1e-11)
    np.testing.assert_allclose(cr, pr, rtol=1e-10)
    np.testing.assert_allclose(_ckernels.dual_rss_curves(x, 2, 70),
                               _pykernels.dual_rss_curves(x, 2, 70), rtol=1e-10)


@pytest.mark.parametrize("impl", [_pykernels, pytest.param(_ckernels, marks=needs_ext)])
def test_curves_match_pointwise_fits(impl, rng):
    x = _data(rng, m=5, n=30)
    curves = impl.dual_rss_curves(x, 3, 27)
    for T in range(3, 28):
        _, rss = impl.dual_fit(x, np.full(5, T))
        np.testing.assert_allclose(curves[:, T - 3], rss, rtol=1e-12)


@pytest.mark.parametrize("impl", [_pykernels, pytest.param(_ckernels, marks=needs_ext)])
def test_noiseless_rss_is_zero_at_truth(impl):
    t = np.arange(1, 51.0)
    x = np.where(t <= 20, 0.1 * t, 2.0 + 0.5 * (t - 20))[None, :] + 287.15
    curve = impl.dual_rss_curves(x, 2, 48)[0]
    assert curve[20 - 2] < 1e-18
    assert np.all(np.delete(curve, 18) > 1e-6)


def test_dispatch_exposes_backend():
    assert kernels.BACKEND in ("cython", "numpy")
    assert kernels.pure is _pykernels
    if _ckernels is not None:
        assert kernels.BACKEND == "cython"


def test_pure_switch_forces_numpy():
    env = dict(os.environ, TRENDBREAK_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import trendbreak; print(trendbreak.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_rejects_1d_input():
    with pytest.raises(ValueError):
        _pykernels.single_fit(np.arange(5.0))
