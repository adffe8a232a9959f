"""Pure numpy implementation of the fitting kernels.

Every function takes a 2-D float64 array ``x`` of shape ``(m, n)`` holding
``m`` independent series on the time grid t = 1..n, and works row by row.
The compiled module ``_ckernels`` exposes the same functions with the same
signatures; ``trendbreak.kernels`` picks one at import time.
"""
from __future__ import annotations

import numpy as np

BACKEND = "numpy"

_LD = np.longdouble
# rows per block when materialising (rows, change indices, n) residual cubes
_BLOCK_ELEMENTS = 4_000_000


def _center(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("kernel input must be 2-D (series, time)")
    offset = x.mean(axis=1)
    return x - offset[:, None], offset


def coefficient_polynomials(n, T):
    """Integer polynomial weights of the four data sums for a1, a2 and b2.

    Returns ``(w_a1, w_a2, w_b2, den_a1, den_a2, den_b2)``; each ``w_*`` has a
    trailing axis of length 4 ordered as (X1, X2, XT1, XT2). All entries are
    exact integers in float64 for n below ~1e5.
    """
    N = float(n)
    T = np.asarray(T, dtype=np.float64)
    D = 2 * N * T - N - 2 * T**2 + 2 * T + 1
    w_a1 = np.stack(
        [
            N**2 * T + N * T - T**3 + T,
            -2 * N * T**2 + 2 * N * T + 2 * T**3 - 3 * T**2 + T,
            -(N**2) - 2 * N * T + N + 3 * T**2 - 3 * T,
            3 * T**2 - 3 * T,
        ],
        axis=-1,
    )
    w_a2 = np.stack(
        [
            N**2 * T + N**2 - 2 * N * T**2 - N * T + N + T**3 - T,
            -2 * N**2 * T + N**2 + 4 * N * T**2 - 4 * N * T + N - 2 * T**3 + 3 * T**2 - T,
            -3 * N**2 + 6 * N * T - 3 * N - 3 * T**2 + 3 * T,
            4 * N * T - 2 * N - 3 * T**2 + 3 * T,
        ],
        axis=-1,
    )
    w_b2 = np.stack(
        [
            2 * N * T + 2 * N - 2 * T**2 - T + 1,
            -4 * N * T + 2 * N + 4 * T**2 - 4 * T + 1,
            -6 * N + 6 * T - 3,
            6 * T - 3,
        ],
        axis=-1,
    )
    den_a1 = N * T * (T - 1) * D / -6.0
    den_a2 = N * (N - T) * (N - T + 1) * D / 6.0
    den_b2 = N * D / -2.0
    return w_a1, w_a2, w_b2, den_a1, den_a2, den_b2


def _segment_sums(y, T):
    """Extended-precision (X1, X2, XT1, XT2) for each row of ``y`` and each T.

    ``T`` has shape (k,); the result has shape (m, k, 4).
    """
    m, n = y.shape
    t = np.arange(1, n + 1, dtype=_LD)
    cx = np.cumsum(y.astype(_LD), axis=1)
    ctx = np.cumsum(y.astype(_LD) * t, axis=1)
    X1 = cx[:, T - 1]
    XT1 = ctx[:, T - 1]
    X2 = cx[:, -1:] - X1
    # second-segment time runs t' = t - T
    XT2 = (ctx[:, -1:] - XT1) - T.astype(_LD) * X2
    return np.stack([X1, X2, XT1, XT2], axis=-1)


def _coefficients(y, T):
    """(a1, b1, a2, b2) of shape (m, k) each for centered rows ``y``."""
    n = y.shape[1]
    w_a1, w_a2, w_b2, den_a1, den_a2, den_b2 = coefficient_polynomials(n, T)
    S = _segment_sums(y, T)
    a1 = (S * w_a1.astype(_LD)).sum(axis=-1) / den_a1.astype(_LD)
    a2 = (S * w_a2.astype(_LD)).sum(axis=-1) / den_a2.astype(_LD)
    b2 = (S * w_b2.astype(_LD)).sum(axis=-1) / den_b2.astype(_LD)
    b1 = b2 - a1 * T.astype(_LD)
    return (a1.astype(np.float64), b1.astype(np.float64),
            a2.astype(np.float64), b2.astype(np.float64))


def _piecewise_rss(y, T, a1, b1, a2, b2):
    n = y.shape[1]
    t = np.arange(1, n + 1, dtype=np.float64)
    Tc = T.astype(np.float64)[..., None]
    first = a1[..., None] * t + b1[..., None]
    second = a2[..., None] * (t - Tc) + b2[..., None]
    pred = np.where(t <= Tc, first, second)
    resid = y[:, None, :] - pred
    return np.einsum("...i,...i->...", resid, resid)


def single_fit(x):
    """OLS line over t = 1..n for each row: (slope, intercept, rss)."""
    y, offset = _center(x)
    m, n = y.shape
    t = np.arange(1, n + 1, dtype=_LD)
    tbar = (n + 1) / 2.0
    stt = n * (n * n - 1) / 12.0
    slope = ((y.astype(_LD) * (t - tbar)).sum(axis=1) / stt).astype(np.float64)
    ybar = y.astype(_LD).mean(axis=1).astype(np.float64)
    intercept = ybar - slope * tbar
    tt = np.arange(1, n + 1, dtype=np.float64)
    resid = y - (slope[:, None] * tt + intercept[:, None])
    rss = np.einsum("ij,ij->i", resid, resid)
    return slope, intercept + offset, rss


def dual_fit(x, T):
    """Constrained two-segment fit of row i at change index T[i].

    Returns ``(coef, rss)`` with ``coef`` of shape (m, 4) ordered
    (a1, b1, a2, b2).
    """
    y, offset = _center(x)
    m, n = y.shape
    T = np.asarray(T, dtype=np.int64).reshape(m)
    coef = np.empty((m, 4))
    rss = np.empty(m)
    # group rows by change index so the prefix-sum path is reused
    for Tv in np.unique(T):
        rows = np.flatnonzero(T == Tv)
        Tk = np.array([Tv])
        a1, b1, a2, b2 = _coefficients(y[rows], Tk)
        rss[rows] = _piecewise_rss(y[rows], Tk, a1, b1, a2, b2)[:, 0]
        coef[rows] = np.column_stack([a1[:, 0], b1[:, 0], a2[:, 0], b2[:, 0]])
    coef[:, 1] += offset
    coef[:, 3] += offset
    return coef, rss


def dual_rss_curves(x, t_lo, t_hi):
    """RSS of the constrained fit at every T in [t_lo, t_hi] for each row."""
    y, _ = _center(x)
    m, n = y.shape
    T = np.arange(t_lo, t_hi + 1, dtype=np.int64)
    out = np.empty((m, T.size))
    block = max(1, _BLOCK_ELEMENTS // max(1, T.size * n))
    for start in range(0, m, block):
        yb = y[start:start + block]
        a1, b1, a2, b2 = _coefficients(yb, T)
        out[start:start + block] = _piecewise_rss(yb, T, a1, b1, a2, b2)
    return out
