# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled fitting kernels; same contract as ``_pykernels``."""
import numpy as np

BACKEND = "cython"

ctypedef long double ld


cdef inline void _coefs(ld X1, ld X2, ld XT1, ld XT2, double N, double T,
                        double *a1, double *b1, double *a2, double *b2) noexcept nogil:
    cdef double D = 2 * N * T - N - 2 * T * T + 2 * T + 1
    cdef double T2 = T * T
    cdef double T3 = T2 * T
    cdef double N2 = N * N
    cdef ld na1, na2, nb2, ra1, rb2
    na1 = ((N2 * T + N * T - T3 + T) * X1
           + (-2 * N * T2 + 2 * N * T + 2 * T3 - 3 * T2 + T) * X2
           + (-N2 - 2 * N * T + N + 3 * T2 - 3 * T) * XT1
           + (3 * T2 - 3 * T) * XT2)
    na2 = ((N2 * T + N2 - 2 * N * T2 - N * T + N + T3 - T) * X1
           + (-2 * N2 * T + N2 + 4 * N * T2 - 4 * N * T + N - 2 * T3 + 3 * T2 - T) * X2
           + (-3 * N2 + 6 * N * T - 3 * N - 3 * T2 + 3 * T) * XT1
           + (4 * N * T - 2 * N - 3 * T2 + 3 * T) * XT2)
    nb2 = ((2 * N * T + 2 * N - 2 * T2 - T + 1) * X1
           + (-4 * N * T + 2 * N + 4 * T2 - 4 * T + 1) * X2
           + (-6 * N + 6 * T - 3) * XT1
           + (6 * T - 3) * XT2)
    ra1 = na1 / <ld>(N * T * (T - 1) * D / -6.0)
    rb2 = nb2 / <ld>(N * D / -2.0)
    a1[0] = <double>ra1
    a2[0] = <double>(na2 / <ld>(N * (N - T) * (N - T + 1) * D / 6.0))
    b2[0] = <double>rb2
    b1[0] = <double>(rb2 - ra1 * <ld>T)


cdef inline double _rss(const double[::1] y, Py_ssize_t n, Py_ssize_t T,
                        double a1, double b1, double a2, double b2) noexcept nogil:
    cdef double acc = 0.0, r
    cdef Py_ssize_t i
    for i in range(T):
        r = y[i] - (a1 * (i + 1) + b1)
        acc += r * r
    for i in range(T, n):
        r = y[i] - (a2 * (i + 1 - T) + b2)
        acc += r * r
    return acc


def _center(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("kernel input must be 2-D (series, time)")
    offset = x.mean(axis=1)
    return x - offset[:, None], offset


def single_fit(x):
    """OLS line over t = 1..n for each row: (slope, intercept, rss)."""
    y_arr, offset = _center(x)
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1], i, j
    slope_arr = np.empty(m)
    icpt_arr = np.empty(m)
    rss_arr = np.empty(m)
    cdef double[::1] slope = slope_arr, icpt = icpt_arr, rss = rss_arr
    cdef double tbar = (n + 1) / 2.0
    cdef double stt = n * (<double>n * n - 1) / 12.0
    cdef ld sy, sty
    cdef double s, c, acc, r
    with nogil:
        for i in range(m):
            sy = 0
            sty = 0
            for j in range(n):
                sy += y[i, j]
                sty += y[i, j] * (j + 1 - tbar)
            s = <double>(sty / stt)
            c = <double>(sy / n) - s * tbar
            acc = 0.0
            for j in range(n):
                r = y[i, j] - (s * (j + 1) + c)
                acc += r * r
            slope[i] = s
            icpt[i] = c
            rss[i] = acc
    return slope_arr, icpt_arr + offset, rss_arr


def dual_fit(x, T):
    """Constrained two-segment fit of row i at change index T[i]."""
    y_arr, offset = _center(x)
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1], i, j, Ti
    cdef long long[::1] Tv = np.ascontiguousarray(T, dtype=np.int64).reshape(m)
    coef_arr = np.empty((m, 4))
    rss_arr = np.empty(m)
    cdef double[:, ::1] coef = coef_arr
    cdef double[::1] rss = rss_arr
    cdef ld X1, X2, XT1, XT2, Xt, XTt
    cdef double a1, b1, a2, b2
    with nogil:
        for i in range(m):
            Ti = Tv[i]
            X1 = 0
            XT1 = 0
            Xt = 0
            XTt = 0
            for j in range(n):
                Xt += y[i, j]
                XTt += <ld>y[i, j] * (j + 1)
                if j + 1 == Ti:
                    X1 = Xt
                    XT1 = XTt
            X2 = Xt - X1
            XT2 = (XTt - XT1) - <ld>Ti * X2
            _coefs(X1, X2, XT1, XT2, <double>n, <double>Ti, &a1, &b1, &a2, &b2)
            rss[i] = _rss(y[i], n, Ti, a1, b1, a2, b2)
            coef[i, 0] = a1
            coef[i, 1] = b1
            coef[i, 2] = a2
            coef[i, 3] = b2
    coef_arr[:, 1] += offset
    coef_arr[:, 3] += offset
    return coef_arr, rss_arr


def dual_rss_curves(x, Py_ssize_t t_lo, Py_ssize_t t_hi):
    """RSS of the constrained fit at every T in [t_lo, t_hi] for each row."""
    y_arr, _ = _center(x)
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1], i, j, Ti, k = t_hi - t_lo + 1
    out_arr = np.empty((m, k))
    cdef double[:, ::1] out = out_arr
    cx_arr = np.empty(n, dtype=np.longdouble)
    ctx_arr = np.empty(n, dtype=np.longdouble)
    cdef ld[::1] cx = cx_arr, ctx = ctx_arr
    cdef ld X1, X2, XT1, XT2, acc, acct
    cdef double a1, b1, a2, b2
    with nogil:
        for i in range(m):
            acc = 0
            acct = 0
            for j in range(n):
                acc += y[i, j]
                acct += <ld>y[i, j] * (j + 1)
                cx[j] = acc
                ctx[j] = acct
            for Ti in range(t_lo, t_hi + 1):
                X1 = cx[Ti - 1]
                XT1 = ctx[Ti - 1]
                X2 = cx[n - 1] - X1
                XT2 = (ctx[n - 1] - XT1) - <ld>Ti * X2
                _coefs(X1, X2, XT1, XT2, <double>n, <double>Ti, &a1, &b1, &a2, &b2)
                out[i, Ti - t_lo] = _rss(y[i], n, Ti, a1, b1, a2, b2)
    return out_arr
