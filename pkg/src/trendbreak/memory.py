"""Long-memory estimation and trend uncertainty under correlated noise.

The variance of a least-squares trend fitted to N points of a process with
variance sigma2, short-range parameter phi and memory parameter d is taken
as sigma2 * f(phi, d) * N**(2d - 3), with

    f(phi, d) = (1 + phi) / ((1 - phi) (2 F(1, d; 1 - d; phi) - 1))
                * 36 (1 - 2d) Gamma(1 - d) / ((1 + 2d) (3 + 2d) Gamma(1 + d))

where F is the Gauss hypergeometric function. Writing d*Gamma(d) as
Gamma(1 + d) keeps the white-noise limit d = 0 regular (f(0, 0) = 12).
The relation is asymptotic in N; error bars built on it are too.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DomainError, EstimationError, SeriesLengthError
from .segfit import AnnualSeries, fit_single

__all__ = [
    "AccuracyWarning",
    "MemoryParams",
    "TrendWindow",
    "DFAResult",
    "gamma_function",
    "hyp2f1_1d",
    "f_factor",
    "trend_variance",
    "dfa_estimate",
    "default_scales",
    "gl_weights",
    "gl_fractional_diff",
    "estimate_phi",
    "estimate_memory",
    "moving_window_trends",
]

D_CLAMP = 0.49
PHI_CLAMP = 0.999


class AccuracyWarning(UserWarning):
    """A series evaluation stopped before reaching its tolerance."""


@dataclass(frozen=True)
class MemoryParams:
    d: float
    phi: float
    sigma2: float
    notes: list[str] = field(default_factory=list, compare=False)

    def __post_init__(self):
        if not -0.5 < self.d < 0.5:
            raise DomainError(f"d={self.d} outside (-0.5, 0.5)")
        if not -1 < self.phi < 1:
            raise DomainError(f"phi={self.phi} outside (-1, 1)")
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")

    @property
    def hurst(self) -> float:
        return self.d + 0.5


@dataclass(frozen=True)
class TrendWindow:
    center_year: float
    window_length: int
    slope: float
    sigma_slope: float


def gamma_function(x: float) -> float:
    """Gamma(x); raises :class:`DomainError` at the poles 0, -1, -2, ..."""
    if x <= 0 and float(x).is_integer():
        raise DomainError(f"Gamma has a pole at {x}")
    return math.gamma(x)


def hyp2f1_1d(d: float, phi: float, *, tol: float = 1e-15, max_terms: int = 10_000_000,
              full_output: bool = False):
    """Gauss hypergeometric 2F1(1, d; 1 - d; phi) by direct power series.

    The n-th term is phi**n (d)_n / (1 - d)_n. Terms are generated in blocks
    and summed until one falls below ``tol`` relative to the running sum.
    Convergence is geometric with ratio ``phi``, so values near |phi| = 1 take
    many terms; if ``max_terms`` is reached an :class:`AccuracyWarning` is
    issued. With ``full_output`` returns ``(value, converged, n_terms)``.
    """
    if not abs(phi) < 1:
        raise DomainError("|phi| must be below 1")
    c = 1.0 - d
    if c <= 0 and float(c).is_integer():
        raise DomainError(f"1 - d = {c} is a pole of 2F1")
    if d == 0 or phi == 0:
        return (1.0, True, 1) if full_output else 1.0
    block = 512
    partials = []
    term = 1.0
    total = 1.0
    k0 = 0
    converged = False
    while k0 < max_terms:
        k = np.arange(k0, k0 + block, dtype=np.float64)
        terms = term * np.cumprod(phi * (d + k) / (c + k))
        bsum = float(terms.sum())
        partials.append(bsum)
        total = 1.0 + math.fsum(partials)
        small = np.abs(terms) < tol * abs(total)
        term = float(terms[-1])
        k0 += block
        if small[-1] and abs(phi * (d + k0) / (c + k0)) < 1:
            converged = True
            break
        if term == 0.0:
            converged = True
            break
        block = min(block * 2, 65536)
    if not converged:
        warnings.warn(f"2F1 series not converged after {k0} terms (phi={phi})",
                      AccuracyWarning, stacklevel=2)
    return (total, converged, k0) if full_output else total


def _check_params(phi, d):
    if not abs(phi) < 1:
        raise DomainError(f"phi={phi} outside (-1, 1)")
    if not -0.5 < d < 0.5:
        raise DomainError(f"d={d} outside (-0.5, 0.5)")


def f_factor(phi: float, d: float) -> float:
    """Prefactor f(phi, d) of the least-squares trend variance."""
    _check_params(phi, d)
    F = hyp2f1_1d(d, phi)
    short = (1 + phi) / ((1 - phi) * (2 * F - 1))
    memory = (36 * (1 - 2 * d) * gamma_function(1 - d)
              / ((1 + 2 * d) * (3 + 2 * d) * gamma_function(1 + d)))
    value = short * memory
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"f(phi={phi}, d={d}) is not finite and positive")
    return value


def trend_variance(sigma2: float, phi: float, d: float, n: int) -> float:
    """Variance of a least-squares slope over ``n`` points (unit/year)^2."""
    if n < 3:
        raise SeriesLengthError("trend variance needs n >= 3")
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    return sigma2 * f_factor(phi, d) * float(n) ** (2 * d - 3)


@dataclass(frozen=True)
class DFAResult:
    hurst: float
    scales: np.ndarray
    fluctuation: np.ndarray
    intercept: float
    r_squared: float
    order: int

    @property
    def d(self) -> float:
        return self.hurst - 0.5


def default_scales(n: int, min_scale: int = 4, per_octave: int = 4,
                   min_count: int = 10) -> np.ndarray:
    """Integer window sizes log2-spaced over [min_scale, n // 4]."""
    hi = n // 4
    if hi < min_scale:
        return np.array([], dtype=np.int64)
    octaves = math.log2(hi / min_scale)
    count = max(min_count, int(round(octaves * per_octave)) + 1)
    s = np.unique(np.round(np.exp2(np.linspace(math.log2(min_scale), math.log2(hi), count))))
    return s.astype(np.int64)


def _fluctuation(profile, s, order):
    n = profile.size
    k = n // s
    t = np.arange(s, dtype=np.float64)
    t = (t - t.mean()) / s
    V = np.vander(t, order + 1)
    proj = V @ np.linalg.pinv(V)
    # windows from both ends so the tail is not discarded
    segs = np.concatenate([profile[:k * s].reshape(k, s),
                           profile[n - k * s:].reshape(k, s)])
    resid = segs - segs @ proj.T
    return math.sqrt(float(np.mean(resid * resid)))


def dfa_estimate(x, order: int = 1, scales=None) -> DFAResult:
    """Detrended fluctuation analysis.

    The mean-removed cumulative sum is cut into non-overlapping windows of
    each scale s (taken from both ends of the record), a polynomial of degree
    ``order`` is removed per window, and F(s) is the root-mean-square of the
    remainder. The Hurst exponent is the least-squares slope of log F against
    log s; ``result.d = hurst - 1/2``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if scales is None:
        scales = default_scales(x.size)
    scales = np.unique(np.asarray(scales, dtype=np.int64))
    scales = scales[(scales >= order + 2) & (scales <= x.size // 2)]
    if scales.size < 4:
        raise EstimationError(f"DFA needs at least 4 usable scales, got {scales.size}")
    profile = np.cumsum(x - x.mean())
    F = np.array([_fluctuation(profile, int(s), order) for s in scales])
    if np.any(F <= 0):
        raise DegenerateInputError("zero fluctuation; series has no variability")
    ls, lf = np.log(scales), np.log(F)
    slope, intercept = np.polyfit(ls, lf, 1)
    pred = slope * ls + intercept
    ss_tot = float(np.sum((lf - lf.mean()) ** 2))
    r2 = 1.0 - float(np.sum((lf - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return DFAResult(float(slope), scales, F, float(intercept), r2, order)


def gl_weights(d: float, length: int) -> np.ndarray:
    """Binomial weights of (1 - B)^d: w_0 = 1, w_j = w_{j-1} (j - 1 - d) / j."""
    j = np.arange(1, length, dtype=np.float64)
    return np.concatenate([[1.0], np.cumprod((j - 1 - d) / j)])


def gl_fractional_diff(x, d: float) -> np.ndarray:
    """Grünwald-Letnikov fractional difference y_t = sum_{j<t} w_j x_{t-j}.

    No pre-sample values are assumed, so the sum is truncated at the start
    of the record.
    """
    if not 0 <= d <= 1:
        raise DomainError("fractional difference order must lie in [0, 1]")
    x = np.asarray(x, dtype=np.float64).ravel()
    w = gl_weights(d, x.size)
    return np.convolve(x, w)[:x.size]


def estimate_phi(x, d: float) -> float:
    """Lag-1 autocorrelation of the mean-removed fractional difference of ``x``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 30:
        raise SeriesLengthError("phi estimation needs at least 30 values")
    y = gl_fractional_diff(x, d)
    y = y - y.mean()
    denom = float(np.dot(y, y))
    if denom <= 0:
        raise DegenerateInputError("series has zero variance")
    r1 = float(np.dot(y[:-1], y[1:])) / denom
    return float(np.clip(r1, -PHI_CLAMP, PHI_CLAMP))


def estimate_memory(series: AnnualSeries, order: int = 1, scales=None) -> MemoryParams:
    """d, phi and variance from the residuals of a single-line fit.

    d comes from DFA (clamped to +-0.49); phi is the lag-1 autocorrelation
    after Grünwald-Letnikov differencing by max(d, 0).
    """
    fit = fit_single(series)
    t = np.arange(1, series.n + 1)
    resid = series.values - fit.predict(t)
    notes = [f"residuals of single-line fit over {series.start_year}-{series.end_year}"]
    dfa = dfa_estimate(resid, order=order, scales=scales)
    d = dfa.d
    notes.append(f"DFA order {order}, scales {int(dfa.scales[0])}-{int(dfa.scales[-1])}, "
                 f"{dfa.scales.size} scales, H={dfa.hurst:.4f}")
    if abs(d) > D_CLAMP:
        notes.append(f"d={d:.4f} clamped to +-{D_CLAMP}")
        d = float(np.clip(d, -D_CLAMP, D_CLAMP))
    d_diff = max(d, 0.0)
    phi = estimate_phi(resid, d_diff)
    notes.append(f"phi from lag-1 autocorrelation after differencing by d={d_diff:.4f}")
    sigma2 = float(np.var(resid, ddof=2))
    if sigma2 <= 0:
        raise DegenerateInputError("residual variance is zero")
    return MemoryParams(float(d), phi, sigma2, notes)


def moving_window_trends(series: AnnualSeries, window_length: int,
                         params: MemoryParams | None = None) -> list[TrendWindow]:
    """OLS slopes on every full window (stride 1) with their standard errors.

    The error of each slope is sqrt(trend_variance(s2, phi, d, L)) where s2 is
    the unbiased residual variance inside the window and (phi, d) are taken
    from ``params`` or estimated once from the whole series.
    """
    L = int(window_length)
    n = series.n
    if L > n:
        raise SeriesLengthError(f"window of {L} years longer than series ({n})")
    if L < 3:
        raise SeriesLengthError("windows need at least 3 years")
    if params is None:
        params = estimate_memory(series)
    from numpy.lib.stride_tricks import sliding_window_view

    from . import kernels

    win = sliding_window_view(series.values, L)
    slope, _, rss = kernels.single_fit(win)
    factor = f_factor(params.phi, params.d) * float(L) ** (2 * params.d - 3)
    s2 = rss / (L - 2)
    sig = np.sqrt(s2 * factor)
    centers = series.start_year + np.arange(win.shape[0]) + (L - 1) / 2.0
    return [TrendWindow(float(c), L, float(m), float(s)) for c, m, s in zip(centers, slope, sig)]
