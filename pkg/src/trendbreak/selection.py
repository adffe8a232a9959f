"""Information criteria and the single- vs two-segment model choice.

Both criteria drop additive constants (AIC's c(N) is taken as zero), so only
differences between models fitted to the same series are meaningful.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .scan import ROUNDOFF_EPS, ScanResult
from .segfit import AnnualSeries, fit_single

K_SINGLE = 2
# slope, offset, second slope and the change time
K_DUAL = 4


@dataclass(frozen=True)
class ModelSelection:
    aic_single: float
    aic_dual: float
    bic_single: float
    bic_dual: float
    k_single: int = K_SINGLE
    k_dual: int = K_DUAL

    @property
    def delta_bic(self) -> float:
        """BIC(dual) - BIC(single); negative favours the two-segment model."""
        return _difference(self.bic_dual, self.bic_single)

    @property
    def delta_aic(self) -> float:
        return _difference(self.aic_dual, self.aic_single)

    @property
    def preferred(self) -> str:
        return "dual" if self.delta_bic < 0 else "single"


def _difference(a, b):
    # two perfect fits compare as equal, so the simpler model is kept
    if a == b == -math.inf:
        return 0.0
    return a - b


def floor_rss(rss, n, scale):
    """Map round-off-level residual sums to exactly zero.

    ``scale`` is the magnitude of the data; an rss below n * (64 eps scale)^2
    is indistinguishable from a perfect fit.
    """
    tiny = n * (ROUNDOFF_EPS * np.asarray(scale, dtype=np.float64)) ** 2
    rss = np.asarray(rss, dtype=np.float64)
    return np.where(rss <= tiny, 0.0, rss)


def information_criteria(rss, n, k):
    """Return ``(aic, bic)`` for a Gaussian least-squares fit.

    aic = n ln(rss/n) + 2k and bic = n ln(rss/n) + k ln(n). A perfect fit
    (rss == 0) gives -inf for both. Accepts scalars or arrays for ``rss``.
    """
    rss_arr = np.asarray(rss, dtype=np.float64)
    if np.any(rss_arr < 0) or np.any(np.isnan(rss_arr)):
        raise DomainError("rss must be non-negative")
    if n < 1 or k < 1:
        raise DomainError("n and k must be at least 1")
    with np.errstate(divide="ignore"):
        fit_term = n * np.log(rss_arr / n)
    aic = fit_term + 2 * k
    bic = fit_term + k * math.log(n)
    if aic.ndim == 0:
        return float(aic), float(bic)
    return aic, bic


def delta_bic_from_rss(rss_dual, rss_single, n, scale=None):
    """Vectorised BIC(dual) - BIC(single) for many series of length ``n``.

    When ``scale`` (per-series data magnitude) is given, round-off-level rss
    values are first treated as exact zeros.
    """
    if scale is not None:
        rss_dual = floor_rss(rss_dual, n, scale)
        rss_single = floor_rss(rss_single, n, scale)
    _, bd = information_criteria(rss_dual, n, K_DUAL)
    _, bs = information_criteria(rss_single, n, K_SINGLE)
    with np.errstate(invalid="ignore"):
        d = np.asarray(bd - bs, dtype=np.float64)
    return np.where(np.isnan(d), 0.0, d)


def select_model(series: AnnualSeries, scan_result: ScanResult) -> ModelSelection:
    """Compare the best two-segment fit of ``scan_result`` with a single line."""
    n = series.n
    single = fit_single(series)
    scale = float(np.max(np.abs(series.values)))
    rss_s = float(floor_rss(single.rss, n, scale))
    rss_d = float(floor_rss(scan_result.best.rss, n, scale))
    aic_s, bic_s = information_criteria(rss_s, n, K_SINGLE)
    aic_d, bic_d = information_criteria(rss_d, n, K_DUAL)
    return ModelSelection(aic_s, aic_d, bic_s, bic_d)
