"""Exhaustive scan of the change index and extraction of competing minima."""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, SeriesLengthError
from .segfit import AnnualSeries, DualFit, fit_dual_at

__all__ = [
    "DEFAULT_MARGIN",
    "ScanResult",
    "scan_bounds",
    "scan_change_point",
    "scan_batch",
    "relative_minima",
]

DEFAULT_MARGIN = 10
TIE_RTOL = 1e-12
# rss below n * (ROUNDOFF_EPS * max|x|)^2 is indistinguishable from zero
ROUNDOFF_EPS = 64 * np.finfo(np.float64).eps


@dataclass(frozen=True)
class ScanResult:
    years: np.ndarray
    rmse: np.ndarray
    best: DualFit
    candidates: list[tuple[int, float]] = field(default_factory=list)
    margin: int = DEFAULT_MARGIN

    @property
    def rmse_curve(self) -> dict[int, float]:
        return {int(y): float(r) for y, r in zip(self.years, self.rmse)}

    @property
    def change_year(self) -> int:
        return self.best.change_year


def scan_bounds(n: int, margin: int) -> tuple[int, int]:
    """Inclusive range of change indices scanned for a length-``n`` series.

    ``margin`` years are excluded at each end; the range never extends past
    [2, n - 2], where both segment slopes are defined.
    """
    if margin < 0:
        raise ConfigError("margin must be non-negative")
    if n < 2 * margin + 1:
        raise SeriesLengthError(f"series of length {n} too short for margin {margin}")
    lo, hi = max(margin, 2), min(n - margin, n - 2)
    if lo > hi:
        raise SeriesLengthError(f"no admissible change index for N={n}, margin={margin}")
    return lo, hi


def _pick(values, tie_break):
    """Index of the minimum, resolving near-ties (1e-12 relative) by position."""
    vmin = values.min(axis=-1, keepdims=True)
    near = values <= vmin + TIE_RTOL * np.abs(vmin)
    if tie_break == "earliest":
        return np.argmax(near, axis=-1)
    if tie_break == "latest":
        return values.shape[-1] - 1 - np.argmax(near[..., ::-1], axis=-1)
    raise ConfigError(f"tie_break must be 'earliest' or 'latest', not {tie_break!r}")


def scan_batch(x, margin: int = DEFAULT_MARGIN, tie_break: str = "earliest"):
    """Scan many equal-length series at once.

    Parameters
    ----------
    x : array, shape (m, n)
        One series per row on t = 1..n.

    Returns
    -------
    T_best : int array (m,)
        Optimal change index per row.
    rss : array (m, k)
        RSS curve over the scanned indices ``lo..hi`` (see :func:`scan_bounds`).
        Values at round-off level for the data magnitude are set to 0, so
        perfect fits at several indices tie exactly.
    lo : int
        Change index of column 0 of ``rss``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[1]
    lo, hi = scan_bounds(n, margin)
    rss = kernels.dual_rss_curves(x, lo, hi)
    scale = np.max(np.abs(x), axis=1, keepdims=True)
    rss = np.where(rss <= n * (ROUNDOFF_EPS * scale) ** 2, 0.0, rss)
    return _pick(rss, tie_break) + lo, rss, lo


def _as_curve(rmse_curve):
    if isinstance(rmse_curve, Mapping):
        items = sorted(rmse_curve.items())
        years = np.array([k for k, _ in items], dtype=np.int64)
        values = np.array([v for _, v in items], dtype=np.float64)
    else:
        years, values = rmse_curve
        years = np.asarray(years, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
    return years, values


def relative_minima(rmse_curve, closeness_factor: float = 1.02,
                    tie_break: str = "earliest") -> list[tuple[int, float]]:
    """Strict local minima of an RMSE curve close to the global minimum.

    ``rmse_curve`` is a mapping year -> rmse or a ``(years, values)`` pair.
    A run of equal values counts as one minimum, reported at its leftmost
    year. Only minima with rmse <= ``closeness_factor`` * global minimum are
    kept; the global minimum is always included, even at the curve's edge.
    The result is sorted by rmse, then year.
    """
    years, v = _as_curve(rmse_curve)
    if v.size == 0:
        return []
    g = int(_pick(v, tie_break))
    vmin = v[g]
    limit = closeness_factor * vmin

    def same(a, b):
        return abs(a - b) <= TIE_RTOL * max(abs(a), abs(b))

    found = {}
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and same(v[j + 1], v[i]):
            j += 1
        interior = i > 0 and j < v.size - 1
        if interior and v[i - 1] > v[i] and v[j + 1] > v[i] and v[i] <= limit:
            found[i] = (i, j)
        i = j + 1
    # the run holding the global minimum is represented by the chosen index
    for start, (i0, j0) in list(found.items()):
        if i0 <= g <= j0:
            del found[start]
    out = [(int(years[k]), float(v[k])) for k in found]
    out.append((int(years[g]), float(vmin)))
    out.sort(key=lambda c: (c[1], c[0]))
    return out


def scan_change_point(series: AnnualSeries, margin: int = DEFAULT_MARGIN,
                      closeness_factor: float = 1.02,
                      tie_break: str = "earliest") -> ScanResult:
    """Fit the two-segment model at every admissible change index.

    Change indices run from ``margin`` to ``N - margin`` (clamped to
    [2, N - 2]); the best fit minimises the overall RMSE, with near-ties
    going to the earliest index unless ``tie_break="latest"``.
    """
    T_best, rss, lo = scan_batch(series.values[None, :], margin, tie_break)
    n = series.n
    rmse = np.sqrt(rss[0] / n)
    years = series.start_year + np.arange(lo, lo + rmse.size) - 1
    best = fit_dual_at(series, int(T_best[0]))
    candidates = relative_minima((years, rmse), closeness_factor, tie_break)
    return ScanResult(years, rmse, best, candidates, margin)
