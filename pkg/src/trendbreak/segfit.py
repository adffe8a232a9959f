"""Single-line and continuous two-segment least-squares fits.

Time runs t = 1..N with t = 1 at ``start_year``. The two-segment model is

    x_t ~ a1 * t + b1               for t <= T
    x_t ~ a2 * (t - T) + b2         for t >  T

with the continuity constraint a1 * T + b1 = b2, so ``b1`` is the first
segment's value at t = 0 and ``b2`` the common value at the change index T.
The first segment owns the point t = T.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, InternalError, SeriesLengthError

__all__ = [
    "AnnualSeries",
    "LinearFit",
    "DualFit",
    "fit_single",
    "fit_dual_at",
    "solve_constraint_system",
]


@dataclass(frozen=True)
class AnnualSeries:
    """Contiguous, complete annual values starting at ``start_year``."""

    start_year: int
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True).ravel()
        if v.size < 3:
            raise SeriesLengthError(f"series needs at least 3 values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise DomainError("series contains missing or non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "start_year", int(self.start_year))

    def __len__(self):
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.start_year + self.n)

    @property
    def end_year(self) -> int:
        return self.start_year + self.n - 1

    def window(self, first_year: int, last_year: int) -> "AnnualSeries":
        """Sub-series covering ``first_year..last_year`` inclusive."""
        i0 = first_year - self.start_year
        i1 = last_year - self.start_year + 1
        if i0 < 0 or i1 > self.n or i1 <= i0:
            raise DomainError(
                f"window {first_year}-{last_year} outside {self.start_year}-{self.end_year}"
            )
        return AnnualSeries(first_year, self.values[i0:i1])

    @classmethod
    def from_pairs(cls, years, values) -> "AnnualSeries":
        """Build from explicit (year, value) columns; years must be contiguous."""
        years = np.asarray(years, dtype=np.int64)
        order = np.argsort(years, kind="stable")
        years = years[order]
        if years.size and np.any(np.diff(years) != 1):
            raise DomainError("years are not contiguous")
        return cls(int(years[0]), np.asarray(values, dtype=np.float64)[order])


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    rss: float
    n: int

    @property
    def rmse(self) -> float:
        return float(np.sqrt(self.rss / self.n))

    def predict(self, t):
        return self.slope * np.asarray(t, dtype=np.float64) + self.intercept


@dataclass(frozen=True)
class DualFit:
    """Continuous two-segment fit at a fixed change index ``T``."""

    T: int
    start_year: int
    a1: float
    b1: float
    a2: float
    b2: float
    rss: float
    n: int

    @property
    def change_index(self) -> int:
        return self.T

    @property
    def change_year(self) -> int:
        return self.start_year + self.T - 1

    @property
    def rmse(self) -> float:
        return float(np.sqrt(self.rss / self.n))

    @property
    def continuity_residual(self) -> float:
        """Relative mismatch of the two segments at T."""
        scale = max(abs(self.b2), abs(self.a1 * self.T), abs(self.b1), 1.0)
        return abs(self.a1 * self.T + self.b1 - self.b2) / scale

    def predict(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.where(t <= self.T, self.a1 * t + self.b1,
                        self.a2 * (t - self.T) + self.b2)


def _check_T(n, T):
    if not 2 <= T <= n - 2:
        raise DomainError(f"change index {T} outside [2, {n - 2}] for N={n}")


def fit_single(series: AnnualSeries) -> LinearFit:
    """Ordinary least-squares line over t = 1..N."""
    n = series.n
    if n < 2:
        raise SeriesLengthError("a line needs at least 2 points")
    slope, intercept, rss = kernels.single_fit(series.values[None, :])
    return LinearFit(float(slope[0]), float(intercept[0]), float(rss[0]), n)


def fit_dual_at(series: AnnualSeries, T: int) -> DualFit:
    """Closed-form constrained two-segment fit at change index ``T``.

    Requires 2 <= T <= N - 2 so that both slopes are determined.
    """
    n = series.n
    T = int(T)
    _check_T(n, T)
    coef, rss = kernels.dual_fit(series.values[None, :], np.array([T]))
    a1, b1, a2, b2 = (float(c) for c in coef[0])
    if not np.all(np.isfinite(coef)):
        raise InternalError(f"degenerate closed form at T={T}, N={n}")
    return DualFit(T, series.start_year, a1, b1, a2, b2, float(rss[0]), n)


def solve_constraint_system(series: AnnualSeries, T: int, return_multiplier: bool = False):
    """Solve the five stationarity equations of the constrained fit directly.

    Unknowns are (a1, b1, a2, b2, lam) where ``lam`` is the rescaled Lagrange
    multiplier (minus one half of the multiplier on a1*T + b1 - b2). This is
    a generic dense solve intended as an independent check on
    :func:`fit_dual_at`; with ``return_multiplier`` the pair
    ``(fit, lam)`` is returned.
    """
    n = series.n
    T = int(T)
    _check_T(n, T)
    # the fit is shift-equivariant; solving for centered data keeps the
    # dense system well scaled when values carry a large offset (e.g. kelvin)
    offset = float(series.values.mean())
    x = (series.values - offset).astype(np.longdouble)
    t = np.arange(1, n + 1, dtype=np.longdouble)
    m = n - T
    tp = np.arange(1, m + 1, dtype=np.longdouble)
    X1 = x[:T].sum()
    XT1 = (t[:T] * x[:T]).sum()
    X2 = x[T:].sum()
    XT2 = (tp * x[T:]).sum()
    s1, q1 = T * (T + 1) / 2, T * (T + 1) * (T + 0.5) / 3
    s2, q2 = m * (m + 1) / 2, m * (m + 1) * (m + 0.5) / 3
    # rows: d/da1, d/db1, d/da2, d/db2, continuity; columns a1, b1, a2, b2, lam
    A = np.array(
        [
            [q1, s1, 0, 0, -T],
            [s1, T, 0, 0, -1],
            [0, 0, q2, s2, 0],
            [0, 0, s2, m, 1],
            [T, 1, 0, -1, 0],
        ],
        dtype=np.float64,
    )
    rhs_ext = np.array([XT1, X1, XT2, X2, 0.0], dtype=np.longdouble)
    try:
        sol = np.linalg.solve(A, rhs_ext.astype(np.float64))
        # one step of iterative refinement with an extended-precision residual
        resid = rhs_ext - A.astype(np.longdouble) @ sol.astype(np.longdouble)
        sol = sol + np.linalg.solve(A, resid.astype(np.float64))
    except np.linalg.LinAlgError as exc:
        raise InternalError(f"singular stationarity system at T={T}") from exc
    a1, b1, a2, b2, lam = (float(v) for v in sol)
    pred = np.where(t <= T, a1 * t + b1, a2 * (t - T) + b2)
    rss = float(((x - pred) ** 2).sum())
    fit = DualFit(T, series.start_year, a1, b1 + offset, a2, b2 + offset, rss, n)
    if return_multiplier:
        return fit, lam
    return fit
