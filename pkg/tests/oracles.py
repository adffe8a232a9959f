"""Independent reference implementations used only by the tests."""
from __future__ import annotations

from fractions import Fraction

import numpy as np


def lstsq_dual(x, T):
    """Constrained fit by substituting b2 = a1 T + b1 into an ordinary lstsq."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    t = np.arange(1, n + 1, dtype=np.float64)
    first = t <= T
    A = np.column_stack([np.where(first, t, T), np.ones(n), np.where(first, 0.0, t - T)])
    off = x.mean()
    (a1, b1, a2), *_ = np.linalg.lstsq(A, x - off, rcond=None)
    b1 += off
    return a1, b1, a2, a1 * T + b1


def normal_equations_line(x):
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    t = np.arange(1, n + 1, dtype=np.float64)
    M = np.array([[np.dot(t, t), t.sum()], [t.sum(), n]])
    slope, icpt = np.linalg.solve(M, [np.dot(t, x - x.mean()), 0.0])
    return slope, icpt + x.mean()


def printed_closed_form(x, T):
    """Coefficients from the published closed-form expressions, evaluated
    exactly in rational arithmetic (``x`` must hold integers or Fractions).

    The b1 expression is used with its garbled "4 T 2" term read as 4 T^2.
    """
    N = len(x)
    x = [Fraction(v) for v in x]
    X1 = sum(x[:T])
    X2 = sum(x[T:])
    XT1 = sum((t + 1) * v for t, v in enumerate(x[:T]))
    XT2 = sum((t + 1) * v for t, v in enumerate(x[T:]))
    a1 = Fraction(-6 * N**2 * T * X1 + 6 * N**2 * XT1 + 12 * N * T**2 * X2 - 6 * N * T * X1
                  - 12 * N * T * X2 + 12 * N * T * XT1 - 6 * N * XT1 + 6 * T**3 * X1
                  - 12 * T**3 * X2 + 18 * T**2 * X2 - 18 * T**2 * XT1 - 18 * T**2 * XT2
                  - 6 * T * X1 - 6 * T * X2 + 18 * T * XT1 + 18 * T * XT2) / (
        N * (2 * N * T**3 - 3 * N * T**2 + N * T - 2 * T**4 + 4 * T**3 - T**2 - T))
    a2 = Fraction(6 * N**2 * T * X1 - 12 * N**2 * T * X2 + 6 * N**2 * X1 + 6 * N**2 * X2
                  - 18 * N**2 * XT1 - 12 * N * T**2 * X1 + 24 * N * T**2 * X2 - 6 * N * T * X1
                  - 24 * N * T * X2 + 36 * N * T * XT1 + 24 * N * T * XT2 + 6 * N * X1
                  + 6 * N * X2 - 18 * N * XT1 - 12 * N * XT2 + 6 * T**3 * X1 - 12 * T**3 * X2
                  + 18 * T**2 * X2 - 18 * T**2 * XT1 - 18 * T**2 * XT2 - 6 * T * X1
                  - 6 * T * X2 + 18 * T * XT1 + 18 * T * XT2) / (
        N * (2 * N**3 * T - N**3 - 6 * N**2 * T**2 + 6 * N**2 * T + 6 * N * T**3
             - 9 * N * T**2 + N * T + N - 2 * T**4 + 4 * T**3 - T**2 - T))
    b1 = Fraction(6 * N**2 * T * X1 - 6 * N**2 * XT1 - 4 * N * T**2 * X1 - 4 * N * T**2 * X2
                  + 6 * N * T * X1 + 4 * N * X1 + 4 * N * X2 - 6 * N * XT1 - 2 * T**3 * X1
                  + 4 * T**3 * X2 - 2 * T**2 * X1 - 2 * T**2 * X2 + 6 * T**2 * XT1
                  + 6 * T**2 * XT2 + 2 * T * X1 - 4 * T * X2 + 2 * X1 + 2 * X2 - 6 * XT1
                  - 6 * XT2) / (
        N * (2 * N * T**2 - 3 * N * T + N - 2 * T**3 + 4 * T**2 - T - 1))
    b2 = Fraction(-4 * N * T * X1 + 8 * N * T * X2 - 4 * N * X1 - 4 * N * X2 + 12 * N * XT1
                  + 4 * T**2 * X1 - 8 * T**2 * X2 + 2 * T * X1 + 8 * T * X2 - 12 * T * XT1
                  - 12 * T * XT2 - 2 * X1 - 2 * X2 + 6 * XT1 + 6 * XT2) / (
        N * (2 * N * T - N - 2 * T**2 + 2 * T + 1))
    return a1, b1, a2, b2


def rel_err(a, b, scale):
    return abs(a - b) / max(abs(b), scale)
