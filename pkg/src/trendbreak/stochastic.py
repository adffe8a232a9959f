"""Synthetic series: white and ARFIMA(0, d, 0) noise on piecewise trends.

Seeding: every generator takes ``seed`` (an int or ``numpy.random.SeedSequence``).
Ensemble member ``i`` of a run seeded with ``s`` draws from
``SeedSequence(s, spawn_key=(i,))``, so results do not depend on how members
are split across workers.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigError, DomainError
from .scan import DEFAULT_MARGIN, scan_batch, scan_bounds
from .segfit import AnnualSeries
from .selection import delta_bic_from_rss
from . import kernels

log = logging.getLogger(__name__)

MIN_TRUNCATION = 1000
CHUNK = 250


def member_seed(seed, index: int) -> np.random.SeedSequence:
    """Independent seed for ensemble member ``index``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (index,))
    return np.random.SeedSequence(int(seed), spawn_key=(int(index),))


def gaussian_noise(n: int, sigma: float, seed) -> np.ndarray:
    """i.i.d. N(0, sigma^2) values."""
    if n < 1:
        raise DomainError("n must be positive")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    return sigma * np.random.default_rng(seed).standard_normal(n)


def arfima_weights(d: float, length: int) -> np.ndarray:
    """MA weights of (1 - B)^(-d): psi_0 = 1, psi_j = psi_{j-1} (j - 1 + d) / j."""
    j = np.arange(1, length, dtype=np.float64)
    return np.concatenate([[1.0], np.cumprod((j - 1 + d) / j)])


def _check_d(d):
    if not -0.5 < d < 0.5:
        raise DomainError(f"memory parameter d={d} outside (-0.5, 0.5)")


def truncation_lags(n: int) -> int:
    return max(n, MIN_TRUNCATION)


def _arfima_from_normals(z, n, d, sigma):
    """Filter standard normals ``z`` (rows of length n + L) into ARFIMA paths.

    ``z[..., :n]`` are the in-sample innovations and ``z[..., n:]`` the
    pre-sample ones, so d = 0 reproduces plain white noise exactly.
    """
    if d == 0:
        return sigma * z[..., :n]
    L = z.shape[-1] - n
    psi = arfima_weights(d, L + 1)
    e = np.concatenate([z[..., n:], z[..., :n]], axis=-1)
    if e.ndim == 1:
        x = fftconvolve(e, psi)[L:L + n]
    else:
        x = fftconvolve(e, psi[None, :], axes=-1)[:, L:L + n]
    # marginal variance of the truncated MA is sum(psi^2)
    return x * (sigma / math.sqrt(float(np.dot(psi, psi))))


def arfima_noise(n: int, d: float, sigma: float, seed) -> np.ndarray:
    """ARFIMA(0, d, 0) path with marginal standard deviation ``sigma``.

    Uses the MA representation truncated at max(n, 1000) lags and rescales
    so that the theoretical variance of the truncated process is sigma^2.
    """
    _check_d(d)
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    L = truncation_lags(n)
    z = np.random.default_rng(seed).standard_normal(n + L)
    return _arfima_from_normals(z, n, d, sigma)


def noise_matrix(members, n: int, sigma: float, seed, kind: str = "white",
                 d: float = 0.0) -> np.ndarray:
    """Noise for several ensemble members, one row each.

    ``members`` is an iterable of member indices; row k uses
    :func:`member_seed` ``(seed, members[k])``.
    """
    members = list(members)
    if kind == "white":
        d = 0.0
    elif kind == "arfima":
        _check_d(d)
    else:
        raise ConfigError(f"unknown noise kind {kind!r}")
    extra = 0 if d == 0 else truncation_lags(n)
    z = np.empty((len(members), n + extra))
    for row, i in enumerate(members):
        z[row] = np.random.default_rng(member_seed(seed, i)).standard_normal(n + extra)
    return _arfima_from_normals(z, n, d, sigma)


@dataclass(frozen=True)
class SynthConfig:
    """Piecewise-linear trend plus noise.

    With ``change_index`` set, the trend is slope1 * (t - T*) up to T* and
    slope2 * (t - T*) after it (zero at T*). Without it the trend is
    slope1 * t.
    """

    n_years: int = 70
    change_index: int | None = 35
    slope1: float = 0.0
    slope2: float = 0.04
    sigma: float = 0.45
    noise: str = "white"
    d: float = 0.0
    seed: int = 0
    start_year: int = 1

    def __post_init__(self):
        if self.n_years < 3:
            raise ConfigError("n_years must be at least 3")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if self.noise not in ("white", "arfima"):
            raise ConfigError(f"unknown noise kind {self.noise!r}")
        if self.noise == "arfima" and not -0.5 < self.d < 0.5:
            raise ConfigError("arfima d must lie in (-0.5, 0.5)")
        if self.change_index is not None and not 1 <= self.change_index <= self.n_years:
            raise ConfigError("change_index outside the series")

    @property
    def hurst(self) -> float:
        return (self.d if self.noise == "arfima" else 0.0) + 0.5

    def trend(self) -> np.ndarray:
        t = np.arange(1, self.n_years + 1, dtype=np.float64)
        if self.change_index is None:
            return self.slope1 * t
        Tc = self.change_index
        return np.where(t <= Tc, self.slope1 * (t - Tc), self.slope2 * (t - Tc))


def synth_series(config: SynthConfig) -> AnnualSeries:
    """One realisation of ``config`` seeded by ``config.seed``."""
    if config.noise == "white":
        noise = gaussian_noise(config.n_years, config.sigma, config.seed)
    else:
        noise = arfima_noise(config.n_years, config.d, config.sigma, config.seed)
    return AnnualSeries(config.start_year, config.trend() + noise)


def synth_members(config: SynthConfig, members) -> np.ndarray:
    """Realisations for the given member indices, one per row."""
    noise = noise_matrix(members, config.n_years, config.sigma, config.seed,
                         config.noise, config.d)
    return config.trend()[None, :] + noise


@dataclass
class EnsembleSummary:
    config: SynthConfig
    members: int
    margin: int
    change_indices: np.ndarray
    delta_bic_single_minus_dual: np.ndarray
    slope_gap: np.ndarray
    reject: np.ndarray | None = None
    scan_range: tuple[int, int] = (0, 0)
    notes: list[str] = field(default_factory=list)

    @property
    def change_years(self) -> np.ndarray:
        return self.config.start_year + self.change_indices - 1

    def histogram(self) -> dict[int, int]:
        """Detected change year -> member count over the whole scanned range."""
        lo, hi = self.scan_range
        counts = np.bincount(self.change_indices - lo, minlength=hi - lo + 1)
        return {self.config.start_year + lo + k - 1: int(c) for k, c in enumerate(counts)}

    def fraction_within(self, years: int) -> float | None:
        if self.config.change_index is None:
            return None
        err = np.abs(self.change_indices - self.config.change_index)
        return float(np.mean(err <= years))

    @property
    def dual_fraction(self) -> float:
        return float(np.mean(self.delta_bic_single_minus_dual > 0))

    @property
    def selection_accuracy(self) -> float:
        """Fraction of members for which BIC picks the generating model."""
        if self.config.change_index is None:
            return 1.0 - self.dual_fraction
        return self.dual_fraction

    @property
    def rejection_fraction(self) -> float | None:
        return None if self.reject is None else float(np.mean(self.reject))

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "members": self.members,
            "margin": self.margin,
            "scan_range": list(self.scan_range),
            "fraction_within_5": self.fraction_within(5),
            "fraction_within_8": self.fraction_within(8),
            "dual_fraction": self.dual_fraction,
            "selection_accuracy": self.selection_accuracy,
            "rejection_fraction": self.rejection_fraction,
            "delta_bic_convention": "BIC_single - BIC_dual (positive favours two segments)",
            "histogram": {str(k): v for k, v in self.histogram().items()},
            "notes": list(self.notes),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, **kw)

    def member_rows(self):
        """Per-member records: (member, change_year, delta_bic_single_minus_dual, s[, reject])."""
        for i in range(self.members):
            row = [i, int(self.change_years[i]), float(self.delta_bic_single_minus_dual[i]),
                   float(self.slope_gap[i])]
            if self.reject is not None:
                row.append(bool(self.reject[i]))
            yield row


def _run_chunk(args):
    config, indices, margin = args
    x = synth_members(config, indices)
    n = config.n_years
    T_best, rss_curves, lo = scan_batch(x, margin)
    coef, rss_dual = kernels.dual_fit(x, T_best)
    _, _, rss_single = kernels.single_fit(x)
    scale = np.max(np.abs(x), axis=1)
    dbic = -delta_bic_from_rss(rss_dual, rss_single, n, scale)
    gap = np.abs(coef[:, 0] - coef[:, 2])
    return T_best, dbic, gap, rss_single


def map_chunks(fn, tasks, workers: int):
    """Ordered map over ``tasks``, in-process or on a process pool."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def ensemble_experiment(config: SynthConfig, members: int = 1000,
                        margin: int = DEFAULT_MARGIN, significance=None,
                        workers: int = 1) -> EnsembleSummary:
    """Scan and select on ``members`` realisations of ``config``.

    ``significance`` may be a :class:`trendbreak.sigtest.NullConfig`; each
    member is then also tested against the no-change null.
    """
    if members < 1:
        raise ConfigError("members must be positive")
    notes = []
    if members < 100:
        log.warning("ensemble of %d members is too small for stable fractions", members)
        notes.append(f"small ensemble ({members} members)")
    lo, hi = scan_bounds(config.n_years, margin)
    tasks = [(config, range(s, min(s + CHUNK, members)), margin)
             for s in range(0, members, CHUNK)]
    parts = map_chunks(_run_chunk, tasks, workers)
    T_best = np.concatenate([p[0] for p in parts])
    dbic = np.concatenate([p[1] for p in parts])
    gap = np.concatenate([p[2] for p in parts])
    reject = None
    if significance is not None:
        from .sigtest import threshold_table

        rss_single = np.concatenate([p[3] for p in parts])
        sigma_hat = np.sqrt(rss_single / (config.n_years - 2))
        table = threshold_table(config.n_years, significance, margin)
        reject = gap > sigma_hat * table.unit_threshold(T_best)
        notes.extend(table.notes)
    return EnsembleSummary(config, members, margin, T_best, dbic, gap, reject,
                           (lo, hi), notes)
