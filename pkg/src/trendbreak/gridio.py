"""Gridded annual temperature data: ingestion, global means and batch analysis.

Grid CSV
    Header ``lat,lon,land,year,value``; one row per cell and year. ``land`` is
    0 or 1; an empty ``value`` (or ``nan``) marks a missing year.

Packed binary (little-endian)
    ``b"TBGRID1\\0"``, u32 n_lat, u32 n_lon, u32 n_years, i32 start_year,
    f64 lats[n_lat], f64 lons[n_lon], u8 mask[n_lat*n_lon],
    f64 values[n_lat, n_lon, n_years]; NaN marks a missing value.

Results CSV
    ``lat,lon,change_year,a1,a2,b1,b2,delta_bic,preferred,significant,s_obs,
    rmse_single,rmse_dual,candidates`` with slopes in units per year,
    ``delta_bic`` = BIC(dual) - BIC(single), ``significant`` as 1/0 (empty when
    the test was not run) and ``candidates`` as ``year:rmse`` pairs joined by
    ``;``.

Only cells with every year present are analysed; the fits assume a
contiguous time axis, so gaps are never interpolated.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import EmptyDomainError, GridParseError, GridStructureError
from .scan import DEFAULT_MARGIN, relative_minima, scan_batch, scan_bounds
from .segfit import AnnualSeries
from .selection import delta_bic_from_rss
from .sigtest import NullConfig, threshold_table
from .stochastic import map_chunks

log = logging.getLogger(__name__)

GRID_HEADER = ["lat", "lon", "land", "year", "value"]
RESULT_HEADER = ["lat", "lon", "change_year", "a1", "a2", "b1", "b2", "delta_bic",
                 "preferred", "significant", "s_obs", "rmse_single", "rmse_dual",
                 "candidates"]
MAGIC = b"TBGRID1\0"
_HEAD = struct.Struct("<8sIIIi")
BATCH_CHUNK = 1024


@dataclass
class GridDataset:
    """Regular lat-lon grid of annual series.

    ``values`` has shape (n_lat, n_lon, n_years) with NaN for missing data.
    ``valid`` marks complete cells; ``reasons`` maps (i, j) of every invalid
    cell to a short machine-readable reason.
    """

    lats: np.ndarray
    lons: np.ndarray
    land: np.ndarray
    start_year: int
    values: np.ndarray
    valid: np.ndarray = None
    reasons: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lats = np.asarray(self.lats, dtype=np.float64)
        self.lons = np.asarray(self.lons, dtype=np.float64)
        self.land = np.asarray(self.land, dtype=bool)
        self.values = np.asarray(self.values, dtype=np.float64)
        shape = (self.lats.size, self.lons.size)
        if self.land.shape != shape or self.values.shape[:2] != shape:
            raise GridStructureError("mask and values do not match the grid")
        if np.any(np.abs(self.lats) > 90):
            raise GridStructureError("latitude outside [-90, 90]")
        if np.any(np.diff(self.lats) <= 0):
            raise GridStructureError("latitudes must be strictly ascending")
        if self.valid is None:
            self.valid, self.reasons = _completeness(self.values, self.start_year, self.reasons)

    @property
    def n_years(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.lats.size, self.lons.size

    @property
    def years(self) -> np.ndarray:
        return self.start_year + np.arange(self.n_years)

    def series(self, i: int, j: int) -> AnnualSeries:
        if not self.valid[i, j]:
            raise GridStructureError(f"cell ({i}, {j}) is invalid: {self.reasons.get((i, j))}")
        return AnnualSeries(self.start_year, self.values[i, j])

    def analysis_cells(self) -> np.ndarray:
        """(i, j) index pairs of valid land cells in row-major order."""
        return np.argwhere(self.valid & self.land)

    def report(self) -> dict:
        total = self.land.size
        kinds = {}
        for reason in self.reasons.values():
            key = reason.split(":")[0]
            kinds[key] = kinds.get(key, 0) + 1
        return {
            "cells": total,
            "valid": int(self.valid.sum()),
            "invalid": int(total - self.valid.sum()),
            "land": int(self.land.sum()),
            "valid_land": int((self.valid & self.land).sum()),
            "years": [int(self.start_year), int(self.start_year + self.n_years - 1)],
            "invalid_reasons": dict(sorted(kinds.items())),
        }


def _completeness(values, start_year, reasons):
    reasons = dict(reasons)
    finite = np.isfinite(values)
    valid = finite.all(axis=2)
    for i, j in np.argwhere(~valid):
        if (int(i), int(j)) in reasons:
            continue
        missing = start_year + np.flatnonzero(~finite[i, j])
        if missing.size == values.shape[2]:
            reasons[(int(i), int(j))] = "absent"
        else:
            shown = ",".join(str(y) for y in missing[:5])
            more = "" if missing.size <= 5 else f",+{missing.size - 5}"
            reasons[(int(i), int(j))] = f"missing_years:{shown}{more}"
    for key in list(reasons):
        valid[key] = False
    return valid, reasons


def _parse_rows_slow(text):
    """Row-by-row parse with line numbers; tolerates empty values."""
    reader = csv.reader(io.StringIO(text))
    rows = []
    for lineno, row in enumerate(reader, start=1):
        if lineno == 1:
            continue
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 5:
            raise GridParseError(f"expected 5 fields, got {len(row)}", lineno)
        try:
            lat = float(row[0])
            lon = float(row[1])
            land = int(row[2])
            year = int(row[3])
            v = row[4].strip()
            value = float(v) if v else math.nan
        except ValueError as exc:
            raise GridParseError(str(exc), lineno) from None
        if land not in (0, 1):
            raise GridParseError(f"land flag must be 0 or 1, got {land}", lineno)
        if not -90 <= lat <= 90:
            raise GridParseError(f"latitude {lat} outside [-90, 90]", lineno)
        rows.append((lat, lon, land, year, value))
    return np.array(rows, dtype=np.float64).reshape(-1, 5)


def _read_grid_csv(path):
    text = Path(path).read_text(encoding="utf-8")
    first = text.split("\n", 1)[0].strip().replace(" ", "")
    if first.split(",") != GRID_HEADER:
        raise GridParseError(f"header must be {','.join(GRID_HEADER)}", 1)
    try:
        data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 5:
            raise ValueError
        bad = ((data[:, 2] != 0) & (data[:, 2] != 1)) | (np.abs(data[:, 0]) > 90) \
            | (data[:, 3] != np.round(data[:, 3]))
        if bad.any():
            raise ValueError
    except ValueError:
        data = _parse_rows_slow(text)
    if data.shape[0] == 0:
        raise GridParseError("no data rows", 2)
    return _assemble(data)


def _assemble(data):
    lat_v, lat_idx = np.unique(data[:, 0], return_inverse=True)
    lon_v, lon_idx = np.unique(data[:, 1], return_inverse=True)
    years = data[:, 3].astype(np.int64)
    y0, y1 = int(years.min()), int(years.max())
    present_years = np.unique(years)
    if present_years.size != y1 - y0 + 1:
        gaps = sorted(set(range(y0, y1 + 1)) - set(present_years.tolist()))
        raise GridStructureError(f"inconsistent year ranges: no cell has data for {gaps[:5]}")
    shape = (lat_v.size, lon_v.size, y1 - y0 + 1)
    flat = (lat_idx * shape[1] + lon_idx) * shape[2] + (years - y0)
    if np.unique(flat).size != flat.size:
        raise GridStructureError("duplicate (lat, lon, year) rows")
    values = np.full(shape, np.nan)
    values.reshape(-1)[flat] = data[:, 4]
    cell = lat_idx * shape[1] + lon_idx
    land_min = np.full(shape[0] * shape[1], 2.0)
    land_max = np.full(shape[0] * shape[1], -1.0)
    np.minimum.at(land_min, cell, data[:, 2])
    np.maximum.at(land_max, cell, data[:, 2])
    seen = land_max >= 0
    if np.any(seen & (land_min != land_max)):
        raise GridStructureError("land flag changes between years of one cell")
    land = (land_max == 1).reshape(shape[:2])
    reasons = {}
    for k in np.flatnonzero(~seen):
        reasons[(int(k // shape[1]), int(k % shape[1]))] = "absent"
    fin = np.isfinite(data[:, 4])
    for k in np.unique(cell[~fin & ~np.isnan(data[:, 4])]):
        reasons[(int(k // shape[1]), int(k % shape[1]))] = "non_finite"
    return GridDataset(lat_v, lon_v, land, y0, values, reasons=reasons)


def _read_grid_binary(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size:
        raise GridParseError("file shorter than binary header")
    magic, n_lat, n_lon, n_years, start = _HEAD.unpack_from(raw, 0)
    if magic != MAGIC:
        raise GridParseError("bad magic, not a TBGRID1 file")
    off = _HEAD.size
    expect = off + 8 * (n_lat + n_lon) + n_lat * n_lon + 8 * n_lat * n_lon * n_years
    if len(raw) != expect:
        raise GridStructureError(f"binary size {len(raw)} != expected {expect}")
    lats = np.frombuffer(raw, "<f8", n_lat, off)
    off += 8 * n_lat
    lons = np.frombuffer(raw, "<f8", n_lon, off)
    off += 8 * n_lon
    mask = np.frombuffer(raw, "u1", n_lat * n_lon, off).reshape(n_lat, n_lon)
    off += n_lat * n_lon
    values = np.frombuffer(raw, "<f8", n_lat * n_lon * n_years, off).reshape(n_lat, n_lon, n_years)
    if np.any(np.abs(lats) > 90):
        raise GridStructureError("latitude outside [-90, 90]")
    values = values.astype(np.float64)
    reasons = {}
    bad = np.isinf(values).any(axis=2)
    for i, j in np.argwhere(bad):
        reasons[(int(i), int(j))] = "non_finite"
    return GridDataset(lats.copy(), lons.copy(), mask != 0, int(start), values, reasons=reasons)


def detect_format(path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    return "binary" if head == MAGIC else "csv"


def load_grid(path, format: str = "auto") -> GridDataset:
    """Read a grid in CSV or packed binary form (``format`` csv/binary/auto)."""
    if format == "auto":
        format = detect_format(path)
    if format == "csv":
        ds = _read_grid_csv(path)
    elif format == "binary":
        ds = _read_grid_binary(path)
    else:
        raise ValueError(f"unknown grid format {format!r}")
    rep = ds.report()
    log.info("loaded %s: %d cells, %d valid, %d valid land", path, rep["cells"],
             rep["valid"], rep["valid_land"])
    return ds


def write_grid_csv(ds: GridDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(GRID_HEADER) + "\n")
        for i, lat in enumerate(ds.lats):
            for j, lon in enumerate(ds.lons):
                flag = int(ds.land[i, j])
                for k, v in enumerate(ds.values[i, j]):
                    val = "" if np.isnan(v) else repr(float(v))
                    fh.write(f"{float(lat)!r},{float(lon)!r},{flag},{ds.start_year + k},{val}\n")


def write_grid_binary(ds: GridDataset, path) -> None:
    n_lat, n_lon = ds.shape
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, n_lat, n_lon, ds.n_years, int(ds.start_year)))
        fh.write(ds.lats.astype("<f8").tobytes())
        fh.write(ds.lons.astype("<f8").tobytes())
        fh.write(ds.land.astype("u1").tobytes())
        fh.write(np.ascontiguousarray(ds.values, dtype="<f8").tobytes())


def daily_to_annual(values, dates=None, min_days: int = 300) -> float:
    """Mean of one calendar year of daily values, or NaN if too few days.

    Missing days may be passed as NaN or simply left out; ``dates`` (any
    sequence of ``datetime.date``/``numpy.datetime64``) must all fall in the
    same year when given.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if dates is not None:
        years = np.asarray(dates, dtype="datetime64[D]").astype("datetime64[Y]")
        if years.size != v.size:
            raise ValueError("dates and values differ in length")
        if np.unique(years).size > 1:
            raise ValueError("daily values span more than one calendar year")
    v = v[np.isfinite(v)]
    if v.size < min_days:
        return math.nan
    return float(v.mean())


def annual_means(dates, values, min_days: int = 300) -> dict[int, float]:
    """Group daily values by calendar year and apply :func:`daily_to_annual`."""
    d = np.asarray(dates, dtype="datetime64[D]")
    v = np.asarray(values, dtype=np.float64)
    years = d.astype("datetime64[Y]").astype(np.int64) + 1970
    return {int(y): daily_to_annual(v[years == y], min_days=min_days)
            for y in np.unique(years)}


def area_weights(lats) -> np.ndarray:
    """cos(latitude) cell-area weights, clipped at zero."""
    w = np.cos(np.deg2rad(np.asarray(lats, dtype=np.float64)))
    return np.clip(w, 0.0, None)


def global_mean_series(ds: GridDataset) -> AnnualSeries:
    """Area-weighted mean of valid land cells, renormalised year by year."""
    use = ds.valid & ds.land
    if not use.any():
        raise EmptyDomainError("no valid land cells")
    w = np.broadcast_to(area_weights(ds.lats)[:, None], ds.shape)[use]
    v = ds.values[use]
    ok = np.isfinite(v)
    wv = np.where(ok, v, 0.0) * w[:, None]
    wsum = (ok * w[:, None]).sum(axis=0)
    if np.any(wsum <= 0):
        raise EmptyDomainError("a year has zero total weight over valid land cells")
    return AnnualSeries(ds.start_year, wv.sum(axis=0) / wsum)


@dataclass(frozen=True)
class AnalysisConfig:
    margin: int = DEFAULT_MARGIN
    closeness_factor: float = 1.02
    tie_break: str = "earliest"
    significance: NullConfig | None = None


@dataclass(frozen=True)
class CellResult:
    lat: float
    lon: float
    change_year: int | None
    a1: float
    a2: float
    b1: float
    b2: float
    delta_bic: float
    preferred: str
    significant: bool | None
    s_obs: float
    rmse_single: float
    rmse_dual: float
    candidates: tuple = ()
    error: str | None = None

    @staticmethod
    def failed(lat, lon, message):
        nan = math.nan
        return CellResult(float(lat), float(lon), None, nan, nan, nan, nan, nan,
                          "failed", None, nan, nan, nan, (), message)


def _analyze_block(args):
    x, lats, lons, start_year, config, table = args
    n = x.shape[1]
    T_best, rss, lo = scan_batch(x, config.margin, config.tie_break)
    coef, rss_dual = kernels.dual_fit(x, T_best)
    _, _, rss_single = kernels.single_fit(x)
    scale = np.max(np.abs(x), axis=1)
    dbic = delta_bic_from_rss(rss_dual, rss_single, n, scale)
    gap = np.abs(coef[:, 0] - coef[:, 2])
    rmse_curves = np.sqrt(rss / n)
    years = start_year + np.arange(lo, lo + rss.shape[1]) - 1
    if table is not None:
        sigma_hat = np.sqrt(rss_single / (n - 2))
        significant = gap > sigma_hat * table.unit_threshold(T_best)
    out = []
    for r in range(x.shape[0]):
        cands = relative_minima((years, rmse_curves[r]), config.closeness_factor,
                                config.tie_break)
        out.append(CellResult(
            float(lats[r]), float(lons[r]), int(start_year + T_best[r] - 1),
            float(coef[r, 0]), float(coef[r, 2]), float(coef[r, 1]), float(coef[r, 3]),
            float(dbic[r]), "dual" if dbic[r] < 0 else "single",
            None if table is None else bool(significant[r]),
            float(gap[r]), float(math.sqrt(rss_single[r] / n)),
            float(math.sqrt(rss_dual[r] / n)), tuple(cands)))
    return out


def _analyze_safe(args):
    try:
        return _analyze_block(args)
    except Exception:  # isolate the failing cell(s)
        x, lats, lons, start_year, config, table = args
        if x.shape[0] == 1:
            import traceback

            msg = traceback.format_exc(limit=1).strip().splitlines()[-1]
            log.warning("cell (%s, %s) failed: %s", lats[0], lons[0], msg)
            return [CellResult.failed(lats[0], lons[0], msg)]
        out = []
        for r in range(x.shape[0]):
            out.extend(_analyze_safe((x[r:r + 1], lats[r:r + 1], lons[r:r + 1],
                                      start_year, config, table)))
        return out


def batch_analyze(ds: GridDataset, config: AnalysisConfig | None = None,
                  workers: int = 1, progress=None) -> list[CellResult]:
    """Scan, select and optionally test every valid land cell.

    Results come back in row-major cell order and do not depend on
    ``workers``. A cell that raises is reported with ``preferred="failed"``
    and the batch continues.
    """
    config = config or AnalysisConfig()
    cells = ds.analysis_cells()
    if cells.size == 0:
        return []
    scan_bounds(ds.n_years, config.margin)
    table = None
    if config.significance is not None:
        table = threshold_table(ds.n_years, config.significance, config.margin)
    x = ds.values[cells[:, 0], cells[:, 1]]
    lats = ds.lats[cells[:, 0]]
    lons = ds.lons[cells[:, 1]]
    tasks = [(x[s:s + BATCH_CHUNK], lats[s:s + BATCH_CHUNK], lons[s:s + BATCH_CHUNK],
              ds.start_year, config, table) for s in range(0, len(cells), BATCH_CHUNK)]
    results = []
    for k, part in enumerate(map_chunks(_analyze_safe, tasks, workers)):
        results.extend(part)
        if progress is not None:
            progress(min((k + 1) * BATCH_CHUNK, len(cells)), len(cells))
    return results


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def format_candidates(cands) -> str:
    return ";".join(f"{int(y)}:{float(r)!r}" for y, r in cands)


def parse_candidates(text: str):
    if not text:
        return ()
    return tuple((int(a), float(b)) for a, b in (p.split(":") for p in text.split(";")))


def write_results_csv(results, path_or_file) -> None:
    own = not hasattr(path_or_file, "write")
    fh = open(path_or_file, "w", encoding="utf-8", newline="") if own else path_or_file
    try:
        fh.write(",".join(RESULT_HEADER) + "\n")
        for r in results:
            fields = [r.lat, r.lon, r.change_year, r.a1, r.a2, r.b1, r.b2, r.delta_bic,
                      r.preferred, r.significant, r.s_obs, r.rmse_single, r.rmse_dual]
            fh.write(",".join(_fmt(f) for f in fields) + "," + format_candidates(r.candidates) + "\n")
    finally:
        if own:
            fh.close()


def read_results_csv(path) -> list[CellResult]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULT_HEADER:
            raise GridParseError("not a results file (header mismatch)", 1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RESULT_HEADER):
                raise GridParseError(f"expected {len(RESULT_HEADER)} fields", lineno)

            def num(s):
                return float(s) if s else math.nan
            try:
                out.append(CellResult(
                    float(row[0]), float(row[1]), int(row[2]) if row[2] else None,
                    num(row[3]), num(row[4]), num(row[5]), num(row[6]), num(row[7]),
                    row[8], None if row[9] == "" else row[9] == "1", num(row[10]),
                    num(row[11]), num(row[12]), parse_candidates(row[13])))
            except ValueError as exc:
                raise GridParseError(str(exc), lineno) from None
    return out


def summarize_area(results, ds: GridDataset | None = None) -> dict:
    """Area-weighted shares of cells by preferred model and significance.

    Also returns the change-year histogram of cells preferring the
    two-segment model (cell counts) and its empirical cumulative distribution.
    ``ds`` is accepted for symmetry with :func:`batch_analyze`; weights come
    from each result's latitude.
    """
    ok = [r for r in results if r.preferred in ("dual", "single")]
    if not ok:
        raise EmptyDomainError("no analysed cells")
    w = area_weights([r.lat for r in ok])
    total = float(w.sum())
    dual = np.array([r.preferred == "dual" for r in ok])
    out = {
        "cells": len(ok),
        "failed": len(results) - len(ok),
        "area_fraction_dual": float(w[dual].sum() / total) if total > 0 else math.nan,
        "area_fraction_single": float(w[~dual].sum() / total) if total > 0 else math.nan,
    }
    tested = np.array([r.significant is not None for r in ok])
    if tested.any():
        sig = np.array([bool(r.significant) for r in ok])
        wt = w[tested].sum()
        out["area_fraction_significant"] = float(w[tested & sig].sum() / wt) if wt > 0 else math.nan
        agree = np.array([bool(r.significant) == (r.preferred == "dual") for r in ok])[tested]
        out["test_bic_agreement"] = float(agree.mean())
    years = sorted({r.change_year for r, d in zip(ok, dual) if d})
    counts = {y: 0 for y in years}
    for r, d in zip(ok, dual):
        if d:
            counts[r.change_year] += 1
    n_dual = int(dual.sum())
    cum = np.cumsum([counts[y] for y in years]) / max(n_dual, 1)
    out["change_year_histogram"] = {str(y): counts[y] for y in years}
    out["change_year_cdf"] = {str(y): float(c) for y, c in zip(years, cum)}
    return out


SERIES_HEADER = ["year", "value"]


def read_series_csv(path) -> AnnualSeries:
    """Read a ``year,value`` CSV into an :class:`AnnualSeries`.

    Years may appear in any order but must be unique and contiguous, and every
    value must be a finite number.
    """
    years, values = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1:
                if [c.strip() for c in row] != SERIES_HEADER:
                    raise GridParseError("header must be year,value", 1)
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise GridParseError(f"expected 2 fields, got {len(row)}", lineno)
            try:
                year, value = int(row[0]), float(row[1])
            except ValueError as exc:
                raise GridParseError(str(exc), lineno) from None
            if not math.isfinite(value):
                raise GridParseError(f"non-finite value for {year}", lineno)
            years.append(year)
            values.append(value)
    if len(years) < 3:
        raise GridParseError("need at least 3 data rows")
    if len(set(years)) != len(years):
        raise GridStructureError("duplicate years")
    ys = sorted(years)
    if ys[-1] - ys[0] + 1 != len(ys):
        missing = sorted(set(range(ys[0], ys[-1] + 1)) - set(ys))
        raise GridStructureError(f"years are not contiguous; missing {missing[:5]}")
    return AnnualSeries.from_pairs(years, values)


def write_series_csv(series: AnnualSeries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("year,value\n")
        for y, v in zip(series.years, series.values):
            fh.write(f"{int(y)},{float(v)!r}\n")
