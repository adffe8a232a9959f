"""Plain lat-lon raster heatmaps (binary PPM) of per-cell batch results.

One pixel per grid cell (optionally enlarged by an integer ``scale``), the
northernmost row at the top and longitudes increasing to the right.

Colour conventions
    * ``change_year``: sequential ramp from the earliest to the latest
      admissible change year.
    * ``a1``, ``a2``, ``a2_minus_a1``, ``delta_bic``: diverging ramp, blue for
      negative, white at zero, red for positive, symmetric about zero with the
      limit set by the largest magnitude shown.
    * gray (128, 128, 128): cell prefers the single-line model; applied to
      the change-year and slope maps, not to ``delta_bic`` which is meaningful
      everywhere.
    * black: no result (ocean, absent, invalid or failed cell).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAP_FIELDS = ("change_year", "a1", "a2", "a2_minus_a1", "delta_bic")
GRAY = (128, 128, 128)
BLACK = (0, 0, 0)

# anchor colours, evenly spaced over [0, 1]
SEQUENTIAL = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37))
DIVERGING = ((5, 48, 97), (67, 147, 195), (247, 247, 247), (214, 96, 77), (103, 0, 31))


def ramp(u, anchors) -> np.ndarray:
    """Piecewise-linear colour lookup for u in [0, 1]; returns uint8 (..., 3)."""
    a = np.asarray(anchors, dtype=np.float64)
    pos = np.linspace(0.0, 1.0, len(a))
    u = np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0)
    rgb = np.stack([np.interp(u, pos, a[:, c]) for c in range(3)], axis=-1)
    return np.rint(rgb).astype(np.uint8)


@dataclass
class Raster:
    name: str
    lats: np.ndarray
    lons: np.ndarray
    values: np.ndarray   # (n_lat, n_lon), NaN where no number is shown
    status: np.ndarray   # 0 value, 1 masked (single), 2 no data
    vmin: float
    vmax: float
    ramp_name: str

    def rgb(self) -> np.ndarray:
        anchors = SEQUENTIAL if self.ramp_name == "sequential" else DIVERGING
        span = self.vmax - self.vmin
        u = np.where(np.isfinite(self.values), self.values - self.vmin, 0.0)
        u = u / span if span > 0 else np.full_like(u, 0.5)
        img = ramp(u, anchors)
        img[self.status == 1] = GRAY
        img[self.status == 2] = BLACK
        return img[::-1]   # north at the top

    def to_ppm(self, scale: int = 1) -> bytes:
        img = self.rgb()
        if scale > 1:
            img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
        h, w = img.shape[:2]
        return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()

    def legend(self) -> dict:
        anchors = SEQUENTIAL if self.ramp_name == "sequential" else DIVERGING
        units = {"change_year": "year", "delta_bic": "BIC(dual) - BIC(single)"}
        return {
            "field": self.name,
            "units": units.get(self.name, "unit/year"),
            "ramp": self.ramp_name,
            "anchors_rgb": [list(c) for c in anchors],
            "vmin": self.vmin,
            "vmax": self.vmax,
            "masked_single_rgb": list(GRAY) if self.name != "delta_bic" else None,
            "no_data_rgb": list(BLACK),
            "orientation": "row 0 = northernmost latitude, column 0 = westernmost longitude",
            "lats_south_to_north": [float(v) for v in self.lats],
            "lons_west_to_east": [float(v) for v in self.lons],
        }

    def rows(self):
        """(lat, lon, value, status) records in row-major south-to-north order."""
        labels = ("value", "masked_single", "no_data")
        for i, lat in enumerate(self.lats):
            for j, lon in enumerate(self.lons):
                v = self.values[i, j]
                yield float(lat), float(lon), None if math.isnan(v) else float(v), labels[self.status[i, j]]


def infer_axis(values) -> np.ndarray:
    """Regular axis covering the given coordinates, or their sorted unique set."""
    u = np.unique(np.asarray(values, dtype=np.float64))
    if u.size < 2:
        return u
    step = float(np.min(np.diff(u)))
    count = int(round((u[-1] - u[0]) / step)) + 1
    axis = u[0] + step * np.arange(count)
    if count <= 10 * u.size and np.allclose(axis[np.searchsorted(axis, u - step / 2)], u,
                                           atol=1e-6 * max(1.0, step)):
        return axis
    return u


def _field(r, name):
    if name == "a2_minus_a1":
        return r.a2 - r.a1
    if name == "change_year":
        return math.nan if r.change_year is None else float(r.change_year)
    return getattr(r, name)


def build_raster(results, name: str, lats=None, lons=None, year_range=None) -> Raster:
    """Raster of ``name`` over the grid spanned by ``lats``/``lons``.

    Without explicit axes they are inferred from the result coordinates.
    ``year_range`` fixes the change-year colour limits (defaults to the data).
    """
    if name not in MAP_FIELDS:
        raise ValueError(f"unknown map field {name!r}")
    lats = infer_axis([r.lat for r in results]) if lats is None else np.asarray(lats, float)
    lons = infer_axis([r.lon for r in results]) if lons is None else np.asarray(lons, float)
    values = np.full((lats.size, lons.size), np.nan)
    status = np.full((lats.size, lons.size), 2, dtype=np.int8)
    for r in results:
        if r.preferred not in ("dual", "single"):
            continue
        i = int(np.argmin(np.abs(lats - r.lat)))
        j = int(np.argmin(np.abs(lons - r.lon)))
        if name != "delta_bic" and r.preferred == "single":
            status[i, j] = 1
            continue
        v = _field(r, name)
        if math.isfinite(v):
            values[i, j] = v
            status[i, j] = 0
    shown = values[status == 0]
    if name == "change_year":
        if year_range is not None:
            vmin, vmax = float(year_range[0]), float(year_range[1])
        elif shown.size:
            vmin, vmax = float(shown.min()), float(shown.max())
        else:
            vmin = vmax = 0.0
        kind = "sequential"
    else:
        lim = float(np.max(np.abs(shown))) if shown.size else 0.0
        vmin, vmax = -lim, lim
        kind = "diverging"
    return Raster(name, lats, lons, values, status, vmin, vmax, kind)
