"""Command-line front end.

Exit codes: 0 success, 2 usage or invalid configuration, 3 input that cannot
be read or parsed, 4 failure while computing.

Every output file either embeds a ``metadata`` object (JSON outputs) or is
accompanied by ``<file>.meta.json`` holding the tool version, the full
configuration, the seed and the SHA-256 of each input. No timestamps are
written, so identical invocations give identical bytes.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, gridio, heatmap
from .errors import ConfigError, GridParseError, GridStructureError, TrendBreakError
from .scan import DEFAULT_MARGIN, scan_bounds, scan_change_point
from .segfit import fit_single
from .selection import select_model
from .sigtest import NullConfig, test_change_point
from .stochastic import SynthConfig, ensemble_experiment, synth_series

log = logging.getLogger("trendbreak")

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_RUNTIME = 0, 2, 3, 4
PER_CENTURY = 100.0
DBIC_CONVENTION = "delta_bic = BIC(dual) - BIC(single); negative favours two segments"
MEMORY_GRID_CASES = (("white", 0.0), ("h065", 0.15), ("h080", 0.3))


class UsageError(Exception):
    pass


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats to strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isfinite(f):
            return f
        return "nan" if math.isnan(f) else ("inf" if f > 0 else "-inf")
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=False) + "\n"


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def metadata(args, inputs=()) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
    return {
        "tool": "trendbreak",
        "version": __version__,
        "command": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): sha256(p) for p in inputs},
    }


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_sidecar(path, meta, extra=None):
    body = {"metadata": meta}
    if extra:
        body.update(extra)
    _write_text(f"{path}.meta.json", dumps(body))


def _emit_json(args, payload):
    text = dumps(payload)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _json_alongside(args, fmts, payload):
    """JSON goes to --out (or stdout) alone, or to <out>.json next to a CSV."""
    if "csv" not in fmts:
        _emit_json(args, payload)
    elif not args.out:
        raise UsageError("csv and json together need --out")
    else:
        _write_text(f"{args.out}.json", dumps(payload))


def _formats(args, default, allowed):
    fmts = args.format or [default]
    bad = [f for f in fmts if f not in allowed]
    if bad:
        raise UsageError(f"{args.command} does not support --format {bad[0]}")
    return fmts


def _null_config(args) -> NullConfig:
    return NullConfig(ensemble_size=args.ensemble_size, noise=args.noise, d=args.d,
                      seed=args.seed, level=args.level, workers=args.workers)


def _load_series(args):
    series = gridio.read_series_csv(args.series)
    if args.first_year is not None or args.last_year is not None:
        series = series.window(args.first_year or series.start_year,
                               args.last_year or series.end_year)
    return series


def _fit_report(series, args):
    res = scan_change_point(series, args.margin, args.closeness)
    sel = select_model(series, res)
    single = fit_single(series)
    best = res.best
    report = {
        "series": {"start_year": series.start_year, "end_year": series.end_year, "n": series.n},
        "single": {
            "slope": single.slope, "slope_per_century": single.slope * PER_CENTURY,
            "intercept": single.intercept, "rss": single.rss, "rmse": single.rmse,
        },
        "dual": {
            "change_year": best.change_year, "change_index": best.T,
            "a1": best.a1, "a2": best.a2,
            "a1_per_century": best.a1 * PER_CENTURY, "a2_per_century": best.a2 * PER_CENTURY,
            "b1": best.b1, "b2": best.b2, "rss": best.rss, "rmse": best.rmse,
            "continuity_residual": best.continuity_residual,
            "time_origin": f"t = 1 at {series.start_year}; second segment uses t - T",
        },
        "rmse_curve": res.rmse_curve,
        "candidates": [{"year": y, "rmse": r} for y, r in res.candidates],
        "criteria": {
            "aic_single": sel.aic_single, "aic_dual": sel.aic_dual,
            "bic_single": sel.bic_single, "bic_dual": sel.bic_dual,
            "k_single": sel.k_single, "k_dual": sel.k_dual,
            "delta_bic": sel.delta_bic, "delta_aic": sel.delta_aic,
            "convention": DBIC_CONVENTION, "preferred": sel.preferred,
        },
        "significance": None,
    }
    return res, sel, report


def cmd_fit(args):
    series = _load_series(args)
    _formats(args, "json", ("json",))
    res, sel, report = _fit_report(series, args)
    if not args.no_test:
        report["significance"] = test_change_point(series, _null_config(args), args.margin,
                                                   res).to_dict()
    payload = {"metadata": metadata(args, [args.series]), **report}
    _emit_json(args, payload)
    if args.out:
        d = report["dual"]
        print(f"change year {d['change_year']}: slopes {d['a1_per_century']:.3g} -> "
              f"{d['a2_per_century']:.3g} unit/century; preferred {sel.preferred}")
    return EXIT_OK


def cmd_scan(args):
    series = _load_series(args)
    fmts = _formats(args, "csv", ("csv", "json"))
    res = scan_change_point(series, args.margin, args.closeness)
    meta = metadata(args, [args.series])
    if "json" in fmts:
        payload = {"metadata": meta, "rmse_curve": res.rmse_curve,
                   "change_year": res.change_year,
                   "candidates": [{"year": y, "rmse": r} for y, r in res.candidates]}
        _json_alongside(args, fmts, payload)
    if "csv" in fmts:
        lines = ["year,rmse"] + [f"{int(y)},{float(r)!r}" for y, r in zip(res.years, res.rmse)]
        text = "\n".join(lines) + "\n"
        if args.out:
            _write_text(args.out, text)
            _write_sidecar(args.out, meta, {"candidates": res.candidates,
                                            "change_year": res.change_year})
        else:
            sys.stdout.write(text)
    return EXIT_OK


def _synth_config(args, change_index="default", noise=None, d=None, seed=None):
    if change_index == "default":
        change_index = None if args.no_break else args.change_index
    noise = noise or args.noise
    d = args.d if d is None else d
    if noise == "white":
        d = 0.0
    elif d is None:
        raise UsageError("--noise arfima needs --d")
    return SynthConfig(n_years=args.n_years, change_index=change_index, slope1=args.slope1,
                       slope2=args.slope2, sigma=args.sigma, noise=noise, d=d,
                       seed=args.seed if seed is None else seed, start_year=args.start_year)


def cmd_synth(args):
    fmts = _formats(args, "csv", ("csv", "json"))
    config = _synth_config(args)
    series = synth_series(config)
    meta = metadata(args)
    if "json" in fmts:
        _json_alongside(args, fmts, {"metadata": meta, "years": series.years,
                                     "values": series.values})
    if "csv" in fmts:
        if args.out:
            gridio.write_series_csv(series, args.out)
            _write_sidecar(args.out, meta)
        else:
            sys.stdout.write("year,value\n" + "".join(
                f"{int(y)},{float(v)!r}\n" for y, v in zip(series.years, series.values)))
    return EXIT_OK


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _ensemble_files(out, summary, meta, prefix=""):
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / f"{prefix}summary.json", dumps({"metadata": meta, **summary.to_dict()}))
    hist = out / f"{prefix}histogram.csv"
    _write_csv(hist, ["change_year", "count"], sorted(summary.histogram().items()))
    _write_sidecar(hist, meta)
    members = out / f"{prefix}members.csv"
    header = ["member", "change_year", "delta_bic_single_minus_dual", "slope_gap"]
    if summary.reject is not None:
        header.append("reject")
    _write_csv(members, header, ([*r[:4], int(r[4])] if len(r) > 4 else r
                                 for r in summary.member_rows()))
    _write_sidecar(members, meta, {"delta_bic_convention": "BIC(single) - BIC(dual)"})


def cmd_ensemble(args):
    if not args.out:
        raise UsageError("ensemble needs --out DIR")
    _formats(args, "csv", ("csv", "json"))
    out = Path(args.out)
    meta = metadata(args)
    sig = _null_config(args) if args.test else None
    if not args.memory_grid:
        config = _synth_config(args)
        summary = ensemble_experiment(config, args.members, args.margin, sig, args.workers)
        _ensemble_files(out, summary, meta)
        f5, f8 = summary.fraction_within(5), summary.fraction_within(8)
        msg = f"dual selected {summary.dual_fraction:.3f}"
        if f5 is not None:
            msg += f"; within 5 yr {f5:.3f}, within 8 yr {f8:.3f}"
        print(msg)
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    overview = {"metadata": meta, "delta_bic_convention": "BIC(single) - BIC(dual)",
                "cases": {}}
    for name, d in MEMORY_GRID_CASES:
        for case, change in (("break", args.change_index), ("nobreak", None)):
            noise = "white" if d == 0 else "arfima"
            config = _synth_config(args, change_index=change, noise=noise, d=d)
            summary = ensemble_experiment(config, args.members, args.margin, sig, args.workers)
            path = out / f"delta_bic_{name}_{case}.csv"
            _write_csv(path, ["member", "delta_bic_single_minus_dual"],
                       ((i, float(v)) for i, v in enumerate(summary.delta_bic_single_minus_dual)))
            _write_sidecar(path, meta)
            overview["cases"][f"{name}_{case}"] = {
                "hurst": config.hurst, "change_index": change,
                "dual_fraction": summary.dual_fraction,
                "selection_accuracy": summary.selection_accuracy,
                "file": path.name,
            }
            print(f"{name:5s} {case:7s} selection accuracy {summary.selection_accuracy:.3f}")
    _write_text(out / "memory_grid_summary.json", dumps(overview))
    return EXIT_OK


def cmd_mc_test(args):
    series = _load_series(args)
    _formats(args, "json", ("json",))
    res = scan_change_point(series, args.margin, args.closeness)
    result = test_change_point(series, _null_config(args), args.margin, res)
    payload = {"metadata": metadata(args, [args.series]), **result.to_dict(),
               "s_obs_per_century": result.s_obs * PER_CENTURY,
               "threshold_per_century": result.threshold * PER_CENTURY}
    _emit_json(args, payload)
    if args.out:
        print(f"s = {result.s_obs:.4g}, threshold {result.threshold:.4g}, "
              f"reject = {result.reject}")
    return EXIT_OK


def cmd_global_mean(args):
    fmts = _formats(args, "csv", ("csv", "json"))
    ds = gridio.load_grid(args.grid, args.grid_format)
    series = gridio.global_mean_series(ds)
    meta = metadata(args, [args.grid])
    report = ds.report()
    if "json" in fmts:
        _json_alongside(args, fmts, {"metadata": meta, "ingestion": report,
                                     "years": series.years, "values": series.values})
    if "csv" in fmts:
        if args.out:
            gridio.write_series_csv(series, args.out)
            _write_sidecar(args.out, meta, {"ingestion": report})
        else:
            sys.stdout.write("year,value\n" + "".join(
                f"{int(y)},{float(v)!r}\n" for y, v in zip(series.years, series.values)))
    return EXIT_OK


def _write_maps(results, out: Path, meta, lats=None, lons=None, year_range=None, scale=1):
    out.mkdir(parents=True, exist_ok=True)
    for name in heatmap.MAP_FIELDS:
        r = heatmap.build_raster(results, name, lats, lons, year_range)
        (out / f"{name}.ppm").write_bytes(r.to_ppm(scale))
        _write_text(out / f"{name}.legend.json", dumps({"metadata": meta, **r.legend()}))
        _write_csv(out / f"{name}.csv", ["lat", "lon", "value", "status"],
                   ((a, b, "" if v is None else v, s) for a, b, v, s in r.rows()))


def cmd_batch(args):
    if not args.out:
        raise UsageError("batch needs --out DIR")
    fmts = _formats(args, "csv", ("csv", "ppm", "json"))
    ds = gridio.load_grid(args.grid, args.grid_format)
    scan_bounds(ds.n_years, args.margin)
    config = gridio.AnalysisConfig(margin=args.margin, closeness_factor=args.closeness,
                                   significance=_null_config(args) if args.test else None)
    if args.test and args.noise == "arfima" and args.d is None:
        raise UsageError("batch significance with --noise arfima needs --d")
    results = gridio.batch_analyze(ds, config, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = metadata(args, [args.grid])
    gridio.write_results_csv(results, out / "results.csv")
    failed = [r for r in results if r.preferred == "failed"]
    extra = {
        "ingestion": ds.report(),
        "delta_bic_convention": DBIC_CONVENTION,
        "slope_units": "unit/year",
        "failed_cells": [{"lat": r.lat, "lon": r.lon, "error": r.error} for r in failed],
    }
    if results and len(failed) < len(results):
        extra["area_summary"] = gridio.summarize_area(results, ds)
    _write_sidecar(out / "results.csv", meta, extra)
    if "json" in fmts:
        _write_text(out / "summary.json", dumps({"metadata": meta, **extra}))
    if "ppm" in fmts:
        lo, hi = scan_bounds(ds.n_years, args.margin)
        _write_maps(results, out / "maps", meta, ds.lats, ds.lons,
                    (ds.start_year + lo - 1, ds.start_year + hi - 1), args.scale)
    n_dual = sum(r.preferred == "dual" for r in results)
    print(f"{len(results)} cells analysed, {n_dual} prefer two segments, {len(failed)} failed")
    return EXIT_OK


def cmd_map(args):
    if not args.out:
        raise UsageError("map needs --out DIR")
    _formats(args, "ppm", ("ppm",))
    results = gridio.read_results_csv(args.results)
    inputs = [args.results]
    lats = lons = None
    if args.grid:
        ds = gridio.load_grid(args.grid, args.grid_format)
        lats, lons = ds.lats, ds.lons
        inputs.append(args.grid)
    _write_maps(results, Path(args.out), metadata(args, inputs), lats, lons, scale=args.scale)
    return EXIT_OK


def _common(p, null=True):
    p.add_argument("--margin", type=int, default=DEFAULT_MARGIN,
                   help="years excluded from the scan at each end (default 10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--format", action="append", choices=("csv", "json", "ppm"))
    p.add_argument("--closeness", type=float, default=1.02,
                   help="report relative minima within this factor of the best rmse")
    if null:
        p.add_argument("--ensemble-size", type=int, default=1000,
                       help="null surrogates for the significance test")
        p.add_argument("--noise", choices=("white", "arfima"), default="white")
        p.add_argument("--d", type=float, default=None, help="ARFIMA memory parameter")
        p.add_argument("--level", type=float, default=0.95)


def _series_args(p):
    p.add_argument("series", help="CSV with header year,value")
    p.add_argument("--first-year", type=int)
    p.add_argument("--last-year", type=int)


def _synth_args(p):
    p.add_argument("--n-years", type=int, default=70)
    p.add_argument("--change-index", type=int, default=35)
    p.add_argument("--no-break", action="store_true", help="single trend, no change point")
    p.add_argument("--slope1", type=float, default=0.0)
    p.add_argument("--slope2", type=float, default=0.04)
    p.add_argument("--sigma", type=float, default=0.45)
    p.add_argument("--start-year", type=int, default=1)


def _grid_args(p):
    p.add_argument("grid", help="grid CSV or packed binary file")
    p.add_argument("--grid-format", choices=("auto", "csv", "binary"), default="auto")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trendbreak",
                                     description="Detect a single change of linear trend.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="full single-series analysis (JSON report)")
    _series_args(p)
    _common(p)
    p.add_argument("--no-test", action="store_true", help="skip the Monte Carlo test")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("scan", help="rmse curve over candidate change years")
    _series_args(p)
    _common(p, null=False)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("synth", help="generate one synthetic series")
    _synth_args(p)
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ensemble", help="ensemble detection and selection experiment")
    _synth_args(p)
    _common(p)
    p.add_argument("--members", type=int, default=1000)
    p.add_argument("--test", action="store_true", help="also run the significance test")
    p.add_argument("--memory-grid", action="store_true",
                   help="white, H=0.65 and H=0.8 noise, with and without break: six files")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("mc-test", help="Monte Carlo test of no trend change")
    _series_args(p)
    _common(p)
    p.set_defaults(func=cmd_mc_test)

    p = sub.add_parser("global-mean", help="area-weighted mean over valid land cells")
    _grid_args(p)
    _common(p, null=False)
    p.set_defaults(func=cmd_global_mean)

    p = sub.add_parser("batch", help="analyse every valid land cell of a grid")
    _grid_args(p)
    _common(p)
    p.add_argument("--test", action="store_true", help="also run the significance test")
    p.add_argument("--scale", type=int, default=1, help="pixels per cell in heatmaps")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("map", help="heatmaps from a results CSV")
    p.add_argument("results", help="results CSV written by batch")
    p.add_argument("--grid", help="grid file defining the full lat/lon axes")
    p.add_argument("--grid-format", choices=("auto", "csv", "binary"), default="auto")
    p.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", action="append", choices=("csv", "json", "ppm"))
    p.add_argument("--scale", type=int, default=1, help="pixels per cell")
    p.set_defaults(func=cmd_map)
    return parser


def _validate(args):
    if getattr(args, "workers", 1) < 1:
        raise UsageError("--workers must be at least 1")
    if getattr(args, "margin", 0) < 0:
        raise UsageError("--margin must be non-negative")
    if getattr(args, "scale", 1) < 1:
        raise UsageError("--scale must be at least 1")
    if getattr(args, "members", 1) < 1:
        raise UsageError("--members must be at least 1")
    if getattr(args, "d", None) is not None and not -0.5 < args.d < 0.5:
        raise UsageError("--d must lie in (-0.5, 0.5)")
    if getattr(args, "sigma", 1.0) <= 0:
        raise UsageError("--sigma must be positive")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _validate(args)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"trendbreak: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GridParseError, GridStructureError, FileNotFoundError, IsADirectoryError,
            UnicodeDecodeError) as exc:
        print(f"trendbreak: input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (TrendBreakError, ArithmeticError, RuntimeError, ValueError, OSError) as exc:
        print(f"trendbreak: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
