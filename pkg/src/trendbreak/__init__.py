"""Detection of a single change of linear trend in annual time series.

A series is fitted by two straight segments that meet at the change index;
the index is found by exhaustive scan, the two-segment model is weighed
against a single line by information criteria, and the change is tested
against a Monte Carlo null of trendless-change noise. Long-memory noise,
detrended fluctuation analysis and gridded batch processing are included.
"""
from __future__ import annotations

__version__ = "0.1.0"

from . import kernels
from .errors import (
    ConfigError,
    DegenerateInputError,
    DomainError,
    EmptyDomainError,
    EstimationError,
    GridParseError,
    GridStructureError,
    InternalError,
    SeriesLengthError,
    TrendBreakError,
)
from .gridio import (
    AnalysisConfig,
    CellResult,
    GridDataset,
    annual_means,
    area_weights,
    batch_analyze,
    daily_to_annual,
    global_mean_series,
    load_grid,
    read_results_csv,
    read_series_csv,
    summarize_area,
    write_grid_binary,
    write_grid_csv,
    write_results_csv,
    write_series_csv,
)
from .memory import (
    DFAResult,
    MemoryParams,
    TrendWindow,
    dfa_estimate,
    estimate_memory,
    estimate_phi,
    f_factor,
    gamma_function,
    gl_fractional_diff,
    hyp2f1_1d,
    moving_window_trends,
    trend_variance,
)
from .scan import ScanResult, relative_minima, scan_batch, scan_change_point
from .segfit import AnnualSeries, DualFit, LinearFit, fit_dual_at, fit_single, solve_constraint_system
from .selection import ModelSelection, information_criteria, select_model
from .sigtest import NullConfig, SignificanceResult, null_ensemble, slope_gap, test_change_point
from .stochastic import (
    EnsembleSummary,
    SynthConfig,
    arfima_noise,
    ensemble_experiment,
    gaussian_noise,
    synth_series,
)

BACKEND = kernels.BACKEND
