"""Exception hierarchy shared by all modules."""


class TrendBreakError(Exception):
    """Base class for every error raised by trendbreak."""


class SeriesLengthError(TrendBreakError, ValueError):
    """Input series is too short for the requested operation."""


class DomainError(TrendBreakError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigError(TrendBreakError, ValueError):
    """Invalid run or experiment configuration."""


class EstimationError(TrendBreakError, RuntimeError):
    """A statistical estimator could not produce a value."""


class DegenerateInputError(EstimationError):
    """Input has no variability where some is required."""


class InternalError(TrendBreakError, RuntimeError):
    """A numerical invariant that should hold did not."""


class GridParseError(TrendBreakError, ValueError):
    """Malformed grid or series file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GridStructureError(TrendBreakError, ValueError):
    """Grid file parses but is structurally inconsistent."""


class EmptyDomainError(TrendBreakError, ValueError):
    """No valid cells to aggregate over."""
