"""Exception types raised across the package."""


class OrgradError(Exception):
    """Base class for all package errors."""


class DimensionError(OrgradError, ValueError):
    """Shapes, modes or ranks are inconsistent."""


class NonFiniteError(OrgradError, ValueError):
    """A NaN or Inf reached a public constructor."""


class RankDeficientCoreError(OrgradError, ArithmeticError):
    """A core matricization has no well-defined pseudo-inverse at the requested tolerance."""


class ZeroTensorError(OrgradError, ValueError):
    """Ratios such as spikiness are undefined for the zero tensor."""


class DivergenceError(OrgradError, ArithmeticError):
    """An online step produced non-finite values."""

    def __init__(self, t, message):
        super().__init__(f"step {t}: {message}")
        self.t = t


class CalibrationError(OrgradError, RuntimeError):
    """Bisection for the warm-start perturbation did not land in the target band."""


class ConfigError(OrgradError, ValueError):
    """Invalid experiment configuration."""


class DataFormatError(OrgradError, ValueError):
    """Malformed input file (tensor container, MovieLens ratings)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
