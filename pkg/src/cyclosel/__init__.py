"""Time-posterior training-set selection for day-ahead hourly load forecasting."""

from .errors import ConfigError, CycloselError, DataError, NumericalError

__version__ = "0.1.0"

__all__ = ["ConfigError", "CycloselError", "DataError", "NumericalError", "__version__"]
