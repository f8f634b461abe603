"""
Exception hierarchy for the vine-copula portfolio engine
"""


class VineportError(Exception):
    """Base class for every error raised by vineport"""


class DataError(VineportError, ValueError):
    """Input data is malformed (unparseable rows, duplicate dates, too few assets)"""


class ConfigError(VineportError, ValueError):
    """Run configuration is invalid"""


class ParameterError(VineportError, ValueError):
    """Model parameters fall outside their admissible region"""


class DimensionError(VineportError, ValueError):
    """Array shapes do not match the fitted model"""


class EstimationError(VineportError, ValueError):
    """An estimator cannot be run on the supplied data"""


class InsufficientDataError(VineportError, ValueError):
    """Too few observations (or exceedances) for the requested statistic"""
