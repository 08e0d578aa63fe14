"""
Error Types
Exception hierarchy shared by the samplers, metrics, bounds and harness
"""


class ApproximationError(Exception):
    """Base class for every error raised by this package"""


class InvalidInputError(ApproximationError, ValueError):
    """Arguments outside the documented domain (carrier mismatch, bad pmf, ...)"""


class InvalidConfigurationError(ApproximationError, ValueError):
    """A model or experiment lacks what the requested computation needs"""


class ResourceLimitError(ApproximationError, RuntimeError):
    """A rejection budget or enumeration size limit was exhausted"""


class CouplingViolationError(ApproximationError, RuntimeError):
    """A Palm coupler broke its declared monotonicity on a drawn sample"""
