"""Exception types shared across the package."""


class AFCError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AFCError, ValueError):
    """Inconsistent or out-of-range configuration."""


class ValidationError(AFCError, ValueError):
    """An input violates an operation's precondition."""


class ExtractionError(AFCError):
    """Comb parameters could not be extracted from a spectrum."""


class FitError(AFCError):
    """A least-squares fit had too few valid points or failed to converge."""
