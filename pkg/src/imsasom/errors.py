"""Exception hierarchy shared by all modules."""


class ImsaSomError(Exception):
    """Base class for every error raised by the package."""


class GeometryError(ImsaSomError, ValueError):
    """Invalid or inconsistent geometric input."""


class SingularSystemError(ImsaSomError, ArithmeticError):
    """The forward EFIE matrix is numerically rank deficient."""


class DegenerateSubspaceError(ImsaSomError, ArithmeticError):
    """A retained singular value is too small to divide by."""


class DegenerateNormalizationError(ImsaSomError, ValueError):
    """A cost normalization (data, current or boundary norm) vanished.

    Usually caused by a too small truncation parameter alpha or by
    scattered-field data that is identically zero for some view.
    """


class EmptyRoIError(ImsaSomError):
    """No active segment survived filtering, so no RoI can be defined."""


class ConfigError(ImsaSomError, ValueError):
    """Run configuration failed to parse or validate."""


class DataFormatError(ImsaSomError, ValueError):
    """A data file holds malformed or incomplete records."""
