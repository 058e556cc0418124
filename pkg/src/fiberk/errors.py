"""Exception hierarchy shared by all fiberk modules."""


class FiberKError(Exception):
    """Base class for every error raised by fiberk."""


class InvalidInputError(FiberKError, ValueError):
    """An argument is outside the domain of the operation."""


class InfiniteCorrectionError(InvalidInputError):
    """Translated windows do not overlap, so the edge correction is infinite."""


class DegenerateCloudError(InvalidInputError):
    """A point cloud cannot support a curve fit (all parameters coincide)."""


class EmptyDataError(FiberKError):
    """No usable data (no samples in the window, empty pattern, ...)."""


class InvalidGridError(InvalidInputError):
    """An (r1, r2) grid is incompatible with the window or convention."""


class InvalidSpecError(InvalidInputError):
    """A simulation spec is invalid, e.g. a trend that goes negative."""


class IllConditionedCovarianceError(FiberKError):
    """Covariance factorization failed even after jitter escalation."""


class NonpositiveDensityError(FiberKError):
    """A fitted density is nonpositive at a sample and the policy is ``fail``."""


class ConfigError(InvalidInputError):
    """A configuration document violates its schema."""


class DataFormatError(FiberKError):
    """A data file (pattern, density, samples) is malformed."""
