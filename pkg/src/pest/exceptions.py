"""Exception taxonomy for the library.

Every error raised on purpose derives from :class:`PestError`, so callers can
catch the whole family with one clause.  Errors that are really misuse of an
API also derive from the matching builtin (``ValueError``) to stay friendly to
generic handling code.
"""


class PestError(Exception):
    """Base class for all errors raised by this package."""


class ZeroNormError(PestError, ValueError):
    """A vector with (near-)zero Euclidean norm cannot be normalized."""


class DimensionMismatchError(PestError, ValueError):
    """Operands have incompatible dimensions or shapes."""


class BadLabelError(PestError, ValueError):
    """A class label lies outside the valid index range."""


class NonPositiveTemperatureError(PestError, ValueError):
    """Softmax temperature must be strictly positive."""


class StepOutOfRangeError(PestError, ValueError):
    """A schedule was queried outside its configured step range."""


class ConfigError(PestError, ValueError):
    """A configuration value or combination of values is invalid."""


class TaskSpecError(ConfigError):
    """A synthetic task specification is invalid."""


class MissingCentroidError(PestError, ValueError):
    """A per-class centroid required by a fusion step is absent."""


class ResampleExhaustedError(PestError, RuntimeError):
    """Rejection sampling hit its retry budget without success."""


class FormatVersionError(PestError, ValueError):
    """A serialized file declares an unsupported format version."""


class CorruptFileError(PestError, ValueError):
    """A serialized file is truncated, mangled, or fails its checksum."""
