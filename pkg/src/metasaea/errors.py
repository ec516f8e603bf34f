"""Exception types shared across the library."""


class MetaSaeaError(Exception):
    """Base class for all library errors."""


class NotPositiveDefinite(MetaSaeaError):
    """A symmetric matrix had a non-positive pivot even after jitter.

    Callers holding a nugget should escalate it and retry.
    """


class InvalidBounds(MetaSaeaError):
    """A per-dimension bound has lo >= hi."""


class ShapeMismatch(MetaSaeaError):
    """Array arguments have inconsistent shapes."""


class TooFewPoints(MetaSaeaError):
    """The dataset is too small for the requested operation."""


class VersionMismatch(MetaSaeaError):
    """A persisted document carries an unsupported schema version."""


class SchemaError(MetaSaeaError):
    """A persisted document is malformed; the message names the field."""


class DimensionError(MetaSaeaError):
    """A decision vector does not match the task dimensionality."""


class FeasibilityCalibrationFailed(MetaSaeaError):
    """Constraint calibration could not hit the target feasible fraction."""


class EmptySet(MetaSaeaError):
    """A set-valued metric argument is empty."""


class UnsupportedFamily(MetaSaeaError):
    """No reference front generator exists for the requested family."""


class LengthMismatch(MetaSaeaError):
    """Paired sequences have different lengths."""


class ZeroVariance(MetaSaeaError):
    """A variance-normalized metric received constant truth values."""


class TooFewSamples(MetaSaeaError):
    """A statistical test received fewer samples than it supports."""


class BudgetExhaustedAtInit(MetaSaeaError):
    """The initial design alone would exceed the evaluation budget."""


class ConfigError(MetaSaeaError):
    """An experiment or optimizer configuration is invalid."""
