"""Exception types shared across the toolkit.

All input-validation failures derive from :class:`StainAugError` so callers
(and the command line front end) can distinguish bad inputs from genuine
runtime failures.
"""


class StainAugError(Exception):
    """Base class for all errors raised by this package."""

    category = "error"


class InputShapeError(StainAugError, ValueError):
    """An array does not have the shape an operation requires."""

    category = "shape"


class InputValueError(StainAugError, ValueError):
    """An array contains values outside the documented range (NaN, >1, ...)."""

    category = "value"


class DomainVectorError(StainAugError, ValueError):
    """A domain weight vector violates its invariants (or must be one-hot)."""

    category = "domain"


class RangeError(StainAugError, ValueError):
    """A scalar parameter lies outside its allowed interval."""

    category = "range"


class DegenerateHistogramError(StainAugError, ValueError):
    """A histogram has fewer than two occupied bins, so no threshold exists."""

    category = "histogram"


class AlignmentError(StainAugError, ValueError):
    """Image and annotation mask dimensions do not line up."""

    category = "alignment"


class BatchCompositionError(StainAugError, ValueError):
    """A training batch does not contain tiles from two distinct domains."""

    category = "batch"


class DatasetError(StainAugError, ValueError):
    """A dataset is missing a required domain, split, or file."""

    category = "dataset"


class ResizePolicyError(StainAugError, ValueError):
    """A tile's size cannot be reconciled with the model's trained size."""

    category = "resize-policy"


class MetricUndefinedError(StainAugError, ValueError):
    """A metric has no defined value for the given labels (e.g. one class)."""

    category = "metric"


class ParameterError(StainAugError, ValueError):
    """An algorithm parameter is inconsistent with the data it is applied to."""

    category = "parameter"


class ConfigError(StainAugError, ValueError):
    """A configuration file or value is invalid."""

    category = "config"


class CheckpointError(StainAugError, ValueError):
    """A checkpoint directory is missing files or inconsistent."""

    category = "checkpoint"


class DivergenceError(StainAugError, RuntimeError):
    """Training produced a non-finite loss.

    ``last_checkpoint`` points at the most recent checkpoint written before
    the divergence, if any.
    """

    category = "divergence"

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint
