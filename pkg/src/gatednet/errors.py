"""Exception types shared across the package."""


class GatedNetError(Exception):
    """Base class for all domain errors raised by this package."""


class ShapeError(GatedNetError):
    """Tensor shapes or widths do not line up."""


class DataFormatError(GatedNetError):
    """A dataset file is malformed or a record is corrupt."""


class DatasetError(GatedNetError):
    """Empty dataset, degenerate statistics, or a missing split."""


class UnknownCategoryError(GatedNetError):
    """A category name is not part of the taxonomy."""


class UnknownTaskError(GatedNetError):
    """A task name has no gate slice in the bank."""


class MissingTraceError(GatedNetError):
    """Backward was called without a train-mode forward trace."""


class MissingGatesError(GatedNetError):
    """Evaluation needs a gate slice for a category that was not supplied."""


class LabelError(GatedNetError):
    """A label index is out of range."""


class CheckpointError(GatedNetError):
    """Base class for checkpoint file problems."""


class NotACheckpointError(CheckpointError):
    """Magic bytes or version do not identify a checkpoint file."""


class KindMismatchError(CheckpointError):
    """A base file was loaded as gates or vice versa."""


class IncompatibleBaseError(CheckpointError):
    """Gate checkpoint digest does not match the base it is paired with."""


class CorruptCheckpointError(CheckpointError):
    """Payload is truncated or the manifest does not tile it."""


class ConfigError(GatedNetError):
    """Run configuration file is invalid."""
