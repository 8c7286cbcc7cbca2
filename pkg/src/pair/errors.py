"""Exception types shared across the package."""


class PairError(Exception):
    """Base class for all domain errors raised by this package."""


class EmptyMaskError(PairError):
    """Pooling over a mask with no set cells: the mean is undefined."""


class PartitionViolation(PairError):
    """An operation would leave pixels unassigned or multiply assigned."""


class UnknownBackendError(PairError):
    """A segmenter / encoder / embedding backend id is not registered."""


class InvalidLayerError(PairError):
    """A feature layer is not available on the requested encoder."""


class LayerMismatchError(PairError):
    """Appearance tuples of two objects do not share (encoder, layer) slots."""


class UnknownObjectError(PairError):
    """An object id does not exist in the scene."""


class InvalidEditSpec(PairError):
    """An edit spec fails kind-specific completeness validation."""


class CorruptCheckpoint(PairError):
    """Checkpoint file is truncated, malformed, or version-incompatible."""


class ShapeMismatchError(PairError):
    """Array arguments that must share a shape do not."""
