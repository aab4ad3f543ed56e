class PinchnetError(Exception):
    """Base class for every error raised by the pinchnet library."""


class ConfigError(PinchnetError):
    """A scenario, model or training configuration violates its invariants."""


class ShapeError(PinchnetError):
    """Operands of a tensor operation have incompatible or empty shapes."""


class RecordError(PinchnetError):
    """Backward was requested on a tensor that carries no computation record."""


class NumericError(PinchnetError):
    """A non-finite value appeared in an input, an intermediate or a loss."""


class GeometryError(PinchnetError):
    """Node positions make a channel undefined (for example zero distance)."""


class ArtifactError(PinchnetError):
    """A dataset, checkpoint or CSV artifact is missing, corrupt or incompatible."""
