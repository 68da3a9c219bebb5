"""Exception types shared across the package."""


class WaveDiffURError(Exception):
    """Base class for all package errors."""


class ShapeError(WaveDiffURError, ValueError):
    """Tensor shapes are inconsistent with an operation's contract."""


class DimensionError(WaveDiffURError, ValueError):
    """An image dimension violates a precondition (e.g. odd height/width)."""


class ParamError(WaveDiffURError, ValueError):
    """A scalar parameter is out of its documented range."""


class PlanError(WaveDiffURError, ValueError):
    """A cascade plan cannot be built from the requested resolutions."""


class FormatError(WaveDiffURError, ValueError):
    """A serialized file is malformed; message carries the byte offset."""


class DivergenceError(WaveDiffURError, RuntimeError):
    """A numeric computation produced non-finite values."""


class MetricError(WaveDiffURError, ValueError):
    """A metric is undefined for the given inputs."""
