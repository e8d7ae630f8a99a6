"""Exception types shared across the package."""


class UnipsError(Exception):
    """Base class for package errors."""


class ShapeError(UnipsError, ValueError):
    """Operands or configuration imply inconsistent tensor shapes."""


class NonFiniteError(UnipsError, ArithmeticError):
    """A NaN or infinity reached a layer or an optimizer step."""


class ConfigError(UnipsError, ValueError):
    """Invalid or unknown configuration value."""


class EmptyMaskError(UnipsError, ValueError):
    """An operation that needs masked pixels received an empty mask."""


class DegenerateImageError(UnipsError, ValueError):
    """An image is unusable for normalization (zero or negative mean)."""


class RenderError(UnipsError, RuntimeError):
    """A render was rejected (for example, the object left the frame)."""


class CheckpointError(UnipsError, ValueError):
    """A checkpoint file is malformed or does not match the model."""


class NotFittedError(UnipsError, RuntimeError):
    """Estimator used before fit(); mirrors the sklearn exception of the same name."""
