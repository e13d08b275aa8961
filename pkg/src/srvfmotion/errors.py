"""Exception types shared across the package."""


class SrvfMotionError(Exception):
    """Base class for all srvfmotion errors."""


class ShapeMismatch(SrvfMotionError):
    pass


class DegenerateCurve(SrvfMotionError):
    pass


class AntipodalPoint(SrvfMotionError):
    pass


class EmptySet(SrvfMotionError):
    pass


class ParseError(SrvfMotionError):
    pass


class SchemaError(SrvfMotionError):
    pass


class MissingClass(SrvfMotionError):
    pass


class InvalidSpec(SrvfMotionError):
    pass


class TooShort(SrvfMotionError):
    pass


class DimensionMismatch(SrvfMotionError):
    pass


class OutOfBounds(SrvfMotionError):
    pass


class ConfigError(SrvfMotionError):
    pass


class NonFiniteLoss(SrvfMotionError):
    pass


class VersionMismatch(SrvfMotionError):
    pass


class CorruptFile(SrvfMotionError):
    pass


class NotInGraph(SrvfMotionError):
    pass


class DomainError(SrvfMotionError):
    pass


class SingleClass(SrvfMotionError):
    pass


class NoConvergenceWarning(UserWarning):
    """Iterative solver hit its iteration cap; the best iterate was returned."""


class DegenerateSpectrumWarning(UserWarning):
    """No positive eigenvalue was available for the requested embedding."""
