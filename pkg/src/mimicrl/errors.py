"""Exception types raised across the toolkit."""


class MimicError(Exception):
    """Base class for all toolkit errors."""


class AntiparallelAmbiguity(MimicError):
    """Rotation between opposite vectors is not unique; a hint axis is required."""


class ZeroVector(MimicError):
    pass


class ParseError(MimicError):
    pass


class SchemaError(MimicError):
    pass


class ValidationError(MimicError):
    def __init__(self, message, joint=None, frame=None):
        where = []
        if joint is not None:
            where.append(f"joint={joint}")
        if frame is not None:
            where.append(f"frame={frame}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.joint = joint
        self.frame = frame


class MappingError(MimicError):
    pass


class UnreachableTarget(MimicError):
    pass


class DimMismatch(MimicError):
    pass


class NonFiniteGradient(MimicError):
    pass


class NonFiniteLoss(MimicError):
    pass


class NonFiniteState(MimicError):
    pass


class TooLarge(MimicError):
    pass


class NoValidMatching(MimicError):
    pass


class UnknownTask(MimicError):
    pass


class ConfigError(MimicError):
    pass
