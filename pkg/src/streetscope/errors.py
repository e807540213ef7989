"""Exception hierarchy shared by all streetscope modules."""


class StreetscopeError(Exception):
    """Base class for every error raised by this package."""


# imaging
class DecodeError(StreetscopeError):
    pass


class DimensionError(StreetscopeError):
    pass


# calibration
class InsufficientLines(StreetscopeError):
    pass


class NoIntersection(StreetscopeError):
    pass


class EmptyInput(StreetscopeError):
    pass


class DegenerateVanishingPoints(StreetscopeError):
    pass


class SingularHomography(StreetscopeError):
    pass


class HorizonOrAbove(StreetscopeError):
    """Pixel lies on or above the horizon, so it has no ground-plane preimage."""


class BehindCamera(StreetscopeError):
    pass


class NoConvergence(StreetscopeError):
    pass


class InvalidObject(StreetscopeError):
    pass


# registration
class TooFewAnchors(StreetscopeError):
    pass


class DegenerateConfiguration(StreetscopeError):
    pass


# stability
class DimensionMismatch(StreetscopeError):
    pass


class NoUsableFrames(StreetscopeError):
    pass


class SeriesTooShort(StreetscopeError):
    pass


# groups
class EmptyScene(StreetscopeError):
    pass


class TooFewPoints(StreetscopeError):
    pass


# pipeline
class SchemaError(StreetscopeError):
    """Malformed input record. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        self.message = message
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CorruptRecord(StreetscopeError):
    pass


# synth
class InvalidSpec(StreetscopeError):
    pass
