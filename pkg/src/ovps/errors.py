"""Exception hierarchy.

Every error raised by the engine derives from :class:`OVPSError`.  The CLI maps
:class:`ValidationError` subclasses to exit code 2, every other
:class:`OVPSError` to exit code 3, and :class:`NumericalCheckFailed` to 4.
"""

from __future__ import annotations


class OVPSError(Exception):
    """Base class for engine errors."""

    exit_code = 3


class ValidationError(OVPSError):
    """Configuration or invocation is invalid; nothing was computed."""

    exit_code = 2


class NumericalCheckFailed(OVPSError):
    exit_code = 4


# tensor core
class ShapeMismatch(OVPSError, ValueError):
    pass


class NonFiniteValue(OVPSError, ValueError):
    pass


class ZeroVector(OVPSError, ValueError):
    pass


class InvalidTemperature(OVPSError, ValueError):
    pass


# concepts
class EmptyConceptSet(OVPSError, ValueError):
    pass


class DuplicateName(OVPSError, ValueError):
    pass


class CountMismatch(OVPSError, ValueError):
    pass


class CycleDetected(OVPSError, ValueError):
    pass


class MultipleRoots(OVPSError, ValueError):
    pass


class NonUnitEmbedding(OVPSError, ValueError):
    pass


class EmptyTree(OVPSError, ValueError):
    pass


# adapter
class EmptyMask(OVPSError, ValueError):
    pass


# matching / losses
class NonFiniteCost(OVPSError, ValueError):
    pass


class IndexOutOfRange(OVPSError, IndexError):
    pass


class LengthMismatch(OVPSError, ValueError):
    pass


class EmptyAnnotation(OVPSError, ValueError):
    pass


class NonDifferentiablePoint(OVPSError, ArithmeticError):
    pass


# metrics
class CategoryOutOfRange(OVPSError, ValueError):
    pass


class TooFewCategories(OVPSError, ValueError):
    pass


# fixtures
class InvalidSpec(ValidationError, ValueError):
    pass


# io / cli
class UnsupportedDtype(OVPSError, ValueError):
    pass


class FortranOrderUnsupported(OVPSError, ValueError):
    pass


class CorruptHeader(OVPSError, ValueError):
    pass


class MissingCounterpart(OVPSError, FileNotFoundError):
    pass


class StageError(OVPSError):
    """A module error annotated with the image and pipeline stage it came from."""

    def __init__(self, image_id: str, stage: str, cause: Exception):
        self.image_id = image_id
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(f"image {image_id!r}, stage {stage!r}: {type(cause).__name__}: {cause}")
