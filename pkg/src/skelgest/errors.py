"""Exception types raised across the package."""

from __future__ import annotations


class SkelgestError(Exception):
    """Base class for all package errors."""


class NoValidJoints(SkelgestError):
    pass


class NonIncreasingFrames(SkelgestError):
    pass


class LayoutMismatch(SkelgestError):
    pass


class OutOfRange(SkelgestError):
    pass


class EmptySequence(SkelgestError):
    pass


class TooFewSamples(SkelgestError):
    pass


class DimensionMismatch(SkelgestError):
    pass


class EmptyInput(SkelgestError):
    pass


class DegenerateLabels(SkelgestError):
    pass


class UnknownClass(SkelgestError):
    pass


class EmptyScores(SkelgestError):
    pass


class SingleClassLabels(SkelgestError):
    pass


class NonMonotonicTime(SkelgestError):
    pass


class ModelMismatch(SkelgestError):
    pass


class NonFiniteCost(SkelgestError):
    pass


class NoCommonJoints(SkelgestError):
    pass


class LengthMismatch(SkelgestError):
    pass


class ParseError(SkelgestError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedHeader(ParseError):
    pass


class TruncatedFile(ParseError):
    pass


class VersionUnsupported(SkelgestError):
    pass


class DigestMismatch(ModelMismatch):
    pass


class GridTooLarge(SkelgestError):
    pass


class ConfigError(SkelgestError):
    pass
