"""Typed exceptions shared across the toolkit.

Every failure mode raised by this package derives from :class:`Pointmap4DError`,
so callers can catch the whole family with one clause while tests and the CLI
distinguish individual conditions.
"""


class Pointmap4DError(Exception):
    """Base class for all toolkit errors."""


# --- geometry / pointmap construction -------------------------------------

class NonPositiveDepth(Pointmap4DError, ValueError):
    """Point lies on or behind the camera plane (z <= 0), or depth <= 0."""


class NonPositiveScale(Pointmap4DError, ValueError):
    """A scale factor that must be strictly positive was not."""


class DimensionMismatch(Pointmap4DError, ValueError):
    """Array shapes or frame counts disagree."""


class LengthMismatch(Pointmap4DError, ValueError):
    """Two sequences that must have equal length do not."""


class EmptyTrajectory(Pointmap4DError, ValueError):
    """Trajectory contains no poses."""


class FirstFrameNotIdentity(Pointmap4DError, ValueError):
    """Trajectory was expected to be rebased (poses[0] == identity)."""


class NoValidPoints(Pointmap4DError, ValueError):
    """An operation requiring at least one mask-valid point found none."""


class NoValidPixels(NoValidPoints):
    """No jointly valid pixels to evaluate."""


class MaskMismatch(Pointmap4DError, ValueError):
    """Two validity masks that must agree elementwise do not."""


# --- rectified flow --------------------------------------------------------

class TimeOutOfRange(Pointmap4DError, ValueError):
    """Interpolation time t outside [0, 1]."""


class EmptyDataset(Pointmap4DError, ValueError):
    """Training dataset contains no samples."""


# --- recovery (focal / PnP) -------------------------------------------------

class TooFewValidPoints(Pointmap4DError, ValueError):
    """Not enough valid points for the requested estimation."""


class AllPointsDegenerate(Pointmap4DError, ValueError):
    """Every usable point sits on the optical axis; focal unobservable."""


class DegenerateConfiguration(Pointmap4DError, RuntimeError):
    """No minimal sample produced a usable pose hypothesis."""


class NoConsensus(Pointmap4DError, RuntimeError):
    """RANSAC finished without reaching the minimum inlier ratio."""


# --- evaluation --------------------------------------------------------------

class TooFewPoses(Pointmap4DError, ValueError):
    """Trajectory alignment needs at least three poses."""


class DegenerateTrajectory(Pointmap4DError, ValueError):
    """Trajectory translations are collinear or coincident; similarity
    alignment is underdetermined."""


class TooFewValidPixels(Pointmap4DError, ValueError):
    """Depth alignment needs at least two jointly valid pixels."""


class DegenerateConstantPred(Pointmap4DError, ValueError):
    """Predicted depth is constant over valid pixels; scale unobservable."""


# --- synthetic scenes --------------------------------------------------------

class NoGeometryVisible(Pointmap4DError, RuntimeError):
    """The camera path never sees any scene primitive."""


# --- serialization -----------------------------------------------------------

class FormatError(Pointmap4DError):
    """Base class for file format violations."""


class BadMagic(FormatError):
    """File does not start with the expected magic bytes."""


class VersionUnsupported(FormatError):
    """Container version not understood by this reader."""


class TruncatedFile(FormatError):
    """File ends before the declared payload is complete.

    Attributes:
        offset: byte offset at which the file was found short.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DimOverflow(FormatError):
    """Declared dimensions are zero, negative, or implausibly large."""


class ParseError(FormatError):
    """Text format violation.

    Attributes:
        line: 1-based line number of the offending input.
        column: 1-based column (token start) when known, else 0.
    """

    def __init__(self, message: str, line: int, column: int = 0):
        loc = f"line {line}" + (f", column {column}" if column else "")
        super().__init__(f"{message} ({loc})")
        self.line = line
        self.column = column


class NonIncreasingTimestamps(FormatError):
    """Trajectory timestamps must be strictly increasing."""


class NonUnitQuaternion(FormatError):
    """Quaternion norm deviates from 1 beyond the accepted tolerance."""
