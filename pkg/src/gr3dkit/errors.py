"""Exception types shared across the toolkit."""


class GR3DKitError(Exception):
    """Base class for all gr3dkit errors."""


class DegenerateGeometry(GR3DKitError):
    """Both operands have zero measure, so overlap is undefined."""


class EmptyAfterClamp(GR3DKitError):
    """Clamping a box against an image left nothing."""


class InvalidRotation(GR3DKitError):
    """Matrix is not a proper rotation (orthonormal with det +1)."""


class BehindCamera(GR3DKitError):
    """Projection requested for a point at or behind the camera plane."""


class InvalidDepth(GR3DKitError):
    """Backprojection requested with a non-positive depth."""


class NoValidDepth(GR3DKitError):
    """The requested region contains no valid depth pixels."""


class ParseError(GR3DKitError):
    """Strict-mode parse failure at a known byte offset."""

    def __init__(self, reason, offset):
        super().__init__(f"{reason} (byte {offset})")
        self.reason = reason
        self.offset = offset


class SerializeError(GR3DKitError):
    """Token list cannot be rendered to canonical text."""


class InvalidMentions(GR3DKitError):
    """Mention ranges are unsorted, overlapping, or out of range."""


class ProtocolViolation(GR3DKitError):
    """Streaming region-insertion state machine was driven out of order."""


class NothingToGenerate(GR3DKitError):
    """The scene has no objects eligible for the requested record kind."""


class EmptyEvaluation(GR3DKitError):
    """Metrics were requested over an empty record set."""
