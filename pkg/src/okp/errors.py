"""Exception hierarchy shared across the pipeline."""


class OkpError(Exception):
    """Base class for all pipeline errors."""


class FormatError(OkpError):
    """File-level format problems (magic, version, payload)."""


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class NonFiniteValue(OkpError):
    pass


class OutOfBounds(OkpError):
    pass


class MissingRawGeometry(OkpError):
    pass


class ShapeMismatch(OkpError):
    pass


class ChannelMismatch(ShapeMismatch):
    pass


class ZeroVector(OkpError):
    pass


class ValidationError(OkpError):
    """Bad user-supplied annotation / configuration."""


class DuplicateId(ValidationError):
    pass


class TooFewKeypoints(ValidationError):
    pass


class FrameMismatch(OkpError):
    pass


class EmptyGroup(OkpError):
    pass
