"""Exception hierarchy for stream decoding."""


class DecodeError(Exception):
    """Base class for anything wrong with the input stream."""


class EndOfStream(DecodeError):
    """A read ran past the end of the stream."""


class MalformedHeader(DecodeError):
    """A header field holds a forbidden value."""


class MalformedStream(DecodeError):
    """Stream-level inconsistency (bad geometry, vector out of bounds, ...)."""


class UnsupportedStream(DecodeError):
    """Legal MPEG-2, but outside this decoder's scope (4:2:2, dual prime, ...)."""


class InvalidCode(DecodeError):
    """No VLC table entry matches the next bits; slice is abandoned."""


class EscapeLevelZero(InvalidCode):
    """Escape-coded coefficient decoded to a forbidden level (0 or -2048)."""


class CoefficientOverflow(InvalidCode):
    """Run/level placement ran past coefficient position 63."""


class MissingReference(DecodeError):
    """A predicted picture has no reference frame to predict from."""


class BrokenGop(DecodeError):
    """A B picture arrived without references in an open GOP."""


class GeometryMismatch(DecodeError):
    """Pixel data does not match the declared field/frame geometry."""


class NoCandidates(ValueError):
    """Concealment was asked to choose from an empty candidate list."""


class FixtureSpecError(ValueError):
    """A fixture spec asks for something the generator cannot emit."""
