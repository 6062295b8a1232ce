"""Exception hierarchy.

Everything the library raises on bad input derives from SsbError so callers
(and the fuzz tests) can distinguish structured failures from genuine bugs.
"""


class SsbError(Exception):
    """Base class for all structured codec errors."""


class DimensionError(SsbError):
    """Shape or divisibility constraint violated."""


class AnnotationError(SsbError):
    """Annotation geometry out of bounds or malformed."""


class CapacityError(SsbError):
    """A count exceeds what the format can represent."""


class FormatError(SsbError):
    """Malformed, truncated or overlong serialized data."""


class CorruptStreamError(FormatError):
    """Range decoder reached an impossible state."""


class SelectionError(SsbError):
    """A requested group id does not exist."""


class AvailabilityError(SsbError):
    """A requested group's substream is not present in the file."""


class CompatibilityError(SsbError):
    """Weights / config / bitstream digests do not match."""


class SequencingError(SsbError):
    """Channel slices were requested out of order."""


class KeyRequiredError(SsbError):
    """Strict mode: an encrypted group was requested without its key."""
