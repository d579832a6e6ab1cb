"""Exception types shared across the stlm package."""


class StlmError(Exception):
    """Base class for all package errors."""


class InvalidValue(StlmError):
    """Non-finite or otherwise unusable numeric input."""


class ShapeError(StlmError):
    """Tensor shape violates an operation's requirements."""


class InvalidToken(StlmError):
    """Token id outside the vocabulary."""


class ContextFull(StlmError):
    """Requested tokens would exceed the model's context window."""


class MissingTensor(StlmError):
    """A named tensor was not found in the weight set."""


class TooFewSamples(StlmError):
    """Dataset too small to split."""


class FormatError(StlmError):
    """File magic/version/structure is not a valid container."""


class CorruptFile(StlmError):
    """Container is structurally valid but fails integrity checks."""


class AlreadyQuantized(StlmError):
    """Quantization requested on a model that already holds q4 tensors."""


class ChecksumMismatch(StlmError):
    """Downloaded or on-disk bytes do not match the expected MD5."""


class NetworkError(StlmError):
    """Transfer failed; a partial temp file may remain for resume."""


class DiskFull(StlmError):
    """Destination filesystem ran out of space."""


class Busy(StlmError):
    """A generation is already in flight for this session."""


class NotBusy(StlmError):
    """No generation in flight to cancel."""


class MalformedCalendar(StlmError):
    """Calendar payload is missing the slash separator or the title."""


class BadDateTime(StlmError):
    """Calendar date/time field does not parse as YYYY-MM-DDTHH:MM:SS."""
