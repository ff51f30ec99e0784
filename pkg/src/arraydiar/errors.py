"""Exception types shared across the pipeline."""


class ArrayDiarError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInput(ArrayDiarError):
    """An operation received an empty signal or tensor."""


class InvalidConfig(ArrayDiarError):
    """Inconsistent or unsupported processing parameters."""


class InvalidScene(ArrayDiarError):
    """A scene description cannot be synthesized."""


class NeedFourChannels(ArrayDiarError):
    """The diarization pipeline requires at least four microphone channels."""


class TooShort(ArrayDiarError):
    """A waveform segment is too short for embedding extraction."""


class DerUndefined(ArrayDiarError):
    """DER is undefined (empty reference)."""
