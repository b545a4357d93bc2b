"""Exception types shared across the package."""


class TsasrError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(TsasrError):
    """Incompatible array shapes. Always names both offending shapes."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


class ContractError(TsasrError):
    """An API precondition was violated by the caller."""


class ConfigError(TsasrError):
    """Invalid configuration value."""


class InvalidTranscriptError(TsasrError):
    """Transcript contains tokens outside the vocabulary (e.g. the blank index)."""


class DegenerateSignalError(TsasrError):
    """A waveform with zero power where nonzero power is required."""


class ClippingError(TsasrError):
    """Synthesis produced samples outside [-1, 1]."""


class ProtocolError(TsasrError):
    """Mixture-construction protocol misuse (wrong speaker/utterance counts)."""


class CorpusDesignError(TsasrError):
    """Corpus configuration cannot satisfy the sampling contract."""


class TooShortError(TsasrError):
    """Input shorter than the minimum the operation supports."""


class InfeasibleAlignmentError(TsasrError):
    """Label sequence cannot be aligned within the available frames."""


class DegenerateReferenceError(TsasrError):
    """Constant reference signal passed to a scale-invariant measure."""


class UndefinedWerError(TsasrError):
    """WER requested against an empty reference."""


class NanGradientError(TsasrError):
    """Non-finite gradient encountered during backpropagation; names the op."""


class CheckpointError(TsasrError):
    """Corrupt or incompatible checkpoint file."""
