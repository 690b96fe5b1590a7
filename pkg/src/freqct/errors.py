"""Exception types shared across the package.

The CLI maps ConfigError to exit code 1 and every other FreqctError
(or unexpected numeric failure) to exit code 2.
"""


class FreqctError(Exception):
    """Base class for all package errors."""


class ConfigError(FreqctError):
    """Invalid configuration or usage (CLI exit code 1)."""


class TensorFileError(FreqctError):
    """Base class for tensor-file format errors."""


class BadMagicError(TensorFileError):
    """File does not start with the FCT1 magic bytes."""


class TruncatedPayloadError(TensorFileError):
    """Payload is shorter than the header-declared shape requires."""


class HeaderError(TensorFileError):
    """Header is unreadable or inconsistent with the payload."""


class NonFiniteError(FreqctError):
    """A grid contains NaN or Inf where finite values are required."""


class SymmetryViolationError(FreqctError):
    """Inverse DFT of a spectrum produced a non-negligible imaginary part,
    indicating the amplitude/phase fields are not Hermitian-consistent."""


class PipelineError(FreqctError):
    """A pipeline stage failed (carries the stage name)."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
