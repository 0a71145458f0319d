"""Typed errors. Every error maps to a process exit code used by the command line."""

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_STORAGE = 4
EXIT_NUMERIC = 5


class MultisegError(Exception):
    """Base class for all multiseg errors."""

    exit_code = EXIT_VALIDATION
    kind = "error"


class ValidationError(MultisegError, ValueError):
    """Input, configuration or file content failed validation."""

    exit_code = EXIT_VALIDATION
    kind = "validation"


class ConfigError(ValidationError):
    """Invalid or unknown configuration values."""


class ShapeError(ValidationError):
    """Tensor shapes do not fit an operation."""


class AnnotationError(ValidationError):
    """Annotation text could not be parsed."""


class UnknownClassError(AnnotationError):
    """A class name is not part of the configured class set."""


class GeometryError(AnnotationError):
    """Annotation geometry is out of range or degenerate."""


class AugmentationError(ValidationError):
    """A record was augmented twice or mixed up with its variants."""


class DatasetError(ValidationError):
    """A corpus is empty, too small or misaligned."""


class ShapeAuditError(ValidationError):
    """Stored tensors do not match the shapes implied by a configuration."""


class CorruptHeaderError(ValidationError):
    """A binary container has a broken header or is truncated."""


class ChecksumError(CorruptHeaderError):
    """A binary container failed its CRC32 check."""


class StorageError(MultisegError, OSError):
    """Files or directories could not be read or written."""

    exit_code = EXIT_STORAGE
    kind = "io"


class NumericError(MultisegError, ArithmeticError):
    """NaN or Inf showed up during training or evaluation."""

    exit_code = EXIT_NUMERIC
    kind = "numeric"


class ClassNameWarning(UserWarning):
    """A stored mask declares class names that differ from the expected class set."""
