"""Exception types shared across the package."""


class TsalignError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TsalignError):
    """Invalid configuration value or unusable input set."""


class ShapeError(TsalignError):
    """Array dimension does not match what the consumer declared."""


class IdentityError(TsalignError):
    """Patient id not present in a scorer's label set."""


class GuardViolationError(TsalignError):
    """Target-domain label reached a training code path."""


class LabelRangeError(TsalignError, ValueError):
    """Gestational-age week outside the configured bin range."""


class NumericError(TsalignError):
    """Non-finite value encountered during training."""


class StateError(TsalignError):
    """Cached activations no longer correspond to the network parameters."""


class DegenerateDataError(TsalignError):
    """Input carries no variance to operate on."""


class FormatError(TsalignError):
    """Base class for binary/manifest file format violations."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class MagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionError(FormatError):
    """File declares an unsupported format version."""


class DimensionMismatchError(FormatError):
    """Declared dimension disagrees with the expected one."""


class TruncatedFileError(FormatError):
    """File ends before the declared payload is complete."""
