"""Exception hierarchy shared across the package."""


class ArtBankError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ArtBankError):
    """Tensor or image shapes are inconsistent with the operation."""


class NumericError(ArtBankError):
    """A value that must be finite is NaN or infinite."""


class ConfigError(ArtBankError):
    """An argument or configuration value is out of its valid range."""


class TemplateError(ArtBankError):
    """A prompt template does not contain exactly one placeholder token."""


class ContractError(ArtBankError):
    """A trainable/frozen precondition was violated."""


class MissingGradError(ArtBankError):
    """An optimizer step was requested for a parameter without a gradient."""


class DuplicateStyleError(ArtBankError):
    """A style id was added twice to the same bank."""


class UnknownStyleError(ArtBankError):
    """A style id was requested that the bank does not contain."""


class FormatError(ArtBankError):
    """Base class for file (de)serialization failures."""


class BadMagicError(FormatError):
    """A binary file does not start with the expected magic bytes."""


class VersionMismatchError(FormatError):
    """A binary file declares an unsupported format version."""


class TruncatedFileError(FormatError):
    """A file ended before the declared payload was complete."""


class MalformedHeaderError(FormatError):
    """A text header could not be parsed."""


class UnsupportedFormatError(FormatError):
    """The file is syntactically valid but in an unsupported variant."""
