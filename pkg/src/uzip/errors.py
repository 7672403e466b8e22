"""Exception types raised across the package."""


class UzipError(Exception):
    """Base class for all package errors."""


class UnsupportedFormatError(UzipError, ValueError):
    """Unknown floating-point format name or code."""


class MalformedInputError(UzipError, ValueError):
    """Raw input whose length is not a whole number of elements."""


class CorruptDataError(UzipError):
    """Base for integrity failures while decoding."""


class CorruptStreamError(CorruptDataError):
    """Split streams whose lengths do not agree with each other."""


class CorruptBlockError(CorruptDataError):
    """An entropy-coded block that does not decode cleanly."""


class CorruptBlobError(CorruptDataError):
    """A serialized blob failing a header, directory or length check."""


class InsufficientDataError(UzipError, ValueError):
    """Not enough distinct samples to fit a model."""


class ConfigError(UzipError, ValueError):
    """Invalid simulator or cluster configuration."""
