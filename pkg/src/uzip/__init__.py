"""Lossless exponent-split float compression and a communication cost simulator."""

from uzip._backend import BACKEND
from uzip.ans import FrequencyTable, normalize_table
from uzip.compressor import CompressedBlob, compress_fused, compress_staged, compression_ratio, decompress
from uzip.errors import (
    ConfigError,
    CorruptBlobError,
    CorruptBlockError,
    CorruptDataError,
    CorruptStreamError,
    InsufficientDataError,
    MalformedInputError,
    UnsupportedFormatError,
    UzipError,
)
from uzip.float_codec import DTYPE_NAMES, describe_dtype

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CompressedBlob",
    "ConfigError",
    "CorruptBlobError",
    "CorruptBlockError",
    "CorruptDataError",
    "CorruptStreamError",
    "DTYPE_NAMES",
    "FrequencyTable",
    "InsufficientDataError",
    "MalformedInputError",
    "UnsupportedFormatError",
    "UzipError",
    "compress_fused",
    "compress_staged",
    "compression_ratio",
    "decompress",
    "describe_dtype",
    "normalize_table",
]
