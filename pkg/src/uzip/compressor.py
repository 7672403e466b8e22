"""Compression pipeline: staged (global table, three passes) and fused (local tables, one pass).

Wire layout, little-endian throughout::

    magic "UZC1" | version u16 | dtype u8 | flags u8 | n_elements u64
    | residual_length u64 | symbol_count u64 | block_size u32 | n_blocks u32
    | prob_bits u8 | blocks_per_table u24 | header_crc u32          (48 bytes)
    | residual | table(s) 512 B each unless omitted | block_sizes u32 x n_blocks
    | blocks | tail

``blocks_per_table`` is 0 for a single global table; in localized mode table
``i`` covers blocks ``[i * blocks_per_table, (i + 1) * blocks_per_table)``.
The residual comes first so a blob can be streamed in transmission order.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from uzip.ans import (
    DEFAULT_BLOCK_SIZE,
    DEFAULT_PROB_BITS,
    TABLE_BYTES,
    FrequencyTable,
    build_histogram,
    ideal_compressed_size,
    decode_symbols,
    encode_symbols,
    normalize_table,
)
from uzip.errors import CorruptBlobError, CorruptBlockError, CorruptStreamError
from uzip.float_codec import (
    DTypeDescriptor,
    DTypeLike,
    SplitStreams,
    describe_dtype,
    dtype_from_code,
    join_values,
    split_values,
)

MAGIC = b"UZC1"
VERSION = 1
FLAG_LOCALIZED = 0x01
FLAG_TABLE_OMITTED = 0x02
_KNOWN_FLAGS = FLAG_LOCALIZED | FLAG_TABLE_OMITTED

_HEADER = struct.Struct("<4sHBBQQQIIB3s")
_CRC = struct.Struct("<I")
HEADER_BYTES = _HEADER.size + _CRC.size  # 48

DEFAULT_CHUNK_BYTES = 4 << 20
DEFAULT_SAMPLE_BYTES = 256 << 10


@dataclass
class PassCounter:
    """Modelled global-memory traffic of one compression call.

    Traffic is counted in *input-equivalent* bytes: a stage that reads (or
    writes) some representation of every element is charged the full input
    size for that direction, whatever the representation's byte width.  One
    pass is therefore one read plus one write of the whole working set.
    """

    input_bytes: int
    bytes_read: int = 0
    bytes_written: int = 0

    def read(self, nbytes: int) -> None:
        self.bytes_read += int(nbytes)

    def write(self, nbytes: int) -> None:
        self.bytes_written += int(nbytes)

    @property
    def passes(self) -> float:
        if self.input_bytes == 0:
            return 0.0
        return (self.bytes_read + self.bytes_written) / (2 * self.input_bytes)


@dataclass
class EncodedBlocks:
    """Step-2 output: one payload per block plus the table used by each block."""

    sizes: np.ndarray
    payload: bytes
    tables: list[FrequencyTable]
    block_size: int
    blocks_per_table: int = 0

    @property
    def n_blocks(self) -> int:
        return int(self.sizes.size)


@dataclass
class CompressedBlob:
    dtype: DTypeDescriptor
    n_elements: int
    symbol_count: int
    residual: bytes
    tables: list[FrequencyTable]
    block_sizes: np.ndarray
    blocks: bytes
    tail: bytes = b""
    block_size: int = DEFAULT_BLOCK_SIZE
    prob_bits: int = DEFAULT_PROB_BITS
    blocks_per_table: int = 0
    table_omitted: bool = False
    version: int = VERSION

    @property
    def localized(self) -> bool:
        return self.blocks_per_table > 0

    @property
    def flags(self) -> int:
        return (FLAG_LOCALIZED if self.localized else 0) | (FLAG_TABLE_OMITTED if self.table_omitted else 0)

    @property
    def n_blocks(self) -> int:
        return int(self.block_sizes.size)

    @property
    def n_tables(self) -> int:
        if self.symbol_count == 0:
            return 0
        if self.localized:
            return -(-self.n_blocks // self.blocks_per_table)
        return 1

    @property
    def original_bytes(self) -> int:
        return self.n_elements * self.dtype.element_bytes

    @property
    def table_bytes(self) -> int:
        return 0 if self.table_omitted else TABLE_BYTES * self.n_tables

    @property
    def compressed_total_bytes(self) -> int:
        return (
            HEADER_BYTES
            + len(self.residual)
            + self.table_bytes
            + 4 * self.n_blocks
            + len(self.blocks)
            + len(self.tail)
        )

    def header_bytes(self) -> bytes:
        head = _HEADER.pack(
            MAGIC,
            self.version,
            self.dtype.code,
            self.flags,
            self.n_elements,
            len(self.residual),
            self.symbol_count,
            self.block_size,
            self.n_blocks,
            self.prob_bits,
            self.blocks_per_table.to_bytes(3, "little"),
        )
        return head + _CRC.pack(zlib.crc32(head))

    def to_bytes(self) -> bytes:
        parts = [self.header_bytes(), self.residual]
        if not self.table_omitted:
            parts.extend(t.to_bytes() for t in self.tables)
        parts.append(self.block_sizes.astype("<u4").tobytes())
        parts.append(self.blocks)
        parts.append(self.tail)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data) -> "CompressedBlob":
        data = bytes(data)
        if len(data) < HEADER_BYTES:
            raise CorruptBlobError(f"truncated header: {len(data)} < {HEADER_BYTES} bytes")
        head = data[: _HEADER.size]
        (magic, version, dcode, flags, n_elements, res_len, sym_count, block_size, n_blocks,
         prob_bits, bpt_raw) = _HEADER.unpack(head)
        if magic != MAGIC:
            raise CorruptBlobError(f"bad magic {magic!r}")
        if version != VERSION:
            raise CorruptBlobError(f"unsupported version {version}")
        (crc,) = _CRC.unpack_from(data, _HEADER.size)
        if crc != zlib.crc32(head):
            raise CorruptBlobError("header checksum mismatch")
        if flags & ~_KNOWN_FLAGS:
            raise CorruptBlobError(f"unknown flag bits 0x{flags:02x}")
        try:
            d = dtype_from_code(dcode)
        except ValueError as exc:
            raise CorruptBlobError(str(exc)) from None
        bpt = int.from_bytes(bpt_raw, "little")
        localized = bool(flags & FLAG_LOCALIZED)
        if localized != (bpt > 0):
            raise CorruptBlobError("localized flag disagrees with blocks_per_table")
        n_groups = n_elements // d.elements_per_symbol
        if sym_count != n_groups or res_len != n_groups * d.residual_bytes_per_group:
            raise CorruptBlobError("symbol/residual counts disagree with element count")
        if block_size == 0 or n_blocks != -(-sym_count // block_size):
            raise CorruptBlobError("block count disagrees with symbol count")
        tail_len = (n_elements - n_groups * d.elements_per_symbol) * d.element_bytes

        pos = HEADER_BYTES
        residual = data[pos : pos + res_len]
        pos += res_len
        if sym_count == 0:
            n_tables = 0
        else:
            n_tables = -(-n_blocks // bpt) if localized else 1
        tables: list[FrequencyTable] = []
        omitted = bool(flags & FLAG_TABLE_OMITTED)
        if not omitted:
            for _ in range(n_tables):
                raw = data[pos : pos + TABLE_BYTES]
                pos += TABLE_BYTES
                try:
                    tables.append(FrequencyTable.from_bytes(raw, prob_bits))
                except ValueError as exc:
                    raise CorruptBlobError(f"bad frequency table: {exc}") from None
        dir_end = pos + 4 * n_blocks
        if dir_end > len(data):
            raise CorruptBlobError("truncated block directory")
        sizes = np.frombuffer(data[pos:dir_end], dtype="<u4").astype(np.uint32)
        pos = dir_end
        blocks_len = int(sizes.sum(dtype=np.uint64))
        if pos + blocks_len + tail_len != len(data):
            if pos + blocks_len > len(data):
                raise CorruptBlobError("block directory overflows the blob")
            raise CorruptBlobError(
                f"blob length {len(data)} disagrees with directory (expected {pos + blocks_len + tail_len})"
            )
        blocks = data[pos : pos + blocks_len]
        tail = data[pos + blocks_len :]
        return cls(
            dtype=d,
            n_elements=n_elements,
            symbol_count=sym_count,
            residual=residual,
            tables=tables,
            block_sizes=sizes,
            blocks=blocks,
            tail=tail,
            block_size=block_size,
            prob_bits=prob_bits,
            blocks_per_table=bpt,
            table_omitted=omitted,
            version=version,
        )

    def block_table_index(self) -> np.ndarray:
        if self.localized:
            return (np.arange(self.n_blocks) // self.blocks_per_table).astype(np.int32)
        return np.zeros(self.n_blocks, dtype=np.int32)


BlobLike = Union[CompressedBlob, bytes, bytearray, memoryview]


# -- staged pipeline ------------------------------------------------------------------------------


def stage_split(raw, dtype: DTypeLike, counter: PassCounter | None = None) -> SplitStreams:
    """Step 1: split into symbol/residual buffers and count symbols."""
    streams = split_values(raw, dtype)
    if counter is not None:
        counter.read(streams.raw_bytes)
        counter.write(streams.raw_bytes)
    return streams


def stage_encode(
    streams: SplitStreams,
    table: FrequencyTable,
    block_size: int = DEFAULT_BLOCK_SIZE,
    counter: PassCounter | None = None,
) -> EncodedBlocks:
    """Step 2: encode every block of the symbol stream with one shared table."""
    sizes, payload = encode_symbols(streams.symbols, [table], block_size=block_size)
    if counter is not None:
        counter.read(streams.raw_bytes)
        counter.write(streams.raw_bytes)
    return EncodedBlocks(sizes, payload, [table], block_size)


def stage_coalesce(
    streams: SplitStreams,
    encoded: EncodedBlocks,
    table_omitted: bool = False,
    counter: PassCounter | None = None,
) -> CompressedBlob:
    """Step 3: gather residual, table and variable-length blocks into one blob."""
    blob = CompressedBlob(
        dtype=streams.dtype,
        n_elements=streams.n_elements,
        symbol_count=len(streams.symbols),
        residual=streams.residual,
        tables=list(encoded.tables) if streams.symbols else [],
        block_sizes=encoded.sizes,
        blocks=encoded.payload,
        tail=streams.tail,
        block_size=encoded.block_size,
        prob_bits=encoded.tables[0].prob_bits,
        blocks_per_table=encoded.blocks_per_table,
        table_omitted=table_omitted,
    )
    if counter is not None:
        counter.read(streams.raw_bytes)
        counter.write(streams.raw_bytes)
    return blob


def compress_staged(
    raw,
    dtype: DTypeLike,
    *,
    block_size: int = DEFAULT_BLOCK_SIZE,
    prob_bits: int = DEFAULT_PROB_BITS,
    table: FrequencyTable | None = None,
    omit_table: bool = False,
) -> tuple[CompressedBlob, PassCounter]:
    """Three-step pipeline with one global frequency table.

    Pass ``table`` to reuse a table agreed earlier (it is still stored unless
    ``omit_table`` is set, in which case the receiver must supply it).
    """
    d = describe_dtype(dtype)
    counter = PassCounter(input_bytes=len(memoryview(raw).cast("B")))
    streams = stage_split(raw, d, counter)
    if table is None:
        table = normalize_table(streams.histogram, prob_bits)
    encoded = stage_encode(streams, table, block_size, counter)
    blob = stage_coalesce(streams, encoded, table_omitted=omit_table, counter=counter)
    return blob, counter


def compress_fused(
    raw,
    dtype: DTypeLike,
    chunk_bytes: int = DEFAULT_CHUNK_BYTES,
    sample_bytes: int = DEFAULT_SAMPLE_BYTES,
    *,
    block_size: int = DEFAULT_BLOCK_SIZE,
    prob_bits: int = DEFAULT_PROB_BITS,
) -> tuple[CompressedBlob, PassCounter]:
    """Single-pass pipeline with a table sampled from the head of each chunk.

    Chunks are rounded up to a whole number of blocks so no block straddles
    two tables.  Each chunk's table comes from the symbols of its first
    ``sample_bytes`` of input; symbols seen only later still decode thanks to
    the frequency floor.
    """
    if sample_bytes <= 0 or chunk_bytes < sample_bytes:
        raise ValueError("need 0 < sample_bytes <= chunk_bytes")
    d = describe_dtype(dtype)
    counter = PassCounter(input_bytes=len(memoryview(raw).cast("B")))
    streams = split_values(raw, d)
    n_sym = len(streams.symbols)

    chunk_syms = max(chunk_bytes // d.group_bytes, 1)
    blocks_per_table = max(-(-chunk_syms // block_size), 1)
    chunk_syms = blocks_per_table * block_size
    sample_syms = max(sample_bytes // d.group_bytes, 1)

    tables: list[FrequencyTable] = []
    for start in range(0, n_sym, chunk_syms):
        hist = build_histogram(streams.symbols[start : start + chunk_syms], sample_syms)
        tables.append(normalize_table(hist, prob_bits))
        counter.read(min(sample_syms, n_sym - start) * d.group_bytes)
    if not tables:
        tables.append(normalize_table(np.zeros(256), prob_bits))

    n_blocks = -(-n_sym // block_size)
    block_table = (np.arange(n_blocks) // blocks_per_table).astype(np.int32)
    sizes, payload = encode_symbols(streams.symbols, tables, block_table, block_size)
    # split + encode + direct placement: one read and one write of the working set
    counter.read(streams.raw_bytes)
    counter.write(streams.raw_bytes)

    blob = CompressedBlob(
        dtype=d,
        n_elements=streams.n_elements,
        symbol_count=n_sym,
        residual=streams.residual,
        tables=tables if n_sym else [],
        block_sizes=sizes,
        blocks=payload,
        tail=streams.tail,
        block_size=block_size,
        prob_bits=prob_bits,
        blocks_per_table=blocks_per_table,
    )
    return blob, counter


def _as_blob(blob: BlobLike) -> CompressedBlob:
    if isinstance(blob, CompressedBlob):
        return blob
    return CompressedBlob.from_bytes(blob)


def decompress(
    blob: BlobLike,
    table: FrequencyTable | Sequence[FrequencyTable] | None = None,
) -> bytes:
    """Rebuild the original bytes.

    ``table`` is required when the blob was written with its table(s)
    omitted; it is ignored otherwise.
    """
    b = _as_blob(blob)
    tables = b.tables
    if b.table_omitted:
        if table is None:
            raise CorruptBlobError("blob omits its frequency table and none was supplied")
        tables = [table] if isinstance(table, FrequencyTable) else list(table)
        if b.symbol_count and len(tables) != b.n_tables:
            raise CorruptBlobError(f"blob needs {b.n_tables} table(s), {len(tables)} supplied")
        if any(t.prob_bits != b.prob_bits for t in tables):
            raise CorruptBlobError("supplied table precision disagrees with the header")
    if b.symbol_count:
        try:
            symbols = decode_symbols(
                b.blocks, b.block_sizes, b.symbol_count, tables, b.block_table_index(), b.block_size
            )
        except CorruptBlockError as exc:
            raise CorruptBlobError(f"block corruption: {exc}") from exc
    else:
        symbols = b""
    streams = SplitStreams(
        dtype=b.dtype,
        n_elements=b.n_elements,
        symbols=symbols,
        residual=b.residual,
        tail=b.tail,
        histogram=np.zeros(256, dtype=np.uint64),
    )
    try:
        return join_values(streams)
    except CorruptStreamError as exc:
        raise CorruptBlobError(str(exc)) from exc


def compression_ratio(blob: BlobLike, original_bytes: int | None = None) -> float:
    """Compressed over original size; lower is better."""
    b = _as_blob(blob)
    original = b.original_bytes if original_bytes is None else original_bytes
    if original <= 0:
        raise ValueError("original_bytes must be positive")
    return b.compressed_total_bytes / original


def entropy_bound_ratio(raw, dtype: DTypeLike) -> float:
    """Lower bound on the ratio: residual kept verbatim, symbols at their empirical entropy."""
    streams = split_values(raw, dtype)
    total_bits = 8 * streams.raw_bytes
    if total_bits == 0:
        return 0.0
    kept = 8 * (len(streams.residual) + len(streams.tail))
    return (kept + ideal_compressed_size(streams.histogram)) / total_bits
