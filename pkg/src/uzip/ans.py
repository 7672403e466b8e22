"""Range-variant ANS over 8-bit symbols with independent fixed-size blocks.

Coder parameters: 32-bit state kept in ``[2**16, 2**32)``, 16-bit
renormalization words, symbols encoded in reverse so the decoder runs forward.
A block's payload is the final encoder state (u32 LE) followed by the emitted
words (u16 LE) in decode order.  Decoding must end with the state back at
``2**16`` and every word consumed; anything else is a corrupt block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from uzip._backend import get_kernels
from uzip.errors import CorruptBlockError

DEFAULT_PROB_BITS = 12
DEFAULT_BLOCK_SIZE = 4096
MIN_PROB_BITS = 8  # 256 symbols each need a slot
MAX_PROB_BITS = 14
TABLE_BYTES = 512


class FrequencyTable:
    """Normalized 256-entry table: ``sum(freqs) == 2**prob_bits``, every freq >= 1."""

    __slots__ = ("freqs", "prob_bits", "cumulative", "_slot2sym")

    def __init__(self, freqs, prob_bits: int = DEFAULT_PROB_BITS):
        f = np.asarray(freqs, dtype=np.uint32).copy()
        if f.shape != (256,):
            raise ValueError("a frequency table needs exactly 256 entries")
        if not MIN_PROB_BITS <= prob_bits <= MAX_PROB_BITS:
            raise ValueError(f"prob_bits must be in [{MIN_PROB_BITS}, {MAX_PROB_BITS}], got {prob_bits}")
        if f.min() < 1 or int(f.sum(dtype=np.uint64)) != 1 << prob_bits:
            raise ValueError("frequencies must be >= 1 and sum to 2**prob_bits")
        f.flags.writeable = False
        self.freqs = f
        self.prob_bits = prob_bits
        cum = np.zeros(257, dtype=np.uint32)
        np.cumsum(f, out=cum[1:])
        cum.flags.writeable = False
        self.cumulative = cum
        self._slot2sym = None

    @property
    def slot_to_symbol(self) -> np.ndarray:
        if self._slot2sym is None:
            self._slot2sym = np.repeat(np.arange(256, dtype=np.uint8), self.freqs)
        return self._slot2sym

    def to_bytes(self) -> bytes:
        return self.freqs.astype("<u2").tobytes()

    @classmethod
    def from_bytes(cls, data, prob_bits: int = DEFAULT_PROB_BITS) -> "FrequencyTable":
        if len(data) != TABLE_BYTES:
            raise ValueError(f"serialized table must be {TABLE_BYTES} bytes, got {len(data)}")
        return cls(np.frombuffer(data, dtype="<u2"), prob_bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrequencyTable):
            return NotImplemented
        return self.prob_bits == other.prob_bits and np.array_equal(self.freqs, other.freqs)

    def __hash__(self) -> int:
        return hash((self.prob_bits, self.freqs.tobytes()))

    def __repr__(self) -> str:
        used = int((self.freqs > 1).sum())
        return f"FrequencyTable(prob_bits={self.prob_bits}, symbols_above_floor={used})"


@dataclass(frozen=True)
class EncodedBlock:
    n_symbols: int
    payload: bytes


def build_histogram(symbols, sample_limit: int | None = None) -> np.ndarray:
    """Symbol counts over the first ``sample_limit`` bytes (all of them if None)."""
    buf = np.frombuffer(memoryview(symbols).cast("B"), dtype=np.uint8)
    if sample_limit is not None:
        buf = buf[: max(sample_limit, 0)]
    return np.bincount(buf, minlength=256).astype(np.uint64)


def normalize_table(counts, prob_bits: int = DEFAULT_PROB_BITS) -> FrequencyTable:
    """Scale counts to ``2**prob_bits`` keeping a floor of 1 for every symbol.

    Unseen symbols get exactly 1; observed symbols share the rest in
    proportion to their counts (rounded down, at least 1).  The leftover
    deficit or surplus is settled one unit at a time, visiting symbols by
    descending count then ascending value.
    """
    if not MIN_PROB_BITS <= prob_bits <= MAX_PROB_BITS:
        raise ValueError(f"prob_bits must be in [{MIN_PROB_BITS}, {MAX_PROB_BITS}], got {prob_bits}")
    counts = np.asarray(counts, dtype=np.uint64)
    target = 1 << prob_bits
    total = int(counts.sum())
    if total == 0:
        return FrequencyTable(np.full(256, target // 256, dtype=np.uint32), prob_bits)

    seen = counts > 0
    budget = target - int((~seen).sum())
    freqs = np.ones(256, dtype=np.int64)
    scaled = [c * budget // total for c in counts[seen].tolist()]
    freqs[seen] = np.maximum(np.array(scaled, dtype=np.int64), 1)

    order = [s for s in sorted(range(256), key=lambda s: (-int(counts[s]), s)) if seen[s]]
    diff = target - int(freqs.sum())
    while diff > 0:
        for s in order:
            if diff == 0:
                break
            freqs[s] += 1
            diff -= 1
    while diff < 0:
        moved = False
        for s in order:
            if diff == 0:
                break
            if freqs[s] > 1:
                freqs[s] -= 1
                diff += 1
                moved = True
        if not moved:  # unreachable: budget always leaves room above the floor
            raise AssertionError("cannot normalize table")
    return FrequencyTable(freqs.astype(np.uint32), prob_bits)


def _stack_tables(tables: Sequence[FrequencyTable]):
    prob_bits = tables[0].prob_bits
    if any(t.prob_bits != prob_bits for t in tables):
        raise ValueError("all tables in one call must share prob_bits")
    freqs = np.ascontiguousarray(np.stack([t.freqs for t in tables]), dtype=np.uint32)
    cums = np.ascontiguousarray(np.stack([t.cumulative for t in tables]), dtype=np.uint32)
    return freqs, cums, prob_bits


def encode_symbols(
    symbols,
    tables: Sequence[FrequencyTable],
    block_table=None,
    block_size: int = DEFAULT_BLOCK_SIZE,
    backend: str | None = None,
) -> tuple[np.ndarray, bytes]:
    """Encode a symbol stream as consecutive blocks.

    ``block_table[b]`` selects which of ``tables`` block ``b`` uses (all use
    table 0 if omitted).  Returns the per-block payload sizes and the
    concatenated payloads.
    """
    sym = np.frombuffer(memoryview(symbols).cast("B"), dtype=np.uint8)
    n_blocks = -(-sym.size // block_size)
    if block_table is None:
        block_table = np.zeros(n_blocks, dtype=np.int32)
    block_table = np.ascontiguousarray(block_table, dtype=np.int32)
    if block_table.size != n_blocks:
        raise ValueError("block_table needs one entry per block")
    freqs, cums, prob_bits = _stack_tables(tables)
    sizes, payload = get_kernels(backend).encode_blocks(
        sym, freqs, cums, block_table, prob_bits, block_size
    )
    return np.asarray(sizes, dtype=np.uint32), np.asarray(payload).tobytes()


def decode_symbols(
    payload,
    sizes,
    n_symbols: int,
    tables: Sequence[FrequencyTable],
    block_table=None,
    block_size: int = DEFAULT_BLOCK_SIZE,
    backend: str | None = None,
) -> bytes:
    """Inverse of :func:`encode_symbols`; raises :class:`CorruptBlockError`."""
    sizes = np.ascontiguousarray(sizes, dtype=np.uint32)
    n_blocks = -(-n_symbols // block_size)
    if sizes.size != n_blocks:
        raise CorruptBlockError(f"expected {n_blocks} blocks for {n_symbols} symbols, got {sizes.size}")
    if block_table is None:
        block_table = np.zeros(n_blocks, dtype=np.int32)
    block_table = np.ascontiguousarray(block_table, dtype=np.int32)
    if block_table.size and (block_table.min() < 0 or block_table.max() >= len(tables)):
        raise CorruptBlockError("block references a missing frequency table")
    freqs, cums, prob_bits = _stack_tables(tables)
    slot2sym = np.ascontiguousarray(np.stack([t.slot_to_symbol for t in tables]))
    buf = np.frombuffer(memoryview(payload).cast("B"), dtype=np.uint8)
    out, bad = get_kernels(backend).decode_blocks(
        buf, sizes, n_symbols, block_size, freqs, cums, slot2sym, block_table, prob_bits
    )
    if bad >= 0:
        raise CorruptBlockError(f"block {bad} failed to decode")
    return np.asarray(out).tobytes()


def encode_block(symbols, table: FrequencyTable, block_size: int = DEFAULT_BLOCK_SIZE) -> EncodedBlock:
    n = len(symbols)
    if n > block_size:
        raise ValueError(f"block holds at most {block_size} symbols, got {n}")
    if n == 0:
        return EncodedBlock(0, b"")
    _, payload = encode_symbols(symbols, [table], block_size=max(n, 1))
    return EncodedBlock(n, payload)


def decode_block(block: EncodedBlock, table: FrequencyTable) -> bytes:
    if block.n_symbols == 0:
        if block.payload:
            raise CorruptBlockError("trailing bytes after an empty block")
        return b""
    return decode_symbols(
        block.payload, [len(block.payload)], block.n_symbols, [table], block_size=block.n_symbols
    )


def ideal_compressed_size(histogram) -> float:
    """Shannon bound in bits: ``sum(c * -log2(c / total))`` over nonzero counts."""
    counts = [int(c) for c in np.asarray(histogram).tolist() if c]
    total = sum(counts)
    return sum(c * -math.log2(c / total) for c in counts)


def cross_entropy_bits(histogram, table: FrequencyTable) -> float:
    """Bits needed to code ``histogram`` under ``table``'s implied distribution."""
    h = np.asarray(histogram, dtype=np.float64)
    p = table.freqs.astype(np.float64) / (1 << table.prob_bits)
    return float(-(h * np.log2(p)).sum())
