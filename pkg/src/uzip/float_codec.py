"""Bit-level split of float tensors into an exponent symbol stream and a residual.

Every supported format maps a *symbol group* (one element, or a pair of fp8
elements) onto one 8-bit symbol carrying the skewed exponent bits plus a
residual holding everything else.  The split is purely structural, so NaN,
Inf and subnormal payloads survive ``join_values(split_values(x))`` unchanged.

Layouts (bit 0 = least significant, all values little-endian):

========  ===============================  ==================================
format    symbol                           residual
========  ===============================  ==================================
bf16      bits 14..7 (exponent)            ``(sign << 7) | bits 6..0``
f16       bits 15..8 (high byte)           bits 7..0
f32       bits 30..23 (exponent)           ``(sign << 23) | bits 22..0``, 3 B
f8_e4m3   ``(exp_a << 4) | exp_b``         ``nib_a << 4 | nib_b``
f8_e5m2   ``(exp_a >> 1) << 4 | exp_b>>1`` ``nib_a << 4 | nib_b``
========  ===============================  ==================================

For both fp8 formats the symbol nibble is bits 6..3 of the element and the
residual nibble is the element with those four bits removed
(``sign, bit 2, bit 1, bit 0``).  For e4m3 that is exactly the exponent field;
for e5m2 it is the four most significant exponent bits, the exponent LSB
travelling in the residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from uzip.errors import CorruptStreamError, MalformedInputError, UnsupportedFormatError

__all__ = [
    "DTYPE_NAMES",
    "DTypeDescriptor",
    "SplitStreams",
    "describe_dtype",
    "split_values",
    "join_values",
    "symbol_histogram",
]

DTYPE_NAMES = ("bf16", "f16", "f32", "f8_e4m3", "f8_e5m2")


@dataclass(frozen=True)
class DTypeDescriptor:
    name: str
    code: int
    element_bits: int
    elements_per_symbol: int
    residual_bits_per_symbol_group: int
    split_rule: str

    @property
    def element_bytes(self) -> int:
        return self.element_bits // 8

    @property
    def group_bytes(self) -> int:
        """Input bytes consumed per emitted symbol."""
        return self.element_bytes * self.elements_per_symbol

    @property
    def residual_bytes_per_group(self) -> int:
        return self.residual_bits_per_symbol_group // 8

    @property
    def residual_fraction(self) -> float:
        """Share of the input that ends up in the residual stream."""
        return self.residual_bits_per_symbol_group / (self.element_bits * self.elements_per_symbol)


_DESCRIPTORS = {
    "bf16": DTypeDescriptor("bf16", 0, 16, 1, 8, "sym=b[14:7]; res=s<<7|b[6:0]"),
    "f16": DTypeDescriptor("f16", 1, 16, 1, 8, "sym=b[15:8]; res=b[7:0]"),
    "f32": DTypeDescriptor("f32", 2, 32, 1, 24, "sym=b[30:23]; res=s<<23|b[22:0]"),
    "f8_e4m3": DTypeDescriptor("f8_e4m3", 3, 8, 2, 8, "sym=a[6:3]<<4|b[6:3]; res=nib(a)<<4|nib(b)"),
    "f8_e5m2": DTypeDescriptor("f8_e5m2", 4, 8, 2, 8, "sym=a[6:3]<<4|b[6:3]; res=nib(a)<<4|nib(b)"),
}
_BY_CODE = {d.code: d for d in _DESCRIPTORS.values()}

DTypeLike = Union[str, DTypeDescriptor]


def describe_dtype(name: DTypeLike) -> DTypeDescriptor:
    """Return the static descriptor for a format name (or pass one through)."""
    if isinstance(name, DTypeDescriptor):
        return name
    try:
        return _DESCRIPTORS[name]
    except (KeyError, TypeError):
        raise UnsupportedFormatError(
            f"unsupported format {name!r}; expected one of {', '.join(DTYPE_NAMES)}"
        ) from None


def dtype_from_code(code: int) -> DTypeDescriptor:
    try:
        return _BY_CODE[code]
    except KeyError:
        raise UnsupportedFormatError(f"unknown dtype code {code}") from None


@dataclass
class SplitStreams:
    dtype: DTypeDescriptor
    n_elements: int
    symbols: bytes
    residual: bytes
    tail: bytes = b""
    histogram: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.histogram is None:
            self.histogram = symbol_histogram(self.symbols)

    @property
    def raw_bytes(self) -> int:
        return self.n_elements * self.dtype.element_bytes


def symbol_histogram(symbols) -> np.ndarray:
    buf = np.frombuffer(symbols, dtype=np.uint8)
    return np.bincount(buf, minlength=256).astype(np.uint64)


def _check_length(raw_len: int, d: DTypeDescriptor) -> int:
    if raw_len % d.element_bytes:
        raise MalformedInputError(
            f"{raw_len} bytes is not a multiple of the {d.name} element width ({d.element_bytes} B)"
        )
    return raw_len // d.element_bytes


def split_values(raw, dtype: DTypeLike) -> SplitStreams:
    """Split raw little-endian elements into symbol and residual streams."""
    d = describe_dtype(dtype)
    buf = np.frombuffer(memoryview(raw).cast("B"), dtype=np.uint8)
    n = _check_length(buf.size, d)
    tail = b""

    if d.name == "bf16":
        v = buf.view("<u2")
        sym = ((v >> 7) & 0xFF).astype(np.uint8)
        res = (((v >> 8) & 0x80) | (v & 0x7F)).astype(np.uint8)
    elif d.name == "f16":
        v = buf.view("<u2")
        sym = (v >> 8).astype(np.uint8)
        res = (v & 0xFF).astype(np.uint8)
    elif d.name == "f32":
        v = buf.view("<u4")
        sym = ((v >> 23) & 0xFF).astype(np.uint8)
        r24 = ((v >> 8) & 0x800000) | (v & 0x7FFFFF)
        res = np.empty((n, 3), dtype=np.uint8)
        res[:, 0] = r24 & 0xFF
        res[:, 1] = (r24 >> 8) & 0xFF
        res[:, 2] = r24 >> 16
        res = res.reshape(-1)
    else:  # fp8 pairs
        n_pairs = n // 2
        if n % 2:
            tail = buf[-1:].tobytes()
        a = buf[0 : 2 * n_pairs : 2]
        b = buf[1 : 2 * n_pairs : 2]
        sym = (((a >> 3) & 0x0F) << 4) | ((b >> 3) & 0x0F)
        nib_a = ((a >> 4) & 0x08) | (a & 0x07)
        nib_b = ((b >> 4) & 0x08) | (b & 0x07)
        res = ((nib_a << 4) | nib_b).astype(np.uint8)
        sym = sym.astype(np.uint8)

    symbols = sym.tobytes()
    return SplitStreams(
        dtype=d,
        n_elements=n,
        symbols=symbols,
        residual=res.tobytes(),
        tail=tail,
        histogram=np.bincount(sym, minlength=256).astype(np.uint64),
    )


def join_values(streams: SplitStreams) -> bytes:
    """Exact inverse of :func:`split_values`."""
    d = describe_dtype(streams.dtype)
    n = streams.n_elements
    n_groups = n // d.elements_per_symbol
    expected_tail = (n - n_groups * d.elements_per_symbol) * d.element_bytes
    if (
        len(streams.symbols) != n_groups
        or len(streams.residual) != n_groups * d.residual_bytes_per_group
        or len(streams.tail) != expected_tail
    ):
        raise CorruptStreamError(
            f"stream lengths (symbols={len(streams.symbols)}, residual={len(streams.residual)}, "
            f"tail={len(streams.tail)}) disagree with {n} {d.name} elements"
        )
    sym = np.frombuffer(streams.symbols, dtype=np.uint8)
    res = np.frombuffer(streams.residual, dtype=np.uint8)

    if d.name == "bf16":
        s = sym.astype(np.uint16)
        r = res.astype(np.uint16)
        out = ((r & 0x80) << 8) | (s << 7) | (r & 0x7F)
        return out.astype("<u2").tobytes()
    if d.name == "f16":
        out = (sym.astype(np.uint16) << 8) | res
        return out.astype("<u2").tobytes()
    if d.name == "f32":
        r3 = res.reshape(-1, 3).astype(np.uint32)
        r24 = r3[:, 0] | (r3[:, 1] << 8) | (r3[:, 2] << 16)
        out = ((r24 & 0x800000) << 8) | (sym.astype(np.uint32) << 23) | (r24 & 0x7FFFFF)
        return out.astype("<u4").tobytes()

    out = np.empty(n, dtype=np.uint8)
    nib_a = res >> 4
    nib_b = res & 0x0F
    out[0 : 2 * n_groups : 2] = ((nib_a & 0x08) << 4) | ((sym >> 4) << 3) | (nib_a & 0x07)
    out[1 : 2 * n_groups : 2] = ((nib_b & 0x08) << 4) | ((sym & 0x0F) << 3) | (nib_b & 0x07)
    if expected_tail:
        out[-1] = streams.tail[0]
    return out.tobytes()
