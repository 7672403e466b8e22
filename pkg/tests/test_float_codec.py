import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import split_scalar
from uzip.errors import CorruptStreamError, MalformedInputError, UnsupportedFormatError
from uzip.float_codec import (
    DTYPE_NAMES,
    describe_dtype,
    dtype_from_code,
    join_values,
    split_values,
    symbol_histogram,
)


def _u16(*vals):
    return np.array(vals, dtype="<u2").tobytes()


@pytest.mark.parametrize("name", DTYPE_NAMES)
def test_descriptor_bit_budget(name):
    d = describe_dtype(name)
    assert d.element_bits * d.elements_per_symbol == 8 + d.residual_bits_per_symbol_group
    assert dtype_from_code(d.code) is d


def test_descriptor_values():
    assert (describe_dtype("bf16").element_bits, describe_dtype("bf16").elements_per_symbol) == (16, 1)
    assert describe_dtype("bf16").residual_bits_per_symbol_group == 8
    assert describe_dtype("f32").residual_bits_per_symbol_group == 24
    assert describe_dtype("f8_e4m3").elements_per_symbol == 2
    assert describe_dtype("f8_e4m3").residual_bits_per_symbol_group == 8
    assert describe_dtype("bf16").residual_fraction == 0.5
    assert describe_dtype("f32").residual_fraction == 0.75


def test_unknown_dtype():
    with pytest.raises(UnsupportedFormatError):
        describe_dtype("f64")
    with pytest.raises(UnsupportedFormatError):
        dtype_from_code(99)


def test_bf16_examples():
    s = split_values(_u16(0x3F80, 0xBFC0), "bf16")
    assert s.symbols == bytes([0x7F, 0x7F])
    assert s.residual == bytes([0x00, 0xC0])


def test_bf16_join_example():
    d = describe_dtype("bf16")
    s = split_values(_u16(0x3F80), d)
    assert join_values(s) == _u16(0x3F80)


def test_f16_example():
    s = split_values(_u16(0x3C00), "f16")
    assert (s.symbols, s.residual) == (b"\x3c", b"\x00")


def test_e4m3_pair_example():
    s = split_values(bytes([0x38, 0x38]), "f8_e4m3")
    assert (s.symbols, s.residual, s.tail) == (b"\x77", b"\x00", b"")


def test_fp8_odd_tail():
    raw = bytes([0x38, 0xB9, 0x7E])
    s = split_values(raw, "f8_e5m2")
    assert s.tail == b"\x7e"
    assert len(s.symbols) == 1
    assert join_values(s) == raw


def test_f32_residual_is_three_le_bytes():
    v = np.array([0xC0490FDB], dtype="<u4").tobytes()  # -pi
    s = split_values(v, "f32")
    assert s.symbols == bytes([0x80])
    assert s.residual == ((1 << 23) | 0x490FDB).to_bytes(3, "little")


def test_wrong_length():
    with pytest.raises(MalformedInputError):
        split_values(b"\x00\x01\x02", "bf16")
    with pytest.raises(MalformedInputError):
        split_values(b"\x00" * 6, "f32")


def test_join_rejects_bad_lengths():
    s = split_values(_u16(1, 2, 3), "bf16")
    s.residual = s.residual[:-1]
    with pytest.raises(CorruptStreamError):
        join_values(s)


@pytest.mark.parametrize("name", DTYPE_NAMES)
def test_matches_scalar_oracle(name, rng):
    d = describe_dtype(name)
    raw = rng.integers(0, 256, 2001 * d.element_bytes, dtype=np.uint8).tobytes()
    s = split_values(raw, name)
    assert (s.symbols, s.residual, s.tail) == split_scalar(raw, name)


@pytest.mark.parametrize("name", DTYPE_NAMES)
def test_stream_length_invariants(name, rng):
    d = describe_dtype(name)
    n = 1001
    s = split_values(rng.integers(0, 256, n * d.element_bytes, dtype=np.uint8).tobytes(), name)
    assert len(s.symbols) == n // d.elements_per_symbol
    assert len(s.residual) == len(s.symbols) * d.residual_bits_per_symbol_group // 8
    assert int(s.histogram.sum()) == len(s.symbols)
    brute = np.zeros(256, dtype=np.uint64)
    for b in s.symbols:
        brute[b] += 1
    assert np.array_equal(s.histogram, brute)
    assert np.array_equal(symbol_histogram(s.symbols), brute)


def test_residual_fraction_bytes(rng):
    raw = rng.integers(0, 256, 4000, dtype=np.uint8).tobytes()
    assert len(split_values(raw, "bf16").residual) == 2000
    assert len(split_values(raw, "f32").residual) == 3000


def test_million_bf16_roundtrip(rng):
    raw = rng.integers(0, 1 << 16, 1_000_000, dtype=np.uint16).tobytes()
    assert join_values(split_values(raw, "bf16")) == raw


@settings(max_examples=200, deadline=None)
@given(name=st.sampled_from(DTYPE_NAMES), data=st.data())
def test_roundtrip_property(name, data):
    d = describe_dtype(name)
    n = data.draw(st.integers(0, 300))
    raw = data.draw(st.binary(min_size=n * d.element_bytes, max_size=n * d.element_bytes))
    assert join_values(split_values(raw, name)) == raw


@settings(max_examples=100, deadline=None)
@given(name=st.sampled_from(DTYPE_NAMES), data=st.data())
def test_split_is_structural(name, data):
    # flipping one input bit changes exactly one bit across symbols/residual/tail
    d = describe_dtype(name)
    n = data.draw(st.integers(2, 64))
    raw = bytearray(data.draw(st.binary(min_size=n * d.element_bytes, max_size=n * d.element_bytes)))
    bit = data.draw(st.integers(0, 8 * len(raw) - 1))
    a = split_values(bytes(raw), name)
    raw[bit // 8] ^= 1 << (bit % 8)
    b = split_values(bytes(raw), name)
    flat_a = a.symbols + a.residual + a.tail
    flat_b = b.symbols + b.residual + b.tail
    diff = sum(bin(x ^ y).count("1") for x, y in zip(flat_a, flat_b))
    assert diff == 1
