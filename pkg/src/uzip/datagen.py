"""Synthetic tensors and numpy views for each supported format."""

from __future__ import annotations

import ml_dtypes
import numpy as np

from uzip.float_codec import DTypeLike, describe_dtype

NUMPY_DTYPES = {
    "bf16": np.dtype(ml_dtypes.bfloat16),
    "f16": np.dtype(np.float16),
    "f32": np.dtype(np.float32),
    "f8_e4m3": np.dtype(ml_dtypes.float8_e4m3fn),
    "f8_e5m2": np.dtype(ml_dtypes.float8_e5m2),
}


def numpy_dtype(dtype: DTypeLike) -> np.dtype:
    return NUMPY_DTYPES[describe_dtype(dtype).name]


def uniform_tensor(n_elements: int, dtype: DTypeLike = "bf16", seed: int = 42, low=-1.0, high=1.0) -> np.ndarray:
    """``n_elements`` values uniform in ``[low, high)`` rounded to ``dtype``."""
    rng = np.random.default_rng(seed)
    out = np.empty(n_elements, dtype=numpy_dtype(dtype))
    step = 1 << 22  # bounded f32 scratch
    for start in range(0, n_elements, step):
        stop = min(start + step, n_elements)
        out[start:stop] = rng.uniform(low, high, stop - start).astype(np.float32)
    return out


def uniform_bytes(nbytes: int, dtype: DTypeLike = "bf16", seed: int = 42) -> bytes:
    """Raw little-endian bytes of a uniform tensor covering ``nbytes`` (must be whole elements)."""
    d = describe_dtype(dtype)
    if nbytes % d.element_bytes:
        raise ValueError(f"{nbytes} bytes is not a whole number of {d.name} elements")
    return uniform_tensor(nbytes // d.element_bytes, d, seed).tobytes()


def random_bit_patterns(n_elements: int, dtype: DTypeLike, rng: np.random.Generator) -> np.ndarray:
    """Arbitrary bit patterns (NaN, Inf, subnormals included) as a ``dtype`` array."""
    nd = numpy_dtype(dtype)
    raw = rng.integers(0, 256, n_elements * nd.itemsize, dtype=np.uint8)
    return raw.view(nd)


def as_array(raw, dtype: DTypeLike) -> np.ndarray:
    return np.frombuffer(memoryview(raw).cast("B"), dtype=numpy_dtype(dtype))


def reduce_pair(acc: np.ndarray, other: np.ndarray, op: str = "sum") -> np.ndarray:
    """``acc + other`` computed in f32 and rounded back to the operands' dtype."""
    if op != "sum":
        raise ValueError(f"unsupported reduce op {op!r}")
    with np.errstate(all="ignore"):
        wide = acc.astype(np.float32) + other.astype(np.float32)
        return wide.astype(acc.dtype)
