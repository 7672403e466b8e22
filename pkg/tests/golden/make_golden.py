"""Regenerate the golden wire-format vectors (run from the repository root).

Only rerun this on a deliberate format change; the tests treat the committed
files as ground truth.
"""

from pathlib import Path

import numpy as np

from uzip.compressor import compress_fused, compress_staged
from uzip.datagen import uniform_tensor
from uzip.float_codec import DTYPE_NAMES

HERE = Path(__file__).parent
N_ELEMENTS = 6001  # odd, so fp8 formats carry a tail byte
FUSED_CHUNK = 4096
FUSED_SAMPLE = 512


def golden_input(dtype: str) -> bytes:
    x = uniform_tensor(N_ELEMENTS, dtype, seed=7)
    raw = bytearray(x.tobytes())
    # a few special patterns at fixed offsets: zeros, all-ones exponent, smallest subnormal
    w = x.dtype.itemsize
    raw[0:w] = b"\x00" * w
    raw[w : 2 * w] = b"\xff" * w
    raw[2 * w : 3 * w] = (1).to_bytes(w, "little")
    return bytes(raw)


def main() -> None:
    for dtype in DTYPE_NAMES:
        raw = golden_input(dtype)
        (HERE / f"{dtype}.raw").write_bytes(raw)
        staged, _ = compress_staged(raw, dtype, block_size=1024)
        (HERE / f"{dtype}.staged.uzc").write_bytes(staged.to_bytes())
        fused, _ = compress_fused(raw, dtype, FUSED_CHUNK, FUSED_SAMPLE, block_size=1024)
        (HERE / f"{dtype}.fused.uzc").write_bytes(fused.to_bytes())
        print(dtype, len(raw), staged.compressed_total_bytes, fused.compressed_total_bytes, fused.n_tables)


if __name__ == "__main__":
    main()
