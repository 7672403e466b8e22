"""Compare the compiled and numpy rANS kernels on exponent-like symbol streams.

    python3 benchmarks/bench_kernels.py --symbols 10000000 --repeat 3
"""

import argparse
import time

import numpy as np

from uzip._backend import compiled_kernels
from uzip.ans import build_histogram, decode_symbols, encode_symbols, normalize_table
from uzip.datagen import uniform_tensor
from uzip.float_codec import split_values


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--symbols", type=int, default=10_000_000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--dtype", default="bf16")
    args = p.parse_args(argv)

    streams = split_values(uniform_tensor(args.symbols, args.dtype, seed=1).tobytes(), args.dtype)
    symbols = streams.symbols
    table = normalize_table(build_histogram(symbols))
    n = len(symbols)
    mib = n / (1 << 20)

    backends = ["python"] + (["cython"] if compiled_kernels is not None else [])
    results = {}
    for name in backends:
        t_enc, (sizes, payload) = best_of(lambda: encode_symbols(symbols, [table], backend=name), args.repeat)
        t_dec, out = best_of(lambda: decode_symbols(payload, sizes, n, [table], backend=name), args.repeat)
        assert out == bytes(symbols)
        results[name] = (t_enc, t_dec, payload)
        print(
            f"{name:>7}: encode {t_enc:.3f}s ({mib / t_enc:7.1f} MiB/s)  "
            f"decode {t_dec:.3f}s ({mib / t_dec:7.1f} MiB/s)  payload {len(payload)} B"
        )
    if len(results) == 2:
        py, cy = results["python"], results["cython"]
        print(f"identical payloads: {py[2] == cy[2]}")
        print(f"speedup: encode x{py[0] / cy[0]:.1f}  decode x{py[1] / cy[1]:.1f}")
    else:
        print("compiled kernels not built; only the numpy backend was measured")


if __name__ == "__main__":
    main()
