"""Pure-Python (numpy) rANS block kernels.

Blocks are independent, so instead of looping symbol by symbol this steps all
blocks in lockstep: iteration ``j`` handles position ``j`` of every block as one
vector operation.  Only the final block may be short, which keeps the active
set a contiguous prefix.  With a 32-bit state, 16-bit words and
``prob_bits <= 14`` each step emits (or consumes) at most one word per block.
"""

from __future__ import annotations

import numpy as np

STATE_LOWER = 1 << 16


def _layout(n: int, block_size: int):
    n_blocks = -(-n // block_size)
    starts = np.arange(n_blocks, dtype=np.int64) * block_size
    last_len = n - (n_blocks - 1) * block_size if n_blocks else 0
    return n_blocks, starts, last_len


def encode_blocks(symbols, freqs, cums, block_table, prob_bits, block_size):
    sym = np.asarray(symbols, dtype=np.uint8)
    n = sym.size
    n_blocks, starts, last_len = _layout(n, block_size)
    if n_blocks == 0:
        return np.empty(0, np.uint32), np.empty(0, np.uint8)
    freqs = np.asarray(freqs, dtype=np.uint64)
    cums = np.asarray(cums, dtype=np.uint64)
    tbl = np.asarray(block_table, dtype=np.int64)
    shift = np.uint64(32 - prob_bits)
    nbits = np.uint64(prob_bits)

    x = np.full(n_blocks, STATE_LOWER, dtype=np.uint64)
    words = np.zeros((n_blocks, min(block_size, n)), dtype=np.uint16)
    nw = np.zeros(n_blocks, dtype=np.int64)
    maxlen = min(block_size, n)
    for j in range(maxlen - 1, -1, -1):
        k = n_blocks if j < last_len else n_blocks - 1
        s = sym[starts[:k] + j]
        t = tbl[:k]
        f = freqs[t, s]
        c = cums[t, s]
        xs = x[:k]
        emit = xs >= (f << shift)
        if emit.any():
            rows = np.flatnonzero(emit)
            words[rows, nw[rows]] = (xs[rows] & 0xFFFF).astype(np.uint16)
            nw[rows] += 1
            xs = np.where(emit, xs >> np.uint64(16), xs)
        x[:k] = ((xs // f) << nbits) + (xs % f) + c

    sizes = (4 + 2 * nw).astype(np.uint32)
    offsets = np.zeros(n_blocks, dtype=np.int64)
    np.cumsum(sizes[:-1], out=offsets[1:])
    out = np.empty(int(sizes.sum(dtype=np.int64)), dtype=np.uint8)
    for byte in range(4):
        out[offsets + byte] = (x >> np.uint64(8 * byte)) & 0xFF
    rows, ks = np.nonzero(np.arange(words.shape[1])[None, :] < nw[:, None])
    pos = offsets[rows] + 4 + 2 * (nw[rows] - 1 - ks)
    w = words[rows, ks]
    out[pos] = w & 0xFF
    out[pos + 1] = w >> 8
    return sizes, out


def decode_blocks(payload, sizes, n_symbols, block_size, freqs, cums, slot2sym, block_table, prob_bits):
    buf = np.asarray(payload, dtype=np.uint8)
    sizes = np.asarray(sizes, dtype=np.int64)
    n_blocks, starts, last_len = _layout(n_symbols, block_size)
    out = np.empty(n_symbols, dtype=np.uint8)
    if sizes.size != n_blocks:
        return out, 0
    if n_blocks == 0:
        return out, -1
    ends = np.cumsum(sizes)
    offsets = ends - sizes
    bad = (sizes < 4) | (ends > buf.size)
    if bad.any():
        return out, int(np.flatnonzero(bad)[0])

    freqs = np.asarray(freqs, dtype=np.uint64)
    cums = np.asarray(cums, dtype=np.uint64)
    tbl = np.asarray(block_table, dtype=np.int64)
    mask = np.uint64((1 << prob_bits) - 1)
    nbits = np.uint64(prob_bits)

    x = np.zeros(n_blocks, dtype=np.uint64)
    for byte in range(4):
        x |= buf[offsets + byte].astype(np.uint64) << np.uint64(8 * byte)
    p = offsets + 4
    failed = np.zeros(n_blocks, dtype=bool)
    for j in range(min(block_size, n_symbols)):
        k = n_blocks if j < last_len else n_blocks - 1
        xs = x[:k]
        t = tbl[:k]
        slot = xs & mask
        s = slot2sym[t, slot]
        out[starts[:k] + j] = s
        xs = freqs[t, s] * (xs >> nbits) + slot - cums[t, s]
        need = xs < STATE_LOWER
        if need.any():
            rows = np.flatnonzero(need)
            pr = p[rows]
            short = pr + 2 > ends[rows]
            if short.any():
                failed[rows[short]] = True
                rows = rows[~short]
                pr = pr[~short]
            word = buf[pr].astype(np.uint64) | (buf[pr + 1].astype(np.uint64) << np.uint64(8))
            xs[rows] = (xs[rows] << np.uint64(16)) | word
            p[rows] += 2
        x[:k] = xs
    failed |= (x != STATE_LOWER) | (p != ends)
    return out, (int(np.flatnonzero(failed)[0]) if failed.any() else -1)
