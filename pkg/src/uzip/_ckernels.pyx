# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rANS block kernels.

Same contract as ``uzip._pykernels``; the two must stay byte-identical.
"""

import numpy as np

from libc.stdint cimport int32_t, int64_t, uint8_t, uint16_t, uint32_t, uint64_t

cdef uint64_t STATE_LOWER = 1 << 16


def encode_blocks(const uint8_t[::1] symbols,
                  const uint32_t[:, ::1] freqs,
                  const uint32_t[:, ::1] cums,
                  const int32_t[::1] block_table,
                  int prob_bits,
                  Py_ssize_t block_size):
    cdef Py_ssize_t n = symbols.shape[0]
    cdef Py_ssize_t n_blocks = (n + block_size - 1) // block_size
    sizes_arr = np.empty(n_blocks, dtype=np.uint32)
    out_arr = np.empty(4 * n_blocks + 2 * n, dtype=np.uint8)
    words_arr = np.empty(max(block_size, 1), dtype=np.uint16)
    cdef uint32_t[::1] sizes = sizes_arr
    cdef uint8_t[::1] out = out_arr
    cdef uint16_t[::1] words = words_arr
    cdef Py_ssize_t b, i, k, lo, hi, nw
    cdef Py_ssize_t pos = 0
    cdef uint64_t x, f, c
    cdef uint16_t w
    cdef uint8_t s
    cdef int32_t t
    cdef int shift = 32 - prob_bits

    with nogil:
        for b in range(n_blocks):
            lo = b * block_size
            hi = lo + block_size
            if hi > n:
                hi = n
            t = block_table[b]
            x = STATE_LOWER
            nw = 0
            i = hi - 1
            while i >= lo:
                s = symbols[i]
                f = freqs[t, s]
                c = cums[t, s]
                if x >= (f << shift):
                    words[nw] = <uint16_t>(x & 0xFFFF)
                    nw += 1
                    x >>= 16
                x = ((x // f) << prob_bits) + (x % f) + c
                i -= 1
            out[pos] = <uint8_t>(x & 0xFF)
            out[pos + 1] = <uint8_t>((x >> 8) & 0xFF)
            out[pos + 2] = <uint8_t>((x >> 16) & 0xFF)
            out[pos + 3] = <uint8_t>((x >> 24) & 0xFF)
            for k in range(nw):
                w = words[nw - 1 - k]
                out[pos + 4 + 2 * k] = <uint8_t>(w & 0xFF)
                out[pos + 5 + 2 * k] = <uint8_t>(w >> 8)
            sizes[b] = <uint32_t>(4 + 2 * nw)
            pos += 4 + 2 * nw
    return sizes_arr, out_arr[:pos]


def decode_blocks(const uint8_t[::1] payload,
                  const uint32_t[::1] sizes,
                  Py_ssize_t n_symbols,
                  Py_ssize_t block_size,
                  const uint32_t[:, ::1] freqs,
                  const uint32_t[:, ::1] cums,
                  const uint8_t[:, ::1] slot2sym,
                  const int32_t[::1] block_table,
                  int prob_bits):
    """Returns ``(symbols, bad_block)``; ``bad_block`` is -1 when every block checks out."""
    cdef Py_ssize_t n_blocks = sizes.shape[0]
    out_arr = np.empty(n_symbols, dtype=np.uint8)
    cdef uint8_t[::1] out = out_arr
    cdef Py_ssize_t b, i, lo, hi, p, end
    cdef Py_ssize_t start = 0
    cdef Py_ssize_t bad = -1
    cdef uint64_t x, slot, mask = (1 << prob_bits) - 1
    cdef uint8_t s
    cdef int32_t t

    with nogil:
        for b in range(n_blocks):
            end = start + sizes[b]
            lo = b * block_size
            hi = lo + block_size
            if hi > n_symbols:
                hi = n_symbols
            if sizes[b] < 4 or end > payload.shape[0]:
                bad = b
                break
            t = block_table[b]
            x = (<uint64_t>payload[start] | (<uint64_t>payload[start + 1] << 8)
                 | (<uint64_t>payload[start + 2] << 16) | (<uint64_t>payload[start + 3] << 24))
            p = start + 4
            for i in range(lo, hi):
                slot = x & mask
                s = slot2sym[t, slot]
                out[i] = s
                x = freqs[t, s] * (x >> prob_bits) + slot - cums[t, s]
                if x < STATE_LOWER:
                    if p + 2 > end:
                        bad = b
                        break
                    x = (x << 16) | <uint64_t>payload[p] | (<uint64_t>payload[p + 1] << 8)
                    p += 2
            if bad >= 0:
                break
            if x != STATE_LOWER or p != end:
                bad = b
                break
            start = end
    return out_arr, bad
