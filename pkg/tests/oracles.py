"""Independent scalar reference implementations used only by the tests.

These are written directly from the bit layouts and coder definition with
plain Python integers, sharing no code with the package.
"""

import struct

L = 1 << 16


def rans_encode(symbols, freqs, prob_bits):
    cum = [0]
    for f in freqs:
        cum.append(cum[-1] + f)
    x = L
    emitted = []
    for s in reversed(list(symbols)):
        f = freqs[s]
        while x >= (f << (32 - prob_bits)):
            emitted.append(x & 0xFFFF)
            x >>= 16
        x = ((x // f) << prob_bits) + (x % f) + cum[s]
    words = emitted[::-1]
    return struct.pack("<I", x) + struct.pack(f"<{len(words)}H", *words)


def rans_decode(payload, n, freqs, prob_bits):
    cum = [0]
    for f in freqs:
        cum.append(cum[-1] + f)
    slot2sym = []
    for s, f in enumerate(freqs):
        slot2sym += [s] * f
    (x,) = struct.unpack_from("<I", payload, 0)
    pos = 4
    mask = (1 << prob_bits) - 1
    out = []
    for _ in range(n):
        slot = x & mask
        s = slot2sym[slot]
        out.append(s)
        x = freqs[s] * (x >> prob_bits) + slot - cum[s]
        while x < L:
            if pos + 2 > len(payload):
                raise ValueError("ran out of words")
            x = (x << 16) | struct.unpack_from("<H", payload, pos)[0]
            pos += 2
    if x != L or pos != len(payload):
        raise ValueError("bad final state")
    return bytes(out)


def split_scalar(raw: bytes, dtype: str):
    """Return (symbols, residual, tail) computed one element at a time."""
    sym, res, tail = bytearray(), bytearray(), b""
    if dtype in ("bf16", "f16"):
        for (v,) in struct.iter_unpack("<H", raw):
            if dtype == "bf16":
                sign, exp, man = v >> 15, (v >> 7) & 0xFF, v & 0x7F
                sym.append(exp)
                res.append((sign << 7) | man)
            else:
                sym.append(v >> 8)
                res.append(v & 0xFF)
    elif dtype == "f32":
        for (v,) in struct.iter_unpack("<I", raw):
            sign, exp, man = v >> 31, (v >> 23) & 0xFF, v & 0x7FFFFF
            sym.append(exp)
            res += ((sign << 23) | man).to_bytes(3, "little")
    else:  # both fp8 formats: 4 bits below the sign form the symbol nibble
        pairs = len(raw) // 2
        for i in range(pairs):
            a, b = raw[2 * i], raw[2 * i + 1]
            ea, eb = (a >> 3) & 0xF, (b >> 3) & 0xF
            na = ((a >> 7) << 3) | (a & 0x7)
            nb = ((b >> 7) << 3) | (b & 0x7)
            sym.append((ea << 4) | eb)
            res.append((na << 4) | nb)
        tail = bytes(raw[2 * pairs :])
    return bytes(sym), bytes(res), tail
