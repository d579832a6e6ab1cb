"""Independent reference implementations used only as test oracles.

Nothing here imports the corresponding production code paths: the MD5 is a
from-scratch RFC 1321 transcription, and the quantization reference works
in plain Python floats.
"""

from __future__ import annotations

import math
import struct

# ---------------------------------------------------------------- MD5 oracle

_S = (
    [7, 12, 17, 22] * 4
    + [5, 9, 14, 20] * 4
    + [4, 11, 16, 23] * 4
    + [6, 10, 15, 21] * 4
)
_T = [int(4294967296 * abs(math.sin(i + 1))) & 0xFFFFFFFF for i in range(64)]
_MASK = 0xFFFFFFFF


def _rotl(x: int, n: int) -> int:
    return ((x << n) | (x >> (32 - n))) & _MASK


def md5_reference(message: bytes) -> str:
    """RFC 1321 MD5, straight transcription of the algorithm."""
    a0, b0, c0, d0 = 0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476
    length = len(message)
    message = message + b"\x80"
    message += b"\x00" * ((56 - len(message) % 64) % 64)
    message += struct.pack("<Q", (length * 8) & 0xFFFFFFFFFFFFFFFF)

    for chunk_at in range(0, len(message), 64):
        m = struct.unpack("<16I", message[chunk_at : chunk_at + 64])
        a, b, c, d = a0, b0, c0, d0
        for i in range(64):
            if i < 16:
                f = (b & c) | (~b & d)
                g = i
            elif i < 32:
                f = (d & b) | (~d & c)
                g = (5 * i + 1) % 16
            elif i < 48:
                f = b ^ c ^ d
                g = (3 * i + 5) % 16
            else:
                f = c ^ (b | (~d & _MASK))
                g = (7 * i) % 16
            f = (f + a + _T[i] + m[g]) & _MASK
            a, d, c = d, c, b
            b = (b + _rotl(f, _S[i])) & _MASK
        a0 = (a0 + a) & _MASK
        b0 = (b0 + b) & _MASK
        c0 = (c0 + c) & _MASK
        d0 = (d0 + d) & _MASK
    return struct.pack("<4I", a0, b0, c0, d0).hex()


# RFC 1321 appendix A.5 test suite
RFC1321_SUITE = {
    "": "d41d8cd98f00b204e9800998ecf8427e",
    "a": "0cc175b9c0f1b6a831c399e269772661",
    "abc": "900150983cd24fb0d6963f7d28e17f72",
    "message digest": "f96b697d7cb7938d525a2f31aaf161d0",
    "abcdefghijklmnopqrstuvwxyz": "c3fcd3d76192e4007dfb496cca67e13b",
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789": (
        "d174ab98d277d9f5a5611c2c9f419d9f"
    ),
    "1234567890" * 8: "57edf4a22be3c955ac49da2e2107b67a",
}


# ------------------------------------------------- block quantization oracle


def quant_roundtrip_bound(values: list[float]) -> tuple[list[float], float]:
    """Plain-float reference: (dequantized values, worst-case error bound).

    The bound is amax/14 plus the exact half-precision storage slack of the
    scale plus a small float32-arithmetic guard.
    """
    amax = max(abs(v) for v in values)
    if amax == 0.0:
        return [0.0] * len(values), 0.0
    scale = amax / 7.0
    stored = float(struct.unpack("<e", struct.pack("<e", scale))[0])
    codes = []
    for v in values:
        q = v / scale
        r = math.floor(abs(q) + 0.5) * (1 if q >= 0 else -1)
        codes.append(max(-7, min(7, r)))
    dequant = [c * stored for c in codes]
    bound = amax / 14.0 + 7.0 * abs(scale - stored) + amax * 2.0**-20
    return dequant, bound
