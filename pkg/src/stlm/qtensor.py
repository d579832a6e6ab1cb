"""Block-wise 4-bit weight quantization codec and the matvec kernel built on it.

Block format (18 bytes per 32 weights, 4.5 bits/weight effective):
    - 2 bytes: IEEE 754 half-precision scale, little-endian
    - 16 bytes: 32 four-bit codes, two per byte
      (low nibble = even element index, high nibble = odd element index)

Codes are offset-binary: stored value in [0, 15], logical value = code - 8.
The encoder emits codes in [1, 15] (logical -7..+7); code 0 decodes to -8 *
scale but is never produced. Scale = amax / 7 where amax = max |value| over
the block, rounded half away from zero when mapping values to codes.

The matvec kernel pins its accumulation order so that `qmatvec(w, x)` is
bit-identical to `dense_matvec(dequantize(w), x)`: per output row, each
32-element block is reduced with the same float32 sum, then block partials
are added left to right into a float32 accumulator.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidValue, ShapeError

BLOCK_SIZE = 32
BLOCK_BYTES = 18  # 2-byte f16 scale + 16 packed code bytes


@dataclass(frozen=True)
class Block4:
    """One quantized block: a shared scale and 32 offset-binary codes."""

    scale: float  # value representable in float16
    codes: np.ndarray  # uint8[32], each in [0, 15]

    def to_bytes(self) -> bytes:
        packed = self.codes[0::2] | (self.codes[1::2] << 4)
        return struct.pack("<e", self.scale) + packed.astype(np.uint8).tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Block4":
        if len(raw) != BLOCK_BYTES:
            raise ShapeError(f"block must be {BLOCK_BYTES} bytes, got {len(raw)}")
        (scale,) = struct.unpack("<e", raw[:2])
        packed = np.frombuffer(raw[2:], dtype=np.uint8)
        codes = np.empty(BLOCK_SIZE, dtype=np.uint8)
        codes[0::2] = packed & 0x0F
        codes[1::2] = packed >> 4
        return cls(scale=float(scale), codes=codes)


class QTensor:
    """2-D weight matrix stored as row-major 32-element blocks.

    `scales` is float16 [rows, cols//32]; `codes` is uint8 [rows, cols//32, 32]
    holding the unpacked offset-binary codes. Immutable after construction.
    """

    def __init__(self, rows: int, cols: int, scales: np.ndarray, codes: np.ndarray):
        if cols % BLOCK_SIZE != 0:
            raise ShapeError(f"cols must be a multiple of {BLOCK_SIZE}, got {cols}")
        nb = cols // BLOCK_SIZE
        if scales.shape != (rows, nb) or codes.shape != (rows, nb, BLOCK_SIZE):
            raise ShapeError("scales/codes shapes inconsistent with rows x cols")
        self.rows = rows
        self.cols = cols
        self.scales = np.ascontiguousarray(scales, dtype=np.float16)
        self.codes = np.ascontiguousarray(codes, dtype=np.uint8)
        self.scales.setflags(write=False)
        self.codes.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def num_blocks(self) -> int:
        return self.rows * self.cols // BLOCK_SIZE

    def block(self, index: int) -> Block4:
        """Row-major block accessor (index in [0, num_blocks))."""
        nb = self.cols // BLOCK_SIZE
        r, b = divmod(index, nb)
        return Block4(scale=float(self.scales[r, b]), codes=self.codes[r, b].copy())

    def nbytes(self) -> int:
        return self.num_blocks * BLOCK_BYTES

    def to_bytes(self) -> bytes:
        flat = self.codes.reshape(-1, BLOCK_SIZE)
        packed = (flat[:, 0::2] | (flat[:, 1::2] << 4)).astype(np.uint8)
        out = np.empty((self.num_blocks, BLOCK_BYTES), dtype=np.uint8)
        le_scales = self.scales.reshape(-1).astype("<f2")
        out[:, :2] = le_scales.view(np.uint8).reshape(-1, 2)
        out[:, 2:] = packed
        return out.tobytes()

    @classmethod
    def from_bytes(cls, rows: int, cols: int, raw: bytes) -> "QTensor":
        if cols % BLOCK_SIZE != 0:
            raise ShapeError(f"cols must be a multiple of {BLOCK_SIZE}, got {cols}")
        nb = cols // BLOCK_SIZE
        expected = rows * nb * BLOCK_BYTES
        if len(raw) != expected:
            raise ShapeError(f"expected {expected} bytes for {rows}x{cols}, got {len(raw)}")
        buf = np.frombuffer(raw, dtype=np.uint8).reshape(rows * nb, BLOCK_BYTES)
        scales = buf[:, :2].copy().view("<f2").astype(np.float16).reshape(rows, nb)
        packed = buf[:, 2:]
        codes = np.empty((rows * nb, BLOCK_SIZE), dtype=np.uint8)
        codes[:, 0::2] = packed & 0x0F
        codes[:, 1::2] = packed >> 4
        return cls(rows, cols, scales, codes.reshape(rows, nb, BLOCK_SIZE))


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # np.round is half-to-even; the codec pins half-away-from-zero
    a = np.abs(x)
    floored = np.floor(a)
    return np.sign(x) * (floored + np.floor(2.0 * (a - floored)))


def _quantize_rows(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quantize [n, 32] float32 rows; returns (f16 scales [n], codes [n, 32])."""
    amax = np.abs(values).max(axis=1)
    scale = (amax / np.float32(7.0)).astype(np.float32)
    safe = np.where(scale > 0, scale, np.float32(1.0))
    q = _round_half_away(values / safe[:, None])
    q = np.clip(q, -7, 7) + 8
    codes = np.where((scale > 0)[:, None], q, 8.0).astype(np.uint8)
    return scale.astype(np.float16), codes


def quantize_block(values) -> Block4:
    """Quantize exactly 32 finite reals into one block."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.shape != (BLOCK_SIZE,):
        raise ShapeError(f"expected {BLOCK_SIZE} values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidValue("block contains non-finite values")
    scales, codes = _quantize_rows(arr.reshape(1, BLOCK_SIZE))
    return Block4(scale=float(scales[0]), codes=codes[0])


def quantize_tensor(src: np.ndarray) -> QTensor:
    """Quantize a 2-D float tensor; each run of 32 row elements becomes a block."""
    arr = np.asarray(src, dtype=np.float32)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D tensor, got rank {arr.ndim}")
    rows, cols = arr.shape
    if cols % BLOCK_SIZE != 0:
        raise ShapeError(f"cols ({cols}) not a multiple of {BLOCK_SIZE}")
    if not np.all(np.isfinite(arr)):
        raise InvalidValue("tensor contains non-finite values")
    nb = cols // BLOCK_SIZE
    scales, codes = _quantize_rows(arr.reshape(rows * nb, BLOCK_SIZE))
    return QTensor(rows, cols, scales.reshape(rows, nb), codes.reshape(rows, nb, BLOCK_SIZE))


def dequantize(q: QTensor) -> np.ndarray:
    """Expand a QTensor to float32: out = (code - 8) * scale per element."""
    deq = _dequantize_blocks(q)
    return deq.reshape(q.rows, q.cols)


def _dequantize_blocks(q: QTensor) -> np.ndarray:
    """Float32 [rows, nblocks, 32] view of the decoded weights."""
    centered = q.codes.astype(np.float32) - np.float32(8.0)
    return centered * q.scales.astype(np.float32)[:, :, None]


def dequantize_row(q: QTensor, row: int) -> np.ndarray:
    """Decode a single row to float32, bit-identical to dequantize(q)[row]."""
    centered = q.codes[row].astype(np.float32) - np.float32(8.0)
    deq = centered * q.scales[row].astype(np.float32)[:, None]
    return deq.reshape(q.cols)


def _accumulate_blocks(partials: np.ndarray) -> np.ndarray:
    """Left-to-right float32 accumulation over the block axis of [rows, nb]."""
    acc = partials[:, 0].copy()
    for b in range(1, partials.shape[1]):
        acc += partials[:, b]
    return acc


def dense_matvec(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Reference float32 matvec with the pinned block accumulation order.

    Requires cols % 32 == 0 so the reduction partitions exactly like the
    quantized kernel.
    """
    w = np.ascontiguousarray(w, dtype=np.float32)
    x = np.ascontiguousarray(x, dtype=np.float32)
    if w.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got rank {w.ndim}")
    rows, cols = w.shape
    if x.shape != (cols,):
        raise ShapeError(f"vector length {x.shape} does not match cols {cols}")
    if cols % BLOCK_SIZE != 0:
        raise ShapeError(f"cols ({cols}) not a multiple of {BLOCK_SIZE}")
    nb = cols // BLOCK_SIZE
    w3 = w.reshape(rows, nb, BLOCK_SIZE)
    x3 = x.reshape(nb, BLOCK_SIZE)
    partials = (w3 * x3).sum(axis=2)
    return _accumulate_blocks(partials)


def qmatvec(w: QTensor, x: np.ndarray) -> np.ndarray:
    """Quantized matvec over the packed representation.

    Bit-identical to dense_matvec(dequantize(w), x): the decoded per-element
    values and the accumulation order match exactly.
    """
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.shape != (w.cols,):
        raise ShapeError(f"vector length {x.shape} does not match cols {w.cols}")
    deq3 = _dequantize_blocks(w)
    nb = w.cols // BLOCK_SIZE
    x3 = x.reshape(nb, BLOCK_SIZE)
    partials = (deq3 * x3).sum(axis=2)
    return _accumulate_blocks(partials)
