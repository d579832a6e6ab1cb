"""Block-wise 4-bit quantization: codes, error bounds, and the size law.

Run: python3 demos/01_quantization.py
"""

import numpy as np

from stlm import dense_matvec, dequantize, qmatvec, quantize_block, quantize_tensor

rng = np.random.default_rng(0)

# one block: 32 weights share a single f16 scale, each weight becomes 4 bits
values = rng.uniform(-1, 1, 32).astype(np.float32)
block = quantize_block(values)
print("scale:", block.scale)
print("codes:", block.codes.tolist())

decoded = (block.codes.astype(np.float32) - 8) * block.scale
err = np.abs(values - decoded)
amax = np.abs(values).max()
print(f"max error {err.max():.5f} vs amax/14 bound {amax / 14:.5f} (+ f16 slack)")

# a whole matrix: 18 bytes per 32 weights = 4.5 bits/weight
w = rng.standard_normal((64, 256)).astype(np.float32)
q = quantize_tensor(w)
raw = q.to_bytes()
f16_bytes = w.size * 2
print(f"\nquantized {w.shape} -> {len(raw)} bytes "
      f"(vs {f16_bytes} at 16-bit, ratio {len(raw) / f16_bytes})")

# the quantized kernel agrees with dequantize-then-matvec bit for bit
x = rng.standard_normal(256).astype(np.float32)
fast = qmatvec(q, x)
reference = dense_matvec(dequantize(q), x)
print("kernel parity exact:", np.array_equal(fast, reference))
