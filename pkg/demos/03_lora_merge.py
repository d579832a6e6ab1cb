"""LoRA adapter merge: W' = W + (alpha / r) * B @ A on the QKV projections.

Run: python3 demos/03_lora_merge.py
"""

import numpy as np

from stlm import LoraAdapter, dense_matvec, merge_lora
from stlm.fixtures import build_random_model
from stlm.lora import default_targets
from stlm.transformer import DEFAULT_CONFIG

rng = np.random.default_rng(0)
base = build_random_model(DEFAULT_CONFIG, seed=0)

rank, alpha = 4, 8.0
targets = {}
for name in default_targets(DEFAULT_CONFIG):
    rows, cols = 3 * DEFAULT_CONFIG.d_model, DEFAULT_CONFIG.d_model
    targets[name] = (
        (0.05 * rng.standard_normal((rank, cols))).astype(np.float32),
        (0.05 * rng.standard_normal((rows, rank))).astype(np.float32),
    )
adapter = LoraAdapter(rank=rank, alpha=alpha, targets=targets)
merged = merge_lora(base, adapter)

name = "layers.0.attn_qkv"
a, b = adapter.targets[name]
x = rng.standard_normal(DEFAULT_CONFIG.d_model).astype(np.float32)

merged_path = dense_matvec(np.asarray(merged[name]), x)
dual_path = dense_matvec(np.asarray(base[name]), x) + (alpha / rank) * (b @ (a @ x))
print("dual-path max diff:", float(np.abs(merged_path - dual_path).max()))

untouched = [n for n in base.names() if n not in adapter.targets]
same = all(np.array_equal(np.asarray(merged[n]), np.asarray(base[n])) for n in untouched)
print(f"{len(untouched)} non-target tensors bit-identical:", same)
