"""LoRA adapter merging: fold W + (alpha / r) * B @ A into base weights.

Targets are tensor names; the default fine-tuning surface is the QKV
projections. Base tensors quantized at merge time are decoded to dense
float32 first; everything the adapter does not name is carried over
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidValue, MissingTensor, ShapeError
from .qtensor import QTensor, dequantize
from .transformer import ModelConfig, ModelWeights


def default_targets(config: ModelConfig) -> list[str]:
    return [f"layers.{i}.attn_qkv" for i in range(config.n_layers)]


@dataclass
class LoraAdapter:
    """Per-target (A, B) rank-decomposition pairs with a shared rank/alpha.

    For a target of shape [rows, cols]: A is [r, cols], B is [rows, r].
    """

    rank: int
    alpha: float
    targets: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        if self.rank < 1:
            raise InvalidValue("rank must be >= 1")
        for name, (a, b) in self.targets.items():
            if a.ndim != 2 or b.ndim != 2:
                raise ShapeError(f"{name}: A and B must be 2-D")
            if a.shape[0] != self.rank or b.shape[1] != self.rank:
                raise ShapeError(f"{name}: A/B inner dims must equal rank {self.rank}")


def merge_lora(base: ModelWeights, adapter: LoraAdapter) -> ModelWeights:
    """Return a new weight set with W' = W + (alpha / r) * B @ A per target.

    Non-target tensors are the same objects as in `base`. Target tensors
    come out dense float32 regardless of their stored precision.
    """
    scaling = np.float32(adapter.alpha / adapter.rank)
    merged = ModelWeights(dict(base.tensors))
    for name, (a, b) in adapter.targets.items():
        if name not in base:
            raise MissingTensor(name)
        w = base[name]
        dense = dequantize(w) if isinstance(w, QTensor) else np.asarray(w, dtype=np.float32)
        if dense.shape != (b.shape[0], a.shape[1]):
            raise ShapeError(
                f"{name}: base {dense.shape} does not compose with "
                f"B {b.shape} @ A {a.shape}"
            )
        update = (b.astype(np.float32) @ a.astype(np.float32)) * scaling
        merged[name] = dense + update
    return merged
