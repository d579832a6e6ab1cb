import numpy as np
import pytest

from stlm.errors import MissingTensor, ShapeError
from stlm.fixtures import build_random_model
from stlm.lora import LoraAdapter, default_targets, merge_lora
from stlm.qtensor import dense_matvec, quantize_tensor
from stlm.transformer import KVCache, ModelConfig, forward

TINY = ModelConfig(n_layers=2, n_heads=2, d_model=32, vocab_size=320, max_context=16)


def random_adapter(config, rank=2, alpha=4.0, seed=0, targets=None):
    rng = np.random.default_rng(seed)
    names = targets or default_targets(config)
    pairs = {}
    for name in names:
        rows, cols = 3 * config.d_model, config.d_model
        a = (0.1 * rng.standard_normal((rank, cols))).astype(np.float32)
        b = (0.1 * rng.standard_normal((rows, rank))).astype(np.float32)
        pairs[name] = (a, b)
    return LoraAdapter(rank=rank, alpha=alpha, targets=pairs)


def test_zero_b_is_identity():
    base = build_random_model(TINY, seed=1)
    adapter = random_adapter(TINY, seed=2)
    zeroed = {
        name: (a, np.zeros_like(b)) for name, (a, b) in adapter.targets.items()
    }
    merged = merge_lora(base, LoraAdapter(rank=adapter.rank, alpha=adapter.alpha, targets=zeroed))
    for name in base.names():
        assert np.array_equal(np.asarray(merged[name]), np.asarray(base[name]))


def test_rank_one_hand_example():
    base = build_random_model(ModelConfig(1, 2, 32, 320, 16), seed=0)
    base["layers.0.attn_qkv"] = np.zeros((96, 32), dtype=np.float32)
    a = np.zeros((1, 32), dtype=np.float32)
    a[0, 0] = 1.0
    b = np.zeros((96, 1), dtype=np.float32)
    b[0, 0] = 1.0
    adapter = LoraAdapter(rank=1, alpha=1.0, targets={"layers.0.attn_qkv": (a, b)})
    merged = merge_lora(base, adapter)
    w = np.asarray(merged["layers.0.attn_qkv"])
    assert w[0, 0] == 1.0
    assert np.count_nonzero(w) == 1


def test_non_targets_bit_identical():
    base = build_random_model(TINY, seed=5)
    adapter = random_adapter(TINY, seed=6, targets=["layers.0.attn_qkv"])
    merged = merge_lora(base, adapter)
    for name in base.names():
        if name == "layers.0.attn_qkv":
            continue
        assert merged[name] is base[name]


def test_dual_path_forward_oracle():
    """Merged forward equals base plus the explicit adapter path, per matvec."""
    config = TINY
    base = build_random_model(config, seed=7)
    adapter = random_adapter(config, rank=3, alpha=2.0, seed=8)
    merged = merge_lora(base, adapter)
    rng = np.random.default_rng(9)
    scaling = adapter.alpha / adapter.rank
    for name, (a, b) in adapter.targets.items():
        x = rng.standard_normal(config.d_model).astype(np.float32)
        via_merge = dense_matvec(np.asarray(merged[name]), x)
        dual = dense_matvec(np.asarray(base[name]), x) + scaling * (b @ (a @ x))
        assert np.max(np.abs(via_merge - dual)) <= 1e-4

    tokens = [3, 1, 4, 1, 5]
    merged_logits = forward(merged, config, tokens, KVCache(config))
    base_logits = forward(base, config, tokens, KVCache(config))
    assert not np.array_equal(merged_logits, base_logits)


def test_merge_linearity_in_alpha():
    # integer-valued tensors make every add/scale exact in float32, so the
    # 2x relationship between deltas must hold bit for bit
    rng = np.random.default_rng(11)
    base = build_random_model(TINY, seed=11)
    name = "layers.0.attn_qkv"
    base[name] = rng.integers(-8, 8, (96, 32)).astype(np.float32)
    a = rng.integers(-4, 4, (2, 32)).astype(np.float32)
    b = rng.integers(-4, 4, (96, 2)).astype(np.float32)
    adapter1 = LoraAdapter(rank=2, alpha=1.0, targets={name: (a, b)})
    adapter2 = LoraAdapter(rank=2, alpha=2.0, targets={name: (a, b)})
    w0 = np.asarray(base[name])
    d1 = np.asarray(merge_lora(base, adapter1)[name]) - w0
    d2 = np.asarray(merge_lora(base, adapter2)[name]) - w0
    assert np.array_equal(d2, 2.0 * d1)
    assert np.any(d1 != 0)


def test_quantized_base_target_dequantized_first():
    base = build_random_model(TINY, seed=13)
    name = "layers.1.attn_qkv"
    base[name] = quantize_tensor(np.asarray(base[name]))
    adapter = random_adapter(TINY, seed=14, targets=[name])
    merged = merge_lora(base, adapter)
    assert isinstance(merged[name], np.ndarray)
    assert merged[name].dtype == np.float32


def test_unknown_target_and_shape_mismatch():
    base = build_random_model(TINY, seed=15)
    good = random_adapter(TINY, targets=["layers.0.attn_qkv"])
    missing = LoraAdapter(rank=2, alpha=1.0, targets={"layers.9.attn_qkv": good.targets["layers.0.attn_qkv"]})
    with pytest.raises(MissingTensor):
        merge_lora(base, missing)
    a, b = good.targets["layers.0.attn_qkv"]
    bad = LoraAdapter(rank=2, alpha=1.0, targets={"embedding": (a, b)})
    with pytest.raises(ShapeError):
        merge_lora(base, bad)
