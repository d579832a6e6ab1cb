"""Deterministic fixture models for tests, demos, and the CLI.

Two builders:

- `build_random_model`: small random weights at a given config/seed, for
  size-accounting, kernel-parity, and cache-equivalence checks.

- `build_scripted_model`: a 2-layer model whose weights are programmed so
  that greedy decoding after any prompt ending in "\\n<bot>:" reproduces a
  fixed reply, token for token, then stops at <|endoftext|>. The reply is
  realized as an order-3 token chain.

Scripted construction, layer by layer:

* Embeddings carry a +-28 constant on dims 0..1 plus a zero-sum +-7
  Hadamard signature of the token on its own block-aligned band, so
  layernorm over an embedding row has exactly zero mean and
  token-independent variance: it reduces to a plain scaling and the
  construction survives it exactly. The magnitudes 28 and 7 quantize
  exactly under the 4-bit block codec (scales 4.0 and 1.0), so a q4 copy
  of the model still reproduces its script.
* Layer 0 attention: heads 0 and 1 place their query/key on a single
  rotary frequency whose period exceeds the context window, with the query
  phase pre-rotated so the score peaks at relative offset 1 (head 0) and 2
  (head 1). Value rows decode the attended token's signature into a
  one-hot over the script alphabet, and the output projection copies each
  head's one-hot into its own residual band.
* Layer 1 MLP: one GELU gate per script transition. A gate reads the
  current token's signature plus the two offset one-hots, minus a
  threshold taken from the constant dims, so it fires only when all three
  match (partial matches land far below zero). Its down-projection column
  writes a one-hot for the transition's next token into a fourth band,
  which the unembedding reads directly.

Builders verify their product by greedy-decoding through the real forward
pass and raise if the reply does not reproduce.
"""

from __future__ import annotations

import numpy as np

from . import tokenizer as tok
from .transformer import (
    DEFAULT_CONFIG,
    KVCache,
    ModelConfig,
    ModelWeights,
    ROPE_BASE,
    expected_shapes,
    forward,
    tensor_names,
)

SCRIPTED_CONFIG = ModelConfig(
    n_layers=2, n_heads=4, d_model=320, vocab_size=512, max_context=256
)

# residual-stream bands (block-aligned so q4 quantization cannot mix scales)
_SIG_BAND = slice(32, 96)  # 64-dim Hadamard signature of the current token
_PREV1_BAND = 96  # + alphabet slot: one-hot of the token at offset 1
_PREV2_BAND = 160  # + alphabet slot: one-hot of the token at offset 2
_NEXT_BAND = 224  # + alphabet slot: one-hot of the predicted next token

_CONST_MAG = 28.0  # 7 * 4: exact under the q4 codec; dwarfs nothing it shares a block with
_SIG_MAG = 7.0  # quantizes to scale 1.0 exactly
_GATE_GAIN = 32.0  # weight per matched feature inside a transition gate
_GATE_THRESHOLD = 2.5 * _GATE_GAIN  # gates need all 3 features to clear it
_ATTN_GAP = 8.0  # softmax logit gap between the target offset and its neighbors
_ALPHABET_CAP = 62
_ROTARY_PAIR = 17  # frequency index in an 80-dim head whose period exceeds 256


def _hadamard(n: int) -> np.ndarray:
    if n & (n - 1):
        raise ValueError("Sylvester construction needs a power of two")
    h = np.ones((1, 1), dtype=np.float32)
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


def build_random_model(
    config: ModelConfig = DEFAULT_CONFIG, seed: int = 0
) -> ModelWeights:
    """Random dense float32 weights at standard initialization scales."""
    rng = np.random.default_rng(seed)
    shapes = expected_shapes(config)
    weights = ModelWeights()
    for name in tensor_names(config):
        shape = shapes[name]
        if name.endswith(".gain"):
            weights[name] = (1.0 + 0.02 * rng.standard_normal(shape)).astype(np.float32)
        elif name.endswith(".bias"):
            weights[name] = (0.01 * rng.standard_normal(shape)).astype(np.float32)
        else:
            std = 1.0 / np.sqrt(shape[-1])
            weights[name] = (std * rng.standard_normal(shape)).astype(np.float32)
    return weights


def _offset_head_qk(theta: float, offset: int, magnitude: float) -> tuple[np.ndarray, np.ndarray]:
    """2-D (q, k) pair whose post-rotary score peaks at the given offset back."""
    k = np.array([magnitude, 0.0], dtype=np.float32)
    q = magnitude * np.array(
        [np.cos(offset * theta), -np.sin(offset * theta)], dtype=np.float32
    )
    return q, k


def build_scripted_model(
    reply: str,
    vocab: tok.Vocab | None = None,
    config: ModelConfig = SCRIPTED_CONFIG,
    verify: bool = True,
) -> tuple[ModelWeights, ModelConfig]:
    """Program weights so greedy decoding after "\\n<bot>:" emits `reply`.

    Raises ValueError if the reply is not realizable as an order-3 chain
    (some four-token window repeats with a different continuation), uses
    too many distinct tokens, or fails the decoded verification pass.
    """
    if vocab is None:
        vocab = tok.build_vocab()
    d, hd = config.d_model, config.head_dim
    if d != 320 or config.n_heads != 4 or config.n_layers != 2:
        raise ValueError("scripted builder is pinned to the 2-layer, 4x80-head layout")

    cue = tok.encode("\n<bot>:", vocab)
    script = tok.encode(reply, vocab) + [vocab.eos_id]
    seq = cue + script
    if len(script) > config.max_context // 2:
        raise ValueError("reply too long for the context window")

    transitions: dict[tuple[int, int, int], int] = {}
    for i in range(2, len(seq) - 1):
        key = (seq[i - 2], seq[i - 1], seq[i])
        nxt = seq[i + 1]
        if transitions.get(key, nxt) != nxt:
            raise ValueError(f"reply is not order-3 realizable: window {key} repeats")
        transitions[key] = nxt
    if len(transitions) > config.d_ff:
        raise ValueError("more transitions than gate rows")

    alphabet = sorted(set(seq))
    if len(alphabet) > _ALPHABET_CAP:
        raise ValueError(f"reply uses {len(alphabet)} distinct tokens; limit is {_ALPHABET_CAP}")
    slot = {t: i for i, t in enumerate(alphabet)}

    hada = _hadamard(64)
    sig = np.zeros((config.vocab_size, 64), dtype=np.float32)
    sig[:] = _SIG_MAG * hada[63]  # shared off-script signature keeps variance flat
    for t, i in slot.items():
        sig[t] = _SIG_MAG * hada[i + 1]
    sig_norm = 64.0 * _SIG_MAG**2

    emb = np.zeros((config.vocab_size, d), dtype=np.float32)
    emb[:, 0] = _CONST_MAG
    emb[:, 1] = -_CONST_MAG
    emb[:, _SIG_BAND] = sig

    # layernorm over any embedding row is exactly x / s0
    s0 = float(np.sqrt((2 * _CONST_MAG**2 + sig_norm) / d + config.layernorm_eps))

    rot = config.rot_dims
    theta = float(ROPE_BASE ** (-2.0 * _ROTARY_PAIR / rot))
    if 2 * np.pi / theta <= config.max_context:
        raise ValueError("rotary pair period does not cover the context window")
    magnitude = float(np.sqrt(_ATTN_GAP * np.sqrt(hd) / (1.0 - np.cos(theta))))

    qkv0 = np.zeros((3 * d, d), dtype=np.float32)
    for head, offset in ((0, 1), (1, 2)):
        q2, k2 = _offset_head_qk(theta, offset, magnitude)
        base = head * hd
        for comp, dim in ((0, base + _ROTARY_PAIR), (1, base + _ROTARY_PAIR + rot // 2)):
            # read the constant dims; ln1 divides by s0, dims hold (B, -B)
            qkv0[dim, 0] = q2[comp] * s0 / (2 * _CONST_MAG)
            qkv0[dim, 1] = -q2[comp] * s0 / (2 * _CONST_MAG)
            qkv0[d + dim, 0] = k2[comp] * s0 / (2 * _CONST_MAG)
            qkv0[d + dim, 1] = -k2[comp] * s0 / (2 * _CONST_MAG)
        for t, i in slot.items():
            # one-hot readout of the attended token: <sig_i, sig_t> = sig_norm * delta
            qkv0[2 * d + base + i, _SIG_BAND] = sig[t] * (s0 / sig_norm)

    attn_out0 = np.zeros((d, d), dtype=np.float32)
    for i in range(64):
        attn_out0[_PREV1_BAND + i, 0 * hd + i] = 1.0
        attn_out0[_PREV2_BAND + i, 1 * hd + i] = 1.0

    # layer 1: transition gates in the MLP; its attention stays zero
    thr = _GATE_THRESHOLD / (2 * _CONST_MAG)
    mlp_up1 = np.zeros((config.d_ff, d), dtype=np.float32)
    mlp_down1 = np.zeros((d, config.d_ff), dtype=np.float32)
    for g, ((p2, p1, cur), nxt) in enumerate(sorted(transitions.items())):
        mlp_up1[g, 0] = -thr
        mlp_up1[g, 1] = thr
        mlp_up1[g, _SIG_BAND] = _GATE_GAIN * sig[cur] / sig_norm
        mlp_up1[g, _PREV1_BAND + slot[p1]] = _GATE_GAIN
        mlp_up1[g, _PREV2_BAND + slot[p2]] = _GATE_GAIN
        mlp_down1[_NEXT_BAND + slot[nxt], g] = 1.0

    unemb = np.zeros((config.vocab_size, d), dtype=np.float32)
    for t, i in slot.items():
        unemb[t, _NEXT_BAND + i] = 1.0

    ones = np.ones(d, dtype=np.float32)
    zeros = np.zeros(d, dtype=np.float32)
    weights = ModelWeights()
    weights["embedding"] = emb
    weights["layers.0.ln1.gain"] = ones.copy()
    weights["layers.0.ln1.bias"] = zeros.copy()
    weights["layers.0.attn_qkv"] = qkv0
    weights["layers.0.attn_out"] = attn_out0
    weights["layers.0.ln2.gain"] = ones.copy()
    weights["layers.0.ln2.bias"] = zeros.copy()
    weights["layers.0.mlp_up"] = np.zeros((config.d_ff, d), dtype=np.float32)
    weights["layers.0.mlp_down"] = np.zeros((d, config.d_ff), dtype=np.float32)
    weights["layers.1.ln1.gain"] = ones.copy()
    weights["layers.1.ln1.bias"] = zeros.copy()
    weights["layers.1.attn_qkv"] = np.zeros((3 * d, d), dtype=np.float32)
    weights["layers.1.attn_out"] = np.zeros((d, d), dtype=np.float32)
    weights["layers.1.ln2.gain"] = ones.copy()
    weights["layers.1.ln2.bias"] = zeros.copy()
    weights["layers.1.mlp_up"] = mlp_up1
    weights["layers.1.mlp_down"] = mlp_down1
    weights["final_ln.gain"] = ones.copy()
    weights["final_ln.bias"] = zeros.copy()
    weights["unembedding"] = unemb

    if verify:
        _verify_script(weights, config, vocab, script)
    return weights, config


def _verify_script(weights, config, vocab, script) -> None:
    for preamble in ("<human>: hi", "<human>: what is up today?"):
        prompt = tok.encode(preamble + "\n<bot>:", vocab)
        cache = KVCache(config)
        last = forward(weights, config, prompt, cache)[-1]
        for step, expected in enumerate(script):
            tid = int(np.argmax(last))
            if tid != expected:
                raise ValueError(
                    f"scripted model diverged at step {step}: "
                    f"expected {expected}, decoded {tid}"
                )
            if tid == vocab.eos_id:
                break
            last = forward(weights, config, [tid], cache)[-1]
