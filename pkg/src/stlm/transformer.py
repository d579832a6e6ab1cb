"""GPT-NeoX-style decoder forward pass with KV cache and streaming generation.

Block form is the parallel-residual variant:

    x = x + attn(ln1(x)) + mlp(ln2(x))

with rotary position embeddings applied to the leading `rotary_fraction` of
each head's dimensions (half-split pairing), causal masking, and float32
activations throughout. Linear projections carry no bias; the two per-layer
layernorms and the final layernorm have gain and bias.

Weights are looked up by name so quantized and dense tensors interchange
freely; projections route through the pinned-accumulation matvec kernels, so
a quantized model and its dequantized copy produce bit-identical logits.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import tokenizer as tok
from .errors import ContextFull, InvalidValue, MissingTensor, ShapeError
from .qtensor import QTensor, dense_matvec, dequantize_row, qmatvec

ROPE_BASE = 10000.0
MLP_RATIO = 4  # hidden width of the feed-forward block, in units of d_model


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    n_heads: int
    d_model: int
    vocab_size: int
    max_context: int
    rotary_fraction: float = 1.0
    layernorm_eps: float = 1e-5

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ShapeError("d_model must be divisible by n_heads")
        if not 0.0 < self.rotary_fraction <= 1.0:
            raise ShapeError("rotary_fraction must be in (0, 1]")
        rot = self.head_dim * self.rotary_fraction
        if rot <= 0 or abs(rot - round(rot)) > 1e-9 or round(rot) % 2 != 0:
            raise ShapeError("head_dim * rotary_fraction must be a positive even integer")
        if self.max_context < 1:
            raise ShapeError("max_context must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def rot_dims(self) -> int:
        return round(self.head_dim * self.rotary_fraction)

    @property
    def d_ff(self) -> int:
        return MLP_RATIO * self.d_model

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_model": self.d_model,
            "vocab_size": self.vocab_size,
            "max_context": self.max_context,
            "rotary_fraction": self.rotary_fraction,
            "layernorm_eps": self.layernorm_eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


DEFAULT_CONFIG = ModelConfig(
    n_layers=4, n_heads=4, d_model=128, vocab_size=512, max_context=256
)


def tensor_names(config: ModelConfig) -> list[str]:
    names = ["embedding"]
    for i in range(config.n_layers):
        names += [
            f"layers.{i}.ln1.gain",
            f"layers.{i}.ln1.bias",
            f"layers.{i}.attn_qkv",
            f"layers.{i}.attn_out",
            f"layers.{i}.ln2.gain",
            f"layers.{i}.ln2.bias",
            f"layers.{i}.mlp_up",
            f"layers.{i}.mlp_down",
        ]
    names += ["final_ln.gain", "final_ln.bias", "unembedding"]
    return names


def expected_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, v, ff = config.d_model, config.vocab_size, config.d_ff
    shapes: dict[str, tuple[int, ...]] = {"embedding": (v, d)}
    for i in range(config.n_layers):
        shapes[f"layers.{i}.ln1.gain"] = (d,)
        shapes[f"layers.{i}.ln1.bias"] = (d,)
        shapes[f"layers.{i}.attn_qkv"] = (3 * d, d)
        shapes[f"layers.{i}.attn_out"] = (d, d)
        shapes[f"layers.{i}.ln2.gain"] = (d,)
        shapes[f"layers.{i}.ln2.bias"] = (d,)
        shapes[f"layers.{i}.mlp_up"] = (ff, d)
        shapes[f"layers.{i}.mlp_down"] = (d, ff)
    shapes["final_ln.gain"] = (d,)
    shapes["final_ln.bias"] = (d,)
    shapes["unembedding"] = (v, d)
    return shapes


class ModelWeights:
    """Named tensor set; values are float ndarrays or QTensors."""

    def __init__(self, tensors: dict[str, np.ndarray | QTensor] | None = None):
        self.tensors: dict[str, np.ndarray | QTensor] = dict(tensors or {})

    def __getitem__(self, name: str) -> np.ndarray | QTensor:
        try:
            return self.tensors[name]
        except KeyError:
            raise MissingTensor(name) from None

    def __setitem__(self, name: str, value) -> None:
        self.tensors[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return list(self.tensors)

    def validate(self, config: ModelConfig) -> None:
        shapes = expected_shapes(config)
        for name, want in shapes.items():
            t = self[name]
            got = t.shape
            if tuple(got) != want:
                raise ShapeError(f"{name}: expected shape {want}, got {tuple(got)}")


class KVCache:
    """Per-layer appended keys/values; one slot per past position."""

    def __init__(self, config: ModelConfig):
        shape = (config.max_context, config.n_heads, config.head_dim)
        self.k = [np.zeros(shape, dtype=np.float32) for _ in range(config.n_layers)]
        self.v = [np.zeros(shape, dtype=np.float32) for _ in range(config.n_layers)]
        self.length = 0
        self.max_context = config.max_context


def layernorm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float) -> np.ndarray:
    x = x.astype(np.float32, copy=False)
    mu = x.mean(dtype=np.float32)
    var = np.mean((x - mu) ** 2, dtype=np.float32)
    inv = np.float32(1.0) / np.sqrt(var + np.float32(eps))
    return (x - mu) * inv * gain.astype(np.float32) + bias.astype(np.float32)


def softmax(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float32, copy=False)
    e = np.exp(x - x.max())
    return e / e.sum(dtype=np.float32)


def gelu(x: np.ndarray) -> np.ndarray:
    # tanh approximation, standard in GPT-style blocks
    c = np.float32(np.sqrt(2.0 / np.pi))
    return np.float32(0.5) * x * (1.0 + np.tanh(c * (x + np.float32(0.044715) * x**3)))


def rope_angles(rot_dims: int, position: int) -> tuple[np.ndarray, np.ndarray]:
    half = rot_dims // 2
    inv_freq = ROPE_BASE ** (-np.arange(0, half, dtype=np.float32) * 2.0 / rot_dims)
    angles = np.float32(position) * inv_freq
    return np.cos(angles, dtype=np.float32), np.sin(angles, dtype=np.float32)


def rotary_apply(vec: np.ndarray, position: int, rot_dims: int) -> np.ndarray:
    """Rotate the leading rot_dims of a head vector, half-split pairing.

    Pair i couples dims (i, i + rot_dims/2) and turns by position * theta_i
    with theta_i = base^(-2i / rot_dims).
    """
    half = rot_dims // 2
    cos, sin = rope_angles(rot_dims, position)
    out = vec.astype(np.float32).copy()
    x1 = vec[:half]
    x2 = vec[half:rot_dims]
    out[:half] = x1 * cos - x2 * sin
    out[half:rot_dims] = x2 * cos + x1 * sin
    return out


def _linear(w: np.ndarray | QTensor, x: np.ndarray) -> np.ndarray:
    if isinstance(w, QTensor):
        return qmatvec(w, x)
    return dense_matvec(np.asarray(w), x)


def _embed_row(emb: np.ndarray | QTensor, token_id: int) -> np.ndarray:
    if isinstance(emb, QTensor):
        return dequantize_row(emb, token_id)
    return np.asarray(emb[token_id], dtype=np.float32).copy()


def forward(
    weights: ModelWeights,
    config: ModelConfig,
    tokens: Iterable[int],
    cache: KVCache,
) -> np.ndarray:
    """Run new tokens through the decoder; returns logits [len(tokens), vocab].

    Positions are processed one at a time against the cache, so incremental
    and one-shot calls traverse identical arithmetic.
    """
    ids = list(tokens)
    if cache.length + len(ids) > config.max_context:
        raise ContextFull(
            f"{cache.length} cached + {len(ids)} new exceeds max_context {config.max_context}"
        )
    n_heads, hd, rot = config.n_heads, config.head_dim, config.rot_dims
    scale = np.float32(1.0 / np.sqrt(hd))
    eps = config.layernorm_eps
    emb = weights["embedding"]
    logits = np.empty((len(ids), config.vocab_size), dtype=np.float32)

    for out_i, tid in enumerate(ids):
        if not 0 <= tid < config.vocab_size:
            raise InvalidValue(f"token id {tid} outside vocab {config.vocab_size}")
        pos = cache.length
        x = _embed_row(emb, tid)
        for layer in range(config.n_layers):
            p = f"layers.{layer}"
            h1 = layernorm(x, weights[f"{p}.ln1.gain"], weights[f"{p}.ln1.bias"], eps)
            qkv = _linear(weights[f"{p}.attn_qkv"], h1)
            d = config.d_model
            q = qkv[:d].reshape(n_heads, hd)
            k = qkv[d : 2 * d].reshape(n_heads, hd)
            v = qkv[2 * d :].reshape(n_heads, hd)
            for h in range(n_heads):
                q[h] = rotary_apply(q[h], pos, rot)
                k[h] = rotary_apply(k[h], pos, rot)
            cache.k[layer][pos] = k
            cache.v[layer][pos] = v
            past_k = cache.k[layer][: pos + 1]  # [pos+1, heads, hd]
            past_v = cache.v[layer][: pos + 1]
            attn = np.empty(d, dtype=np.float32)
            for h in range(n_heads):
                scores = past_k[:, h] @ q[h] * scale
                w = softmax(scores)
                attn[h * hd : (h + 1) * hd] = w @ past_v[:, h]
            attn_out = _linear(weights[f"{p}.attn_out"], attn)
            h2 = layernorm(x, weights[f"{p}.ln2.gain"], weights[f"{p}.ln2.bias"], eps)
            mlp = _linear(weights[f"{p}.mlp_down"], gelu(_linear(weights[f"{p}.mlp_up"], h2)))
            x = x + attn_out + mlp
        final = layernorm(x, weights["final_ln.gain"], weights["final_ln.bias"], eps)
        logits[out_i] = _linear(weights["unembedding"], final)
        cache.length += 1
    return logits


@dataclass
class SamplerParams:
    temperature: float = 0.0
    top_k: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.temperature < 0:
            raise InvalidValue("temperature must be >= 0")
        if self.top_k < 0:
            raise InvalidValue("top_k must be >= 0")


def sample(
    logits: np.ndarray,
    params: SamplerParams,
    rng: np.random.Generator | None = None,
) -> int:
    """Pick a token id; temperature 0 is argmax with ties to the lowest id."""
    logits = np.asarray(logits, dtype=np.float32)
    if not np.all(np.isfinite(logits)):
        raise InvalidValue("logits must be finite")
    if params.temperature == 0 or params.top_k == 1:
        return int(np.argmax(logits))
    if rng is None:
        rng = np.random.default_rng(params.seed)
    candidates = np.arange(logits.shape[0])
    if params.top_k > 0 and params.top_k < logits.shape[0]:
        order = np.argsort(-logits, kind="stable")[: params.top_k]
        candidates = np.sort(order)
    probs = softmax(logits[candidates] / np.float32(params.temperature))
    r = rng.random()
    cum = np.cumsum(probs, dtype=np.float64)
    idx = int(np.searchsorted(cum, r * cum[-1], side="right"))
    idx = min(idx, len(candidates) - 1)
    return int(candidates[idx])


@dataclass(frozen=True)
class StopSpec:
    """Generation halts on eos, any stop string in the decoded tail, or a
    full context window."""

    sequences: tuple[str, ...] = ("<human>",)


class StopReason(enum.Enum):
    END_OF_TEXT = "end_of_text"
    STOP_SEQUENCE = "stop_sequence"
    MAX_CONTEXT = "max_context"
    CANCELLED = "cancelled"


@dataclass
class GenerationResult:
    stop_reason: StopReason
    token_count: int
    text: str
    stop_sequence: str | None = None


def _longest_stop_prefix(pending: str, sequences: tuple[str, ...]) -> int:
    """Length of the longest pending-suffix that could still grow into a stop."""
    best = 0
    for seq in sequences:
        upper = min(len(seq) - 1, len(pending))
        for n in range(upper, 0, -1):
            if pending.endswith(seq[:n]):
                best = max(best, n)
                break
    return best


def generate(
    weights: ModelWeights,
    config: ModelConfig,
    vocab: tok.Vocab,
    prompt: Iterable[int],
    params: SamplerParams,
    stop: StopSpec = StopSpec(),
    on_token: Callable[[str], None] | None = None,
    should_stop: Callable[[], bool] | None = None,
) -> GenerationResult:
    """Stream tokens until a stop condition; stop-sequence text is withheld.

    The callback receives decoded text deltas in order. Text that might be
    the start of a stop sequence is held back until disambiguated, so a
    matched stop string is never delivered.
    """
    prompt = list(prompt)
    if not prompt:
        raise InvalidValue("prompt must be nonempty")
    if len(prompt) >= config.max_context:
        raise ContextFull(f"prompt of {len(prompt)} tokens fills max_context {config.max_context}")
    cache = KVCache(config)
    rng = np.random.default_rng(params.seed)
    eos = vocab.eos_id
    emitted: list[str] = []

    def emit(s: str) -> None:
        if s:
            emitted.append(s)
            if on_token is not None:
                on_token(s)

    last = forward(weights, config, prompt, cache)[-1]
    pending = ""
    n_generated = 0
    reason = StopReason.MAX_CONTEXT
    matched: str | None = None
    while True:
        if should_stop is not None and should_stop():
            reason = StopReason.CANCELLED
            break
        tid = sample(last, params, rng)
        if tid == eos:
            reason = StopReason.END_OF_TEXT
            break
        pending += tok.decode([tid], vocab)
        n_generated += 1
        hit_at, hit_seq = -1, None
        for seq in stop.sequences:
            at = pending.find(seq)
            if at != -1 and (hit_at == -1 or at < hit_at):
                hit_at, hit_seq = at, seq
        if hit_seq is not None:
            emit(pending[:hit_at])
            pending = ""
            reason = StopReason.STOP_SEQUENCE
            matched = hit_seq
            break
        hold = _longest_stop_prefix(pending, stop.sequences)
        release = len(pending) - hold
        emit(pending[:release])
        pending = pending[release:]
        if cache.length >= config.max_context:
            reason = StopReason.MAX_CONTEXT
            break
        last = forward(weights, config, [tid], cache)[-1]
    emit(pending)
    return GenerationResult(
        stop_reason=reason,
        token_count=n_generated,
        text="".join(emitted),
        stop_sequence=matched,
    )
