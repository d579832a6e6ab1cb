"""Streaming generation through the GPT-NeoX-style decoder.

Builds a weight-programmed fixture model that always answers with a fixed
action-tagged reply, then streams tokens from it, and shows that one-shot
and incremental decoding agree through the KV cache.

Run: python3 demos/02_generation.py
"""

import numpy as np

from stlm import KVCache, SamplerParams, StopSpec, forward, generate
from stlm import tokenizer as tok
from stlm.fixtures import build_random_model, build_scripted_model
from stlm.transformer import DEFAULT_CONFIG

vocab = tok.build_vocab()
reply = "<call>John<call> and a plain sentence."
weights, config = build_scripted_model(reply, vocab)

prompt = tok.encode("<human>: call my friend\n<bot>:", vocab)
print("streaming:", end=" ", flush=True)
result = generate(
    weights, config, vocab, prompt,
    SamplerParams(temperature=0),
    StopSpec(),
    on_token=lambda piece: print(repr(piece), end=" ", flush=True),
)
print(f"\nstop: {result.stop_reason.value} after {result.token_count} tokens")

# KV cache: feeding tokens one at a time matches a single full pass
rand = build_random_model(DEFAULT_CONFIG, seed=1)
tokens = [int(t) for t in np.random.default_rng(0).integers(0, 255, 6)]
one_shot = forward(rand, DEFAULT_CONFIG, tokens, KVCache(DEFAULT_CONFIG))[-1]
cache = KVCache(DEFAULT_CONFIG)
for t in tokens:
    incremental = forward(rand, DEFAULT_CONFIG, [t], cache)[-1]
print("one-shot vs incremental max diff:", float(np.abs(one_shot - incremental).max()))
