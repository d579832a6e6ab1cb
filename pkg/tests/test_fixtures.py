import numpy as np
import pytest

from stlm import tokenizer as tok
from stlm.fixtures import build_random_model, build_scripted_model
from stlm.modelfile import write_model
from stlm.transformer import (
    ModelConfig,
    SamplerParams,
    StopReason,
    StopSpec,
    generate,
)

from conftest import ACTION_REPLY


def test_random_model_deterministic(tmp_path):
    config = ModelConfig(2, 2, 64, 320, 32)
    a, b = build_random_model(config, seed=5), build_random_model(config, seed=5)
    p1, p2 = tmp_path / "a.stlm", tmp_path / "b.stlm"
    write_model(a, config, p1)
    write_model(b, config, p2)
    assert p1.read_bytes() == p2.read_bytes()
    c = build_random_model(config, seed=6)
    write_model(c, config, p2)
    assert p1.read_bytes() != p2.read_bytes()


def test_random_model_validates(tmp_path):
    config = ModelConfig(2, 2, 64, 320, 32)
    build_random_model(config, seed=1).validate(config)


def test_scripted_reply_reproduces_for_any_prompt(action_model, vocab):
    weights, config = action_model
    for prompt_text in (
        "<human>: call john please\n<bot>:",
        "<human>: x\n<bot>: y\n<human>: again\n<bot>:",
    ):
        res = generate(
            weights, config, vocab,
            tok.encode(prompt_text, vocab),
            SamplerParams(), StopSpec(),
        )
        assert res.text == ACTION_REPLY
        assert res.stop_reason is StopReason.END_OF_TEXT


def test_scripted_build_deterministic(vocab, tmp_path):
    w1, c1 = build_scripted_model("Hello there", vocab)
    w2, c2 = build_scripted_model("Hello there", vocab)
    p1, p2 = tmp_path / "a.stlm", tmp_path / "b.stlm"
    write_model(w1, c1, p1)
    write_model(w2, c2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_scripted_rejects_unrealizable_window(vocab):
    with pytest.raises(ValueError, match="order-3"):
        build_scripted_model("abcX abcY", vocab)


def test_scripted_rejects_oversized_alphabet(vocab):
    reply = "".join(chr(33 + i) for i in range(70))
    with pytest.raises(ValueError, match="distinct tokens"):
        build_scripted_model(reply, vocab)


def test_scripted_rejects_wrong_config(vocab):
    with pytest.raises(ValueError, match="pinned"):
        build_scripted_model("hi", vocab, config=ModelConfig(1, 2, 64, 320, 32))


def test_scripted_quantized_copy_still_reproduces(action_model, vocab):
    # the construction's margins survive 4-bit weight quantization
    from stlm.qtensor import quantize_tensor

    weights, config = action_model
    from stlm.transformer import ModelWeights

    quantized = ModelWeights()
    for name, value in weights.tensors.items():
        arr = np.asarray(value)
        quantized[name] = quantize_tensor(arr) if arr.ndim == 2 else arr
    res = generate(
        quantized, config, vocab,
        tok.encode("<human>: hi\n<bot>:", vocab),
        SamplerParams(), StopSpec(),
    )
    assert res.text == ACTION_REPLY
