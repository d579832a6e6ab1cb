import random

import pytest

from stlm import tokenizer as tok
from stlm.errors import FormatError, InvalidToken


def test_empty_string(vocab):
    assert tok.encode("", vocab) == []
    assert tok.decode([], vocab) == ""


def test_special_is_single_token(vocab):
    ids = tok.encode("<call>", vocab)
    assert ids == [vocab.special_id("<call>")]


def test_call_wrapped_name(vocab):
    ids = tok.encode("<call>John<call>", vocab)
    call = vocab.special_id("<call>")
    assert ids[0] == call and ids[-1] == call
    assert ids[1:-1] == [ord(c) for c in "John"]


def test_eos_decodes_to_literal(vocab):
    assert tok.decode([vocab.eos_id], vocab) == "<|endoftext|>"


def test_plain_text_roundtrip(vocab):
    text = "Hello, world"
    assert tok.decode(tok.encode(text, vocab), vocab) == text


def test_longest_match_prefers_calendar_over_call_prefix(vocab):
    ids = tok.encode("<calendar>", vocab)
    assert ids == [vocab.special_id("<calendar>")]


def test_specials_never_split(vocab):
    text = "a<search>b<human>c<|endoftext|>"
    ids = tok.encode(text, vocab)
    assert vocab.special_id("<search>") in ids
    assert vocab.special_id("<human>") in ids
    assert vocab.eos_id in ids
    assert tok.decode(ids, vocab) == text


def test_partial_tag_text_stays_bytes(vocab):
    ids = tok.encode("<cal", vocab)
    assert all(i < 256 for i in ids)
    assert tok.decode(ids, vocab) == "<cal"


def test_unknown_id_raises(vocab):
    with pytest.raises(InvalidToken):
        tok.decode([len(vocab) + 5], vocab)


def test_multibyte_utf8_roundtrip(vocab):
    text = "naïve café — 日本語 🙂"
    assert tok.decode(tok.encode(text, vocab), vocab) == text


def test_random_unicode_roundtrip_property(vocab):
    rng = random.Random(1234)
    pool = (
        "abc XYZ09 <>|/:-\n\t"
        "éüñ☃中文🙂"
        "<call><search><calendar><human><bot><|endoftext|>"
    )
    for _ in range(10_000):
        n = rng.randrange(0, 24)
        text = "".join(rng.choice(pool) for _ in range(n))
        assert tok.decode(tok.encode(text, vocab), vocab) == text


def test_byte_tokens_are_all_encodable(vocab):
    for b in range(256):
        text = bytes([b]).decode("latin-1")
        ids = tok.encode(text, vocab)
        raw = b"".join(vocab.entries[i] for i in ids)
        assert raw == text.encode("utf-8")


def test_streaming_retokenization_bound(vocab):
    # growing a string only perturbs tokens within the longest special literal
    bound = tok.max_special_len(vocab)
    assert bound == len("<|endoftext|>")
    text = "abc<calenda"
    grown = text + "r>"
    stable = tok.encode(text, vocab)[: -(bound - 1)]
    assert tok.encode(grown, vocab)[: len(stable)] == stable


def test_vocab_file_roundtrip(tmp_path, vocab):
    path = tmp_path / "fixture.vocab"
    tok.save_vocab(vocab, path)
    loaded = tok.load_vocab(path)
    assert loaded.entries == vocab.entries
    assert loaded.specials == vocab.specials
    first = path.read_text(encoding="utf-8").splitlines()[0]
    assert first == tok.VOCAB_FILE_HEADER


def test_vocab_file_bad_header(tmp_path):
    path = tmp_path / "bad.vocab"
    path.write_text("not-a-vocab\n", encoding="utf-8")
    with pytest.raises(FormatError):
        tok.load_vocab(path)


def test_special_ids_distinct_and_after_bytes(vocab):
    ids = [i for _, i in vocab.specials]
    assert len(set(ids)) == len(ids)
    assert min(ids) == 256
