import threading
import time

import pytest

from stlm import actions as act
from stlm import tokenizer as tok
from stlm.chat import ChatEngine, ChatSession, SessionStore
from stlm.errors import Busy, InvalidValue, NotBusy
from stlm.transformer import StopReason

from conftest import ACTION_REPLY


def make_engine(model, vocab, **kwargs) -> ChatEngine:
    weights, config = model
    return ChatEngine(weights, config, vocab, **kwargs)


def test_render_prompt_template(hello_model, vocab):
    engine = make_engine(hello_model, vocab)
    session = ChatSession("s")
    session.turns = [("human", "Hi")]
    assert engine.render_prompt(session) == "<human>: Hi\n<bot>:"


def test_render_prompt_keeps_context(hello_model, vocab):
    engine = make_engine(hello_model, vocab)
    session = ChatSession("s")
    session.turns = [
        ("human", "Who is Elon Musk?"),
        ("bot", "A business magnate."),
        ("human", "When was he born?"),
    ]
    prompt = engine.render_prompt(session)
    assert "Who is Elon Musk?" in prompt
    assert "A business magnate." in prompt
    assert prompt.endswith("<human>: When was he born?\n<bot>:")


def test_render_prompt_trims_oldest_pairs(hello_model, vocab):
    engine = make_engine(hello_model, vocab)
    session = ChatSession("s")
    old = "x" * 60
    session.turns = [
        ("human", f"first {old}"),
        ("bot", old),
        ("human", f"second {old}"),
        ("bot", old),
        ("human", "newest question"),
    ]
    prompt = engine.render_prompt(session)
    assert "first" not in prompt
    assert "newest question" in prompt
    budget = engine.token_budget(session)
    assert len(tok.encode(prompt, vocab)) <= budget


def test_trimming_always_retains_newest_human_turn(hello_model, vocab):
    engine = make_engine(hello_model, vocab)
    session = ChatSession("s")
    session.turns = [("human", "y" * 500)]
    prompt = engine.render_prompt(session)
    assert "y" * 500 in prompt


def test_submit_hello_turn(hello_model, vocab):
    engine = make_engine(hello_model, vocab)
    session = ChatSession("s")
    events = []
    turn = engine.submit(session, "hi", on_event=events.append).result(timeout=30)
    assert turn.text == "Hello"
    assert turn.actions == []
    assert turn.stop_reason is StopReason.END_OF_TEXT
    assert turn.token_count > 0
    assert session.turns == [("human", "hi"), ("bot", "Hello")]
    assert session.busy is False
    deltas = "".join(e.text for e in events if isinstance(e, act.TextDelta))
    assert deltas == turn.text


def test_submit_action_turn_withholds_payload(action_model, vocab):
    engine = make_engine(action_model, vocab)
    session = ChatSession("s")
    events = []
    turn = engine.submit(session, "call john", on_event=events.append).result(timeout=60)
    kinds = [a.kind for a in turn.actions]
    assert kinds == ["call", "search", "calendar"]
    assert turn.actions[0].contact == "John"
    assert turn.actions[1].query == "Highest building in the world"
    assert "<call>" not in turn.text and "John" not in turn.text
    assert turn.text == "  "  # only the separating spaces remain
    reconstructed = ""
    for e in events:
        if isinstance(e, act.TextDelta):
            reconstructed += e.text
        elif isinstance(e, act.ActionDetected):
            reconstructed += e.action.raw_span
    assert reconstructed == ACTION_REPLY


def test_busy_rejects_second_submit(action_model, vocab):
    engine = make_engine(action_model, vocab, token_delay=0.01)
    session = ChatSession("s")
    pending = engine.submit(session, "first")
    with pytest.raises(Busy):
        engine.submit(session, "second")
    turn = pending.result(timeout=60)
    assert turn.stop_reason is StopReason.END_OF_TEXT
    assert [s for s, _ in session.turns] == ["human", "bot"]


def test_concurrent_submits_one_winner(action_model, vocab):
    engine = make_engine(action_model, vocab, token_delay=0.01)
    session = ChatSession("s")
    outcomes = []

    def try_submit():
        try:
            outcomes.append(engine.submit(session, "race"))
        except Busy:
            outcomes.append("busy")

    threads = [threading.Thread(target=try_submit) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    winners = [o for o in outcomes if o != "busy"]
    assert len(winners) == 1
    winners[0].result(timeout=60)


def test_cancel_mid_stream(action_model, vocab):
    engine = make_engine(action_model, vocab, token_delay=0.02)
    session = ChatSession("s")
    pending = engine.submit(session, "go")
    time.sleep(0.1)
    engine.cancel(session)
    turn = pending.result(timeout=60)
    assert turn.stop_reason is StopReason.CANCELLED
    assert session.busy is False
    assert session.turns[-1][0] == "bot"  # partial turn retained
    follow_up = engine.submit(session, "again")
    assert follow_up.result(timeout=60).stop_reason in (
        StopReason.END_OF_TEXT,
        StopReason.MAX_CONTEXT,
    )


def test_cancel_when_idle(hello_model, vocab):
    engine = make_engine(hello_model, vocab)
    session = ChatSession("s")
    with pytest.raises(NotBusy):
        engine.cancel(session)


def test_empty_prompt_rejected(hello_model, vocab):
    engine = make_engine(hello_model, vocab)
    with pytest.raises(InvalidValue):
        engine.submit(ChatSession("s"), "")


def test_session_store_roundtrip(tmp_path, hello_model, vocab):
    store = SessionStore(tmp_path)
    engine = make_engine(hello_model, vocab, store=store)
    session = ChatSession("persisted")
    engine.submit(session, "hi").result(timeout=30)
    assert store.load_turns("persisted") == [("human", "hi"), ("bot", "Hello")]
    assert store.session_ids() == ["persisted"]
    again = SessionStore(tmp_path)
    assert again.load_turns("persisted") == [("human", "hi"), ("bot", "Hello")]


def test_render_prompt_deterministic(hello_model, vocab):
    engine = make_engine(hello_model, vocab)
    session = ChatSession("s")
    session.turns = [("human", "a"), ("bot", "b"), ("human", "c")]
    assert engine.render_prompt(session) == engine.render_prompt(session)
