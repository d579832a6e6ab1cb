"""Chat sessions: history-aware prompts, busy-state enforcement, and the
action events a turn produces.

Run: python3 demos/06_chat_session.py
"""

from stlm import ChatEngine, ChatSession
from stlm import tokenizer as tok
from stlm.errors import Busy
from stlm.fixtures import build_scripted_model

vocab = tok.build_vocab()
weights, config = build_scripted_model(
    "<call>John<call> <calendar>2023-05-20T09:15:30/Review<calendar>", vocab
)
engine = ChatEngine(weights, config, vocab, token_delay=0.01)
session = ChatSession("demo")

print("turn 1:")
pending = engine.submit(session, "call john and set up the review",
                        on_event=lambda e: print("  event:", type(e).__name__))
try:
    engine.submit(session, "impatient second prompt")
except Busy as e:
    print("  second submit rejected while busy:", e)
turn = pending.result()
print(f"  -> {len(turn.actions)} actions, stop {turn.stop_reason.value}")

print("\nturn 2 prompt includes retained history:")
engine.submit(session, "thanks!").result()
print(engine.render_prompt(session))
