"""Conversation sessions: prompt rendering with history, trimming, busy-state
enforcement, and generation wired through the actions parser.

A session owns its turn history and a busy flag; the engine owns the model.
submit() appends the human turn, hands generation to a worker thread, and
returns a handle immediately; parser events stream to the caller's callback
in order. The rendered prompt reuses the dialogue training template (minus
the trailing eos) and ends with "<bot>:" to cue the reply, so the serving
format matches the dataset format.

History that overflows the token budget (max_context minus a reply
reserve) is trimmed by dropping whole oldest human/bot pairs; the newest
human turn is always retained.
"""

from __future__ import annotations

import json
import os
import threading
import time
from concurrent.futures import Future
from dataclasses import dataclass, field

from . import actions as act
from . import tokenizer as tok
from .dialogue import EOS_LITERAL, DialogueSample, render_dialogue
from .errors import Busy, InvalidValue, NotBusy
from .transformer import (
    GenerationResult,
    ModelConfig,
    ModelWeights,
    SamplerParams,
    StopReason,
    StopSpec,
    generate,
)

DEFAULT_GENERATION_RESERVE = 128


@dataclass
class ChatSession:
    session_id: str
    params: SamplerParams = field(default_factory=SamplerParams)
    turns: list[tuple[str, str]] = field(default_factory=list)
    settings: dict = field(default_factory=dict)
    generation_reserve: int = DEFAULT_GENERATION_RESERVE
    busy: bool = False
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _cancel: threading.Event = field(default_factory=threading.Event, repr=False)


@dataclass
class TurnResult:
    text: str
    actions: list[act.Action]
    stop_reason: StopReason
    token_count: int
    wall_time: float


class PendingTurn:
    """Handle for an in-flight generation; result() blocks until done."""

    def __init__(self, future: Future):
        self._future = future

    def result(self, timeout: float | None = None) -> TurnResult:
        return self._future.result(timeout)

    def done(self) -> bool:
        return self._future.done()


class SessionStore:
    """Append-only JSON-lines transcript per session, reloadable on restart."""

    def __init__(self, directory):
        self.directory = str(directory)
        os.makedirs(self.directory, exist_ok=True)

    def _path(self, session_id: str) -> str:
        return os.path.join(self.directory, f"{session_id}.jsonl")

    def append(self, session_id: str, record: dict) -> None:
        with open(self._path(session_id), "a", encoding="utf-8") as f:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")

    def load_turns(self, session_id: str) -> list[tuple[str, str]]:
        path = self._path(session_id)
        if not os.path.exists(path):
            return []
        turns = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    record = json.loads(line)
                    turns.append((record["speaker"], record["text"]))
        return turns

    def session_ids(self) -> list[str]:
        return sorted(
            name[: -len(".jsonl")]
            for name in os.listdir(self.directory)
            if name.endswith(".jsonl")
        )


class ChatEngine:
    """Binds a loaded model to sessions; one generation per session at a time."""

    def __init__(
        self,
        weights: ModelWeights,
        config: ModelConfig,
        vocab: tok.Vocab,
        stop: StopSpec = StopSpec(),
        store: SessionStore | None = None,
        token_delay: float = 0.0,
    ):
        self.weights = weights
        self.config = config
        self.vocab = vocab
        self.stop = stop
        self.store = store
        self.token_delay = token_delay

    def token_budget(self, session: ChatSession) -> int:
        return self.config.max_context - session.generation_reserve

    def render_prompt(self, session: ChatSession) -> str:
        """Trim, then render retained turns ending with the "<bot>:" cue."""
        turns = self._trimmed_turns(session)
        body = render_dialogue(DialogueSample(tuple(turns)))
        return body.removesuffix(EOS_LITERAL) + "<bot>:"

    def _trimmed_turns(self, session: ChatSession) -> list[tuple[str, str]]:
        turns = list(session.turns)
        budget = self.token_budget(session)
        while len(turns) > 1:
            rendered = render_dialogue(DialogueSample(tuple(turns)))
            prompt = rendered.removesuffix(EOS_LITERAL) + "<bot>:"
            if len(tok.encode(prompt, self.vocab)) <= budget:
                break
            turns = turns[2:]  # drop the oldest human/bot pair
        return turns

    def submit(
        self,
        session: ChatSession,
        prompt: str,
        on_event=None,
    ) -> PendingTurn:
        """Start a turn; returns immediately. Raises Busy if one is in flight."""
        if not prompt:
            raise InvalidValue("prompt must be nonempty")
        with session._lock:
            if session.busy:
                raise Busy(f"session {session.session_id} is generating")
            session.busy = True
            session._cancel.clear()
        session.turns.append(("human", prompt))
        if self.store is not None:
            self.store.append(
                session.session_id,
                {"speaker": "human", "text": prompt, "ts": time.time()},
            )
        future: Future = Future()
        worker = threading.Thread(
            target=self._run_turn, args=(session, on_event, future), daemon=True
        )
        worker.start()
        return PendingTurn(future)

    def cancel(self, session: ChatSession) -> None:
        """Stop the in-flight generation at the next token boundary."""
        with session._lock:
            if not session.busy:
                raise NotBusy(f"session {session.session_id} is idle")
            session._cancel.set()

    def _run_turn(self, session: ChatSession, on_event, future: Future) -> None:
        t0 = time.monotonic()
        parser = act.ParserState()
        text_parts: list[str] = []
        detected: list[act.Action] = []

        def dispatch(event: act.ParseEvent) -> None:
            if isinstance(event, act.TextDelta):
                text_parts.append(event.text)
            elif isinstance(event, act.ActionDetected):
                detected.append(event.action)
            if on_event is not None:
                on_event(event)

        def on_token(piece: str) -> None:
            if self.token_delay:
                time.sleep(self.token_delay)
            for event in act.feed(parser, piece):
                dispatch(event)

        result: GenerationResult | None = None
        error: Exception | None = None
        try:
            prompt_ids = tok.encode(self.render_prompt(session), self.vocab)
            result = generate(
                self.weights,
                self.config,
                self.vocab,
                prompt_ids,
                session.params,
                self.stop,
                on_token=on_token,
                should_stop=session._cancel.is_set,
            )
            for event in act.flush(parser):
                dispatch(event)
        except Exception as e:  # propagate to the caller after busy clears
            error = e

        turn: TurnResult | None = None
        if error is None and result is not None:
            bot_text = "".join(text_parts)
            session.turns.append(("bot", bot_text))
            turn = TurnResult(
                text=bot_text,
                actions=detected,
                stop_reason=result.stop_reason,
                token_count=result.token_count,
                wall_time=time.monotonic() - t0,
            )
            if self.store is not None:
                self.store.append(
                    session.session_id,
                    {
                        "speaker": "bot",
                        "text": bot_text,
                        "ts": time.time(),
                        "stop": result.stop_reason.value,
                        "actions": [a.to_dict() for a in detected],
                    },
                )
        with session._lock:
            session.busy = False
        if error is not None:
            future.set_exception(error)
        else:
            future.set_result(turn)
