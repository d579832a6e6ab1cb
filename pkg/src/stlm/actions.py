"""Streaming text-to-actions parser.

Generated text may embed phone-style intents between special tags:

    <call>John<call>
    <search>Highest building in the world<search>
    <calendar>2023-05-20T09:00:00/Meeting<calendar>

The parser consumes text in arbitrary chunks (tags may split anywhere),
emits plain text immediately, and withholds tag payloads until a closing
tag arrives. Any of the three tag literals closes an open action; when the
closer differs from the opener the action is still produced, with
`mismatched_close` set, since small quantized models are known to pick the
wrong closing tag. Event streams are chunking-invariant: any partition of
the same text yields the same coalesced events.

Action payload text never appears in TextDelta events; the concatenation
of all TextDelta payloads plus the raw spans of detected actions equals
the input exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime

from .errors import BadDateTime, MalformedCalendar

TAGS = ("<call>", "<search>", "<calendar>")
DEFAULT_PAYLOAD_CAP = 512

KIND_CALL = "call"
KIND_SEARCH = "search"
KIND_CALENDAR = "calendar"

WARN_MISMATCHED_CLOSE = "mismatched_close"
WARN_EMPTY_PAYLOAD = "empty_payload"
WARN_MALFORMED_CALENDAR = "malformed_calendar"
WARN_BAD_DATETIME = "bad_datetime"
WARN_PAYLOAD_OVERFLOW = "payload_overflow"
WARN_UNTERMINATED = "unterminated"


@dataclass(frozen=True)
class Action:
    kind: str
    raw_span: str
    contact: str | None = None
    query: str | None = None
    when: datetime | None = None
    title: str | None = None
    mismatched_close: str | None = None

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "raw_span": self.raw_span}
        if self.kind == KIND_CALL:
            out["contact"] = self.contact
        elif self.kind == KIND_SEARCH:
            out["query"] = self.query
        else:
            out["when"] = self.when.isoformat() if self.when else None
            out["title"] = self.title
        out["mismatched_close"] = self.mismatched_close
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        when = d.get("when")
        return cls(
            kind=d["kind"],
            raw_span=d.get("raw_span", ""),
            contact=d.get("contact"),
            query=d.get("query"),
            when=datetime.fromisoformat(when) if when else None,
            title=d.get("title"),
            mismatched_close=d.get("mismatched_close"),
        )


@dataclass(frozen=True)
class TextDelta:
    text: str


@dataclass(frozen=True)
class ActionDetected:
    action: Action


@dataclass(frozen=True)
class ParseWarning:
    reason: str
    raw_span: str


ParseEvent = TextDelta | ActionDetected | ParseWarning


def parse_calendar_payload(payload: str) -> tuple[datetime, str]:
    """Split at the first '/': ISO datetime on the left, title on the right."""
    at = payload.find("/")
    if at == -1:
        raise MalformedCalendar(f"no '/' separator in calendar payload {payload!r}")
    stamp, title = payload[:at], payload[at + 1 :].strip()
    try:
        when = datetime.strptime(stamp.strip(), "%Y-%m-%dT%H:%M:%S")
    except ValueError as e:
        raise BadDateTime(f"calendar date/time {stamp!r}: {e}") from None
    if not title:
        raise MalformedCalendar("calendar title is empty")
    return when, title


@dataclass
class ParserState:
    """Single-owner streaming state; mutate through feed/flush only."""

    payload_cap: int = DEFAULT_PAYLOAD_CAP
    opener: str | None = None  # inside an action iff set
    payload: str = ""
    carry: str = ""  # undecided chars that may begin a tag literal
    _text: list[str] = field(default_factory=list, repr=False)

    @property
    def inside(self) -> bool:
        return self.opener is not None


def _flush_text(state: ParserState, events: list[ParseEvent]) -> None:
    if state._text:
        events.append(TextDelta("".join(state._text)))
        state._text.clear()


def _finish_action(state: ParserState, closer: str, events: list[ParseEvent]) -> None:
    opener = state.opener or ""
    raw = opener + state.payload + closer
    mismatch = closer[1:-1] if closer != opener else None
    action: Action | None = None
    problem: str | None = None
    if opener == "<call>":
        contact = state.payload.strip()
        if contact:
            action = Action(KIND_CALL, raw, contact=contact, mismatched_close=mismatch)
        else:
            problem = WARN_EMPTY_PAYLOAD
    elif opener == "<search>":
        query = state.payload.strip()
        if query:
            action = Action(KIND_SEARCH, raw, query=query, mismatched_close=mismatch)
        else:
            problem = WARN_EMPTY_PAYLOAD
    else:
        try:
            when, title = parse_calendar_payload(state.payload)
            action = Action(KIND_CALENDAR, raw, when=when, title=title, mismatched_close=mismatch)
        except MalformedCalendar:
            problem = WARN_MALFORMED_CALENDAR
        except BadDateTime:
            problem = WARN_BAD_DATETIME

    _flush_text(state, events)
    if action is not None:
        events.append(ActionDetected(action))
        if mismatch is not None:
            events.append(ParseWarning(WARN_MISMATCHED_CLOSE, raw))
    else:
        events.append(ParseWarning(problem or "invalid", raw))
        state._text.append(raw)  # degrade to plain text so nothing is lost
    state.opener = None
    state.payload = ""


def _abort_overflow(state: ParserState, events: list[ParseEvent]) -> None:
    raw = (state.opener or "") + state.payload
    _flush_text(state, events)
    events.append(ParseWarning(WARN_PAYLOAD_OVERFLOW, raw))
    state._text.append(raw)
    state.opener = None
    state.payload = ""


def _commit_char(state: ParserState, c: str, events: list[ParseEvent]) -> None:
    if state.inside:
        state.payload += c
        if len(state.payload) > state.payload_cap:
            _abort_overflow(state, events)
    else:
        state._text.append(c)


def feed(state: ParserState, chunk: str) -> list[ParseEvent]:
    """Advance the parser; returns the events this chunk resolved."""
    events: list[ParseEvent] = []
    for c in chunk:
        state.carry += c
        while state.carry:
            if state.carry in TAGS:
                tag, state.carry = state.carry, ""
                if state.inside:
                    _finish_action(state, tag, events)
                else:
                    _flush_text(state, events)
                    state.opener = tag
                    state.payload = ""
            elif any(t.startswith(state.carry) for t in TAGS):
                break  # still ambiguous; wait for more input
            else:
                head, state.carry = state.carry[0], state.carry[1:]
                _commit_char(state, head, events)
    _flush_text(state, events)
    return events


def flush(state: ParserState) -> list[ParseEvent]:
    """End of input: unterminated actions degrade to a warning plus text."""
    events: list[ParseEvent] = []
    if state.inside:
        raw = (state.opener or "") + state.payload + state.carry
        events.append(ParseWarning(WARN_UNTERMINATED, raw))
        state._text.append(raw)
        state.opener = None
        state.payload = ""
        state.carry = ""
    elif state.carry:
        state._text.append(state.carry)
        state.carry = ""
    _flush_text(state, events)
    return events


def coalesce(events: list[ParseEvent]) -> list[ParseEvent]:
    """Merge adjacent TextDelta events; canonical form for stream comparison."""
    out: list[ParseEvent] = []
    for ev in events:
        if isinstance(ev, TextDelta) and out and isinstance(out[-1], TextDelta):
            out[-1] = TextDelta(out[-1].text + ev.text)
        elif isinstance(ev, TextDelta) and not ev.text:
            continue
        else:
            out.append(ev)
    return out
