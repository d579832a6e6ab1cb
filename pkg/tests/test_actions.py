import random
from datetime import datetime

import pytest

from stlm import actions as act
from stlm.errors import BadDateTime, MalformedCalendar


def run(text: str, chunks=None, cap=None) -> list[act.ParseEvent]:
    state = act.ParserState() if cap is None else act.ParserState(payload_cap=cap)
    events: list[act.ParseEvent] = []
    for chunk in chunks if chunks is not None else [text]:
        events.extend(act.feed(state, chunk))
    events.extend(act.flush(state))
    return act.coalesce(events)


def actions_of(events):
    return [e.action for e in events if isinstance(e, act.ActionDetected)]


def text_of(events):
    return "".join(e.text for e in events if isinstance(e, act.TextDelta))


def warnings_of(events):
    return [e for e in events if isinstance(e, act.ParseWarning)]


def test_call_example():
    events = run("<call>John<call>")
    (action,) = actions_of(events)
    assert action.kind == "call"
    assert action.contact == "John"
    assert action.mismatched_close is None
    assert text_of(events) == ""


def test_search_example():
    events = run("<search>Highest building in the world<search>")
    (action,) = actions_of(events)
    assert action.kind == "search"
    assert action.query == "Highest building in the world"


def test_calendar_example():
    events = run("<calendar>2023-05-20T09:00:00/Meeting<calendar>")
    (action,) = actions_of(events)
    assert action.kind == "calendar"
    assert action.when == datetime(2023, 5, 20, 9, 0, 0)
    assert action.title == "Meeting"


def test_mismatched_close_example():
    events = run("<call>John Castro<calendar>")
    (action,) = actions_of(events)
    assert action.kind == "call"
    assert action.contact == "John Castro"
    assert action.mismatched_close == "calendar"
    warns = warnings_of(events)
    assert len(warns) == 1 and warns[0].reason == act.WARN_MISMATCHED_CLOSE


def test_chunk_split_equivalence_example():
    whole = run("<call>John<call>")
    split = run("", chunks=["<ca", "ll>Jo", "hn<call>"])
    assert whole == split


def test_empty_input():
    assert run("") == []


def test_text_outside_tags_passes_through():
    events = run("hello <call>Ana<call> bye")
    assert text_of(events) == "hello  bye"
    (action,) = actions_of(events)
    assert action.contact == "Ana"


def test_payload_withheld_until_closer():
    state = act.ParserState()
    first = act.feed(state, "<call>Jo")
    assert first == []
    rest = act.feed(state, "hn<call>")
    assert actions_of(act.coalesce(rest))[0].contact == "John"


def test_calendar_payload_first_slash_rule():
    when, title = act.parse_calendar_payload("2023-05-20T09:00:00/Q1/Q2 review")
    assert when == datetime(2023, 5, 20, 9, 0, 0)
    assert title == "Q1/Q2 review"


def test_calendar_payload_errors():
    with pytest.raises(MalformedCalendar):
        act.parse_calendar_payload("Meeting")
    with pytest.raises(BadDateTime):
        act.parse_calendar_payload("sometime soon/Meeting")
    with pytest.raises(MalformedCalendar):
        act.parse_calendar_payload("2023-05-20T09:00:00/   ")


def test_bad_calendar_becomes_warning_and_text():
    raw = "<calendar>not a date/Meeting<calendar>"
    events = run(raw)
    assert actions_of(events) == []
    (warn,) = warnings_of(events)
    assert warn.reason == act.WARN_BAD_DATETIME
    assert text_of(events) == raw


def test_empty_payload_degrades_to_text():
    events = run("<call>   <call>")
    assert actions_of(events) == []
    (warn,) = warnings_of(events)
    assert warn.reason == act.WARN_EMPTY_PAYLOAD
    assert text_of(events) == "<call>   <call>"


def test_unterminated_action_flush():
    events = run("<call>John")
    (warn,) = warnings_of(events)
    assert warn.reason == act.WARN_UNTERMINATED
    assert warn.raw_span == "<call>John"
    assert text_of(events) == "<call>John"


def test_flush_outside_is_silent():
    state = act.ParserState()
    act.feed(state, "plain text ")
    assert act.flush(state) == []


def test_flush_releases_maybe_tag_buffer():
    state = act.ParserState()
    events = act.feed(state, "<ca")
    assert events == []
    assert act.flush(state) == [act.TextDelta("<ca")]


def test_payload_cap_overflow():
    events = run("<call>" + "x" * 40 + "<call>", cap=16)
    assert actions_of(events) == []
    warns = warnings_of(events)
    assert warns[0].reason == act.WARN_PAYLOAD_OVERFLOW
    assert text_of(events) == "<call>" + "x" * 40 + "<call>"


def test_angle_bracket_noise_is_text():
    samples = ["a < b", "<<call", "<calx>", "5 > 3 < 7", "<call<call>done<call>"]
    for s in samples[:-1]:
        events = run(s)
        assert text_of(events) == s
        assert actions_of(events) == []
    events = run(samples[-1])
    (action,) = actions_of(events)
    assert action.contact == "done"
    assert text_of(events) == "<call"


def test_conservation_property():
    rng = random.Random(5)
    corpus = [
        "ok <call>John<call> then <search>q<search>",
        "<calendar>2023-05-20T09:00:00/Meeting<calendar> tail",
        "<call>unfinished",
        "noise <cal <call>A<search> more",
        "<search>  <search>",
    ]
    for text in corpus:
        events = run(text)
        rebuilt = ""
        for e in events:
            if isinstance(e, act.TextDelta):
                rebuilt += e.text
            elif isinstance(e, act.ActionDetected):
                rebuilt += e.action.raw_span
        assert rebuilt == text, text


def random_partitions(text: str, rng: random.Random, n: int):
    for _ in range(n):
        cuts = sorted(rng.sample(range(len(text) + 1), rng.randrange(0, min(9, len(text)))))
        points = [0] + cuts + [len(text)]
        yield [text[a:b] for a, b in zip(points, points[1:])]


def test_chunking_invariance_fuzz():
    rng = random.Random(99)
    corpus = [
        "<call>John<call>",
        "<search>Highest building in the world<search>",
        "<calendar>2023-05-20T09:00:00/Meeting<calendar>",
        "<call>John Castro<calendar>",
        "mixed <call>A<call> text <sear and <calendar>bad<calendar> end",
    ]
    for text in corpus:
        whole = run(text)
        for chunks in random_partitions(text, rng, 60):
            assert run(text, chunks=chunks) == whole


def test_action_json_schema_roundtrip():
    events = run("<calendar>2023-05-20T09:00:00/Meeting<calendar>")
    (action,) = actions_of(events)
    data = action.to_dict()
    assert data == {
        "kind": "calendar",
        "raw_span": "<calendar>2023-05-20T09:00:00/Meeting<calendar>",
        "when": "2023-05-20T09:00:00",
        "title": "Meeting",
        "mismatched_close": None,
    }
    assert act.Action.from_dict(data) == action


def test_determinism():
    text = "x<call>A<call>y<search>B<search>"
    assert run(text) == run(text)
