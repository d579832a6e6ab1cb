"""Text-to-actions: streaming tag parsing over chunked generated text.

The three tag grammars, the lenient mismatched-closer handling, and
chunking invariance.

Run: python3 demos/05_text_to_actions.py
"""

from stlm import actions as act


def show(label, text, chunks=None):
    state = act.ParserState()
    events = []
    for chunk in chunks if chunks is not None else [text]:
        events.extend(act.feed(state, chunk))
    events.extend(act.flush(state))
    print(f"-- {label}: {text!r}")
    for event in act.coalesce(events):
        if isinstance(event, act.TextDelta):
            print("   text   ", repr(event.text))
        elif isinstance(event, act.ActionDetected):
            print("   action ", event.action.to_dict())
        else:
            print("   warning", event.reason, repr(event.raw_span))
    return act.coalesce(events)


show("call", "<call>John<call>")
show("search", "<search>Highest building in the world<search>")
show("calendar", "<calendar>2023-05-20T09:00:00/Meeting<calendar>")

# a small quantized model sometimes closes with the wrong tag; the action
# is still produced, flagged for confirmation
show("mismatched closer", "<call>John Castro<calendar>")

# tags can arrive split across token boundaries
whole = show("split across chunks", "<call>John<call>", chunks=["<ca", "ll>Jo", "hn<call>"])
unsplit = show("same text unsplit", "<call>John<call>")
print("identical event streams:", whole == unsplit)

show("unterminated tag degrades to text", "please <call>John")
