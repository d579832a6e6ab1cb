"""Operator command line: quantize, merge-lora, download, inspect, chat REPL,
action-stream replay, fixture generation, and the serve wrapper.

Exit codes are stable: 0 success, 1 usage, 2 I/O, 3 format/checksum,
4 shape/tensor mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import tokenizer as tok
from . import actions as act
from .chat import ChatEngine, ChatSession, SessionStore
from .download import ModelManifest, fetch_model, load_manifest, save_manifest
from .errors import (
    AlreadyQuantized,
    ChecksumMismatch,
    CorruptFile,
    DiskFull,
    FormatError,
    InvalidToken,
    InvalidValue,
    MissingTensor,
    NetworkError,
    ShapeError,
)
from .fixtures import SCRIPTED_CONFIG, build_random_model, build_scripted_model
from .lora import merge_lora
from .modelfile import (
    inspect_model,
    quantize_model,
    read_adapter,
    read_model,
    write_model,
)
from .transformer import DEFAULT_CONFIG, ModelConfig, SamplerParams, StopReason

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_FORMAT = 3
EXIT_SHAPE = 4


def _cmd_quantize(args) -> int:
    report = quantize_model(args.src, args.dst)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(report.format_table())
    return EXIT_OK


def _cmd_merge_lora(args) -> int:
    weights, config = read_model(args.base)
    adapter = read_adapter(args.adapter)
    merged = merge_lora(weights, adapter)
    summary = write_model(merged, config, args.out)
    print(f"merged {len(adapter.targets)} target(s) -> {args.out} ({summary.file_bytes} bytes)")
    return EXIT_OK


def _print_progress(done: int, total: int) -> None:
    if total > 0:
        pct = 100.0 * done / total
        sys.stderr.write(f"\rdownloading: {done}/{total} bytes ({pct:.0f}%)")
    else:
        sys.stderr.write(f"\rdownloading: {done} bytes")
    if done >= total:
        sys.stderr.write("\n")
    sys.stderr.flush()


def _cmd_download(args) -> int:
    manifest = load_manifest(args.manifest)
    import os

    dest = os.path.join(args.dest, manifest.name)
    if os.path.exists(dest):
        from .modelfile import md5_file

        if md5_file(dest) == manifest.md5_hex:
            print(f"{dest}: verified, skipping")
            return EXIT_OK
    path = fetch_model(manifest, args.dest, progress=_print_progress)
    print(f"downloaded and verified: {path}")
    return EXIT_OK


def _format_action_card(action: act.Action) -> str:
    if action.kind == act.KIND_CALL:
        body = f"contact={action.contact}"
    elif action.kind == act.KIND_SEARCH:
        body = f"query={action.query}"
    else:
        when = action.when.isoformat() if action.when else "?"
        body = f"when={when} title={action.title}"
    suffix = f" (mismatched close: <{action.mismatched_close}>)" if action.mismatched_close else ""
    return f"[{action.kind}] {body}{suffix}"


def _cmd_chat(args) -> int:
    weights, config = read_model(args.model)
    from .server import load_vocab_for

    vocab = load_vocab_for(args.model)
    store = SessionStore(args.session_dir) if args.session_dir else None
    engine = ChatEngine(weights, config, vocab, store=store)
    params = SamplerParams(temperature=args.temperature, top_k=args.top_k, seed=args.seed)
    session = ChatSession(args.session, params=params)
    if store is not None:
        session.turns = store.load_turns(args.session)
    print(f"model loaded: {args.model} ({config.n_layers} layers, d_model {config.d_model})")
    print("type a prompt; /reset clears history, /quit exits, Ctrl-C cancels a reply")

    while True:
        try:
            line = input()
        except EOFError:
            break
        line = line.rstrip("\n")
        if not line:
            continue
        if line == "/quit":
            break
        if line == "/reset":
            session.turns.clear()
            print("(history cleared)")
            continue
        if line == "/cancel":
            print("(nothing to cancel)")
            continue
        print(f"you> {line}")
        sys.stdout.write("bot> ")
        sys.stdout.flush()

        def on_event(event: act.ParseEvent) -> None:
            if isinstance(event, act.TextDelta):
                sys.stdout.write(event.text)
            elif isinstance(event, act.ActionDetected):
                sys.stdout.write(f"\n{_format_action_card(event.action)}\n")
            else:
                sys.stdout.write(f"\n[warning] {event.reason}\n")
            sys.stdout.flush()

        pending = engine.submit(session, line, on_event=on_event)
        try:
            turn = pending.result()
        except KeyboardInterrupt:
            engine.cancel(session)
            turn = pending.result()
        print(f"\n(stop: {turn.stop_reason.value}; tokens: {turn.token_count})")
        if turn.stop_reason is StopReason.CANCELLED:
            print("(reply cancelled)")
    return EXIT_OK


def _cmd_replay(args) -> int:
    parser_state = act.ParserState()
    events: list[act.ParseEvent] = []
    with open(args.events, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            chunk = json.loads(line)
            if not isinstance(chunk, str):
                raise FormatError("replay file lines must be JSON strings")
            events.extend(act.feed(parser_state, chunk))
    events.extend(act.flush(parser_state))
    for event in act.coalesce(events):
        if isinstance(event, act.TextDelta):
            print(f"text {json.dumps(event.text, ensure_ascii=False)}")
        elif isinstance(event, act.ActionDetected):
            print(f"action {json.dumps(event.action.to_dict(), ensure_ascii=False)}")
        else:
            print(
                f"warning {event.reason} "
                f"{json.dumps(event.raw_span, ensure_ascii=False)}"
            )
    return EXIT_OK


def _cmd_make_fixture(args) -> int:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            config = ModelConfig.from_dict(json.load(f))
    elif args.reply:
        config = SCRIPTED_CONFIG
    else:
        config = DEFAULT_CONFIG
    if config.d_model % 32 != 0:
        raise ShapeError(
            f"d_model {config.d_model} is not a multiple of 32; fixture would not quantize"
        )
    vocab = tok.build_vocab()
    if args.reply:
        weights, config = build_scripted_model(args.reply, vocab, config=config)
    else:
        weights = build_random_model(config, seed=args.seed)
    if args.dtype == "f16":
        for name, value in list(weights.tensors.items()):
            weights[name] = value.astype("float16")
    summary = write_model(weights, config, args.out)
    tok.save_vocab(vocab, f"{args.out}.vocab")
    if args.manifest_url is not None:
        import os

        from .modelfile import md5_file

        manifest = ModelManifest(
            url=args.manifest_url,
            total_bytes=os.path.getsize(args.out),
            md5_hex=md5_file(args.out),
            name=os.path.basename(args.out),
        )
        save_manifest(manifest, f"{args.out}.manifest.json")
    print(f"wrote {args.out} ({summary.file_bytes} bytes, {summary.tensor_count} tensors)")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    info = inspect_model(args.model)
    if args.json:
        print(json.dumps(info, indent=2))
        return EXIT_OK
    print(f"{info['path']}: {info['kind']} container, version {info['format_version']}")
    print(f"config: {json.dumps(info['config'], sort_keys=True)}")
    print(f"file bytes: {info['file_bytes']}")
    for t in info["tensors"]:
        dims = "x".join(str(d) for d in t["dims"])
        print(f"  {t['name']:<24} {dims:>12} {t['dtype']:>4} {t['payload_bytes']:>10}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from . import server

    return server.run(args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stlm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="convert a dense model file to q4")
    p.add_argument("src")
    p.add_argument("dst")
    p.add_argument("--json", action="store_true")
    p.set_defaults(run=_cmd_quantize)

    p = sub.add_parser("merge-lora", help="fold an adapter into base weights")
    p.add_argument("base")
    p.add_argument("adapter")
    p.add_argument("out")
    p.set_defaults(run=_cmd_merge_lora)

    p = sub.add_parser("download", help="fetch and verify a model by manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dest", required=True)
    p.set_defaults(run=_cmd_download)

    p = sub.add_parser("chat", help="offline REPL against a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--top-k", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--session", default="repl")
    p.add_argument("--session-dir", default=None)
    p.set_defaults(run=_cmd_chat)

    p = sub.add_parser("replay", help="feed a recorded chunk stream to the actions parser")
    p.add_argument("events", help="JSON-lines file; each line one text chunk")
    p.set_defaults(run=_cmd_replay)

    p = sub.add_parser("make-fixture", help="write a deterministic synthetic model")
    p.add_argument("out")
    p.add_argument("--config", help="model config JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reply", help="program the model to always reply with this text")
    p.add_argument("--dtype", choices=("f32", "f16"), default="f32")
    p.add_argument("--manifest-url", help="also write <out>.manifest.json with this url")
    p.set_defaults(run=_cmd_make_fixture)

    p = sub.add_parser("inspect", help="print container header, config, tensor table")
    p.add_argument("model")
    p.add_argument("--json", action="store_true")
    p.set_defaults(run=_cmd_inspect)

    p = sub.add_parser("serve", help="run the local chat service")
    from . import server as _server

    _server.add_server_args(p)
    p.set_defaults(run=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    try:
        return args.run(args)
    except (ShapeError, MissingTensor) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SHAPE
    except (FormatError, CorruptFile, ChecksumMismatch, AlreadyQuantized, InvalidToken, InvalidValue) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except (OSError, NetworkError, DiskFull) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
