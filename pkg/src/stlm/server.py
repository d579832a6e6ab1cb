"""Local HTTP service exposing the chat engine: model lifecycle, streaming
chat events over server-sent events, and settings persistence.

Endpoints (JSON unless noted):

    GET  /api/model/status          current lifecycle state (+ progress)
    POST /api/chat                  {"session_id", "prompt"} -> 202/409/503
    GET  /api/chat/stream?session_id=...   SSE: token/action/warning/done
    GET  /api/settings              stored settings
    POST /api/settings              partial update, known keys only

The model is prepared on a background worker: verify an existing file,
download when absent or corrupt, load into memory, then flip to ready.
Chat endpoints reject requests until then. SSE streams persist across
turns and replay a session's full event history on (re)connect; idle
streams emit comment heartbeats.
"""

from __future__ import annotations

import argparse
import json
import os
import queue
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from . import actions as act
from . import tokenizer as tok
from .chat import ChatEngine, ChatSession, SessionStore
from .download import ModelManifest, fetch_model, load_manifest
from .errors import Busy, StlmError
from .modelfile import read_model
from .transformer import SamplerParams, StopSpec

STATUS_ABSENT = "absent"
STATUS_DOWNLOADING = "downloading"
STATUS_VERIFYING = "verifying"
STATUS_LOADING = "loading"
STATUS_READY = "ready"
STATUS_ERROR = "error"

SETTINGS_KEYS = {"username", "colors", "avatar"}
MAX_SETTINGS_BYTES = 16 * 1024


def load_vocab_for(model_path: str) -> tok.Vocab:
    """Side-car "<model>.vocab" if present, else the built-in fixture vocab."""
    sidecar = str(model_path) + ".vocab"
    if os.path.exists(sidecar):
        return tok.load_vocab(sidecar)
    return tok.build_vocab()


@dataclass
class _SessionHub:
    """A chat session plus its fan-out event history for SSE subscribers."""

    session: ChatSession
    history: list[tuple[str, dict]] = field(default_factory=list)
    subscribers: list[queue.Queue] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def publish(self, name: str, data: dict) -> None:
        with self.lock:
            self.history.append((name, data))
            for q in self.subscribers:
                q.put((name, data))

    def subscribe(self) -> tuple[list[tuple[str, dict]], queue.Queue]:
        q: queue.Queue = queue.Queue()
        with self.lock:
            return list(self.history), self._attach(q)

    def _attach(self, q: queue.Queue) -> queue.Queue:
        self.subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self.lock:
            if q in self.subscribers:
                self.subscribers.remove(q)


class ModelService:
    """Owns model lifecycle state and the live chat engine."""

    def __init__(
        self,
        manifest: ModelManifest | None = None,
        model_dir: str = ".",
        data_dir: str | None = None,
        sampler: SamplerParams | None = None,
        token_delay: float = 0.0,
        engine: ChatEngine | None = None,
    ):
        self.manifest = manifest
        self.model_dir = model_dir
        self.data_dir = data_dir
        self.token_delay = token_delay
        self.sampler = sampler or SamplerParams()
        self._lock = threading.Lock()
        self.status = STATUS_READY if engine is not None else STATUS_ABSENT
        self.progress = (0, manifest.total_bytes if manifest else 0)
        self.error_message: str | None = None
        self.engine = engine
        self.hubs: dict[str, _SessionHub] = {}
        self._worker: threading.Thread | None = None

    def _set_status(self, status: str, **extra) -> None:
        with self._lock:
            self.status = status
            if "progress" in extra:
                self.progress = extra["progress"]
            if "error" in extra:
                self.error_message = extra["error"]

    def start(self) -> None:
        if self.engine is not None or self._worker is not None:
            return
        self._worker = threading.Thread(target=self._prepare, daemon=True)
        self._worker.start()

    def _prepare(self) -> None:
        assert self.manifest is not None
        try:
            dest = os.path.join(self.model_dir, self.manifest.name)
            if os.path.exists(dest):
                self._set_status(STATUS_VERIFYING)

            def on_progress(done: int, total: int) -> None:
                self._set_status(STATUS_DOWNLOADING, progress=(done, total))

            path = fetch_model(self.manifest, self.model_dir, progress=on_progress)
            self._set_status(STATUS_VERIFYING)
            self._set_status(STATUS_LOADING)
            weights, config = read_model(path)
            vocab = load_vocab_for(path)
            store = SessionStore(os.path.join(self.data_dir, "sessions")) if self.data_dir else None
            self.engine = ChatEngine(
                weights, config, vocab, StopSpec(), store=store, token_delay=self.token_delay
            )
            self._set_status(STATUS_READY)
        except Exception as e:
            self._set_status(STATUS_ERROR, error=f"{type(e).__name__}: {e}")

    def status_payload(self) -> dict:
        with self._lock:
            payload: dict = {"status": self.status}
            if self.status == STATUS_DOWNLOADING:
                done, total = self.progress
                payload["done"] = done
                payload["total"] = total
            if self.status == STATUS_ERROR and self.error_message:
                payload["message"] = self.error_message
            if self.status == STATUS_READY and self.manifest is not None:
                payload["model"] = self.manifest.name
        return payload

    def hub(self, session_id: str, create: bool = False) -> _SessionHub | None:
        with self._lock:
            found = self.hubs.get(session_id)
            if found is None and create:
                session = ChatSession(session_id, params=self.sampler)
                if self.engine is not None and self.engine.store is not None:
                    session.turns = self.engine.store.load_turns(session_id)
                found = _SessionHub(session=session)
                self.hubs[session_id] = found
            return found


class SettingsStore:
    """Last-write-wins key/value settings persisted as one JSON file."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()

    def read(self) -> dict:
        with self._lock:
            if not os.path.exists(self.path):
                return {}
            with open(self.path, "r", encoding="utf-8") as f:
                return json.load(f)

    def update(self, patch: dict) -> dict:
        with self._lock:
            current = {}
            if os.path.exists(self.path):
                with open(self.path, "r", encoding="utf-8") as f:
                    current = json.load(f)
            current.update(patch)
            tmp = self.path + ".tmp"
            with open(tmp, "w", encoding="utf-8") as f:
                json.dump(current, f, ensure_ascii=False, indent=2)
            os.replace(tmp, self.path)
            return current


def _sse_frame(name: str, data: dict) -> str:
    return f"event: {name}\ndata: {json.dumps(data, ensure_ascii=False)}\n\n"


def _event_payload(event: act.ParseEvent) -> tuple[str, dict]:
    if isinstance(event, act.TextDelta):
        return "token", {"text": event.text}
    if isinstance(event, act.ActionDetected):
        return "action", event.action.to_dict()
    return "warning", {"reason": event.reason, "raw_span": event.raw_span}


def create_app(
    service: ModelService,
    data_dir: str | None = None,
    heartbeat_seconds: float = 15.0,
    frontend_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="stlm chat service")
    settings_path = os.path.join(data_dir or service.model_dir, "settings.json")
    settings = SettingsStore(settings_path)
    service.start()

    @app.get("/api/model/status")
    def model_status():
        return service.status_payload()

    @app.post("/api/chat")
    async def post_chat(request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "invalid_json"}, status_code=400)
        session_id = body.get("session_id")
        prompt = body.get("prompt")
        if not isinstance(session_id, str) or not session_id or not isinstance(prompt, str) or not prompt:
            return JSONResponse({"error": "session_id and prompt required"}, status_code=400)
        if service.status != STATUS_READY or service.engine is None:
            return JSONResponse({"error": "model not ready"}, status_code=503)
        hub = service.hub(session_id, create=True)

        def on_event(event: act.ParseEvent) -> None:
            name, data = _event_payload(event)
            hub.publish(name, data)

        engine = service.engine
        try:
            pending = engine.submit(hub.session, prompt, on_event=on_event)
        except Busy:
            return JSONResponse({"error": "busy"}, status_code=409)
        except StlmError as e:
            return JSONResponse({"error": str(e)}, status_code=400)

        def finish() -> None:
            try:
                turn = pending.result()
                hub.publish(
                    "done",
                    {
                        "stop": turn.stop_reason.value,
                        "token_count": turn.token_count,
                        "text": turn.text,
                        "actions": len(turn.actions),
                    },
                )
            except Exception as e:
                hub.publish("done", {"error": f"{type(e).__name__}: {e}"})

        threading.Thread(target=finish, daemon=True).start()
        return JSONResponse({"session_id": session_id, "accepted": True}, status_code=202)

    @app.post("/api/chat/cancel")
    def post_cancel(session_id: str):
        hub = service.hub(session_id)
        if hub is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        if service.engine is None:
            return JSONResponse({"error": "model not ready"}, status_code=503)
        try:
            service.engine.cancel(hub.session)
        except StlmError as e:
            return JSONResponse({"error": str(e)}, status_code=409)
        return {"cancelled": True}

    @app.get("/api/chat/stream")
    async def chat_stream(session_id: str):
        hub = service.hub(session_id)
        if hub is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)

        async def event_stream():
            import asyncio

            backlog, q = hub.subscribe()
            try:
                for name, data in backlog:
                    yield _sse_frame(name, data)
                idle = 0.0
                while True:
                    try:
                        name, data = q.get_nowait()
                    except queue.Empty:
                        await asyncio.sleep(0.02)
                        idle += 0.02
                        if idle >= heartbeat_seconds:
                            idle = 0.0
                            yield ": keepalive\n\n"
                        continue
                    idle = 0.0
                    yield _sse_frame(name, data)
            finally:
                hub.unsubscribe(q)

        return StreamingResponse(event_stream(), media_type="text/event-stream")

    @app.get("/api/settings")
    def get_settings():
        return settings.read()

    @app.post("/api/settings")
    async def post_settings(request: Request):
        raw = await request.body()
        if len(raw) > MAX_SETTINGS_BYTES:
            return JSONResponse({"error": "payload too large"}, status_code=413)
        try:
            patch = json.loads(raw)
        except json.JSONDecodeError:
            return JSONResponse({"error": "invalid_json"}, status_code=400)
        if not isinstance(patch, dict):
            return JSONResponse({"error": "object required"}, status_code=400)
        unknown = sorted(set(patch) - SETTINGS_KEYS)
        if unknown:
            return JSONResponse({"error": f"unknown keys: {', '.join(unknown)}"}, status_code=400)
        return settings.update(patch)

    if frontend_dir and os.path.isdir(frontend_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")
    return app


def _default_frontend_dir() -> str | None:
    here = os.path.dirname(os.path.abspath(__file__))
    for candidate in (
        os.path.join(here, "..", "..", "frontend", "dist"),
        os.path.join(os.getcwd(), "frontend", "dist"),
    ):
        if os.path.isdir(candidate):
            return os.path.abspath(candidate)
    return None


def build_service_from_args(args: argparse.Namespace) -> tuple[ModelService, str]:
    data_dir = args.data_dir or args.model_dir
    os.makedirs(data_dir, exist_ok=True)
    if args.model:
        weights, config = read_model(args.model)
        vocab = load_vocab_for(args.model)
        store = SessionStore(os.path.join(data_dir, "sessions"))
        engine = ChatEngine(weights, config, vocab, StopSpec(), store=store)
        service = ModelService(model_dir=args.model_dir, data_dir=data_dir, engine=engine)
    else:
        manifest = load_manifest(args.manifest)
        service = ModelService(manifest=manifest, model_dir=args.model_dir, data_dir=data_dir)
    return service, data_dir


def add_server_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", help="manifest JSON path (download + serve)")
    parser.add_argument("--model", help="serve an already-downloaded model file")
    parser.add_argument("--model-dir", default=os.environ.get("STLM_MODEL_DIR", "."))
    parser.add_argument("--data-dir", default=os.environ.get("STLM_DATA_DIR"))
    parser.add_argument("--host", default=os.environ.get("STLM_HOST", "127.0.0.1"))
    parser.add_argument("--port", type=int, default=int(os.environ.get("STLM_PORT", "8371")))
    parser.add_argument("--frontend", default=None, help="static UI directory to serve at /")


def run(args: argparse.Namespace) -> int:
    import uvicorn

    if not args.manifest and not args.model:
        raise SystemExit("one of --manifest or --model is required")
    service, data_dir = build_service_from_args(args)
    app = create_app(
        service,
        data_dir=data_dir,
        frontend_dir=args.frontend or _default_frontend_dir(),
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stlm-server", description="local chat service")
    add_server_args(parser)
    return run(parser.parse_args(argv))


if __name__ == "__main__":
    raise SystemExit(main())
