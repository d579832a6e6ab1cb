"""Test servers: a fixture file server with Range support and fault
injection, and a live uvicorn wrapper for SSE streaming tests (the ASGI
test client cannot abandon an infinite stream, a real socket can)."""

from __future__ import annotations

import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class LiveServer:
    """Runs a FastAPI app on a real loopback port in a daemon thread."""

    def __init__(self, app):
        import uvicorn

        self._config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
        self._server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def __enter__(self):
        self._thread.start()
        deadline = time.time() + 10
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("uvicorn did not start")
            time.sleep(0.01)
        port = self._server.servers[0].sockets[0].getsockname()[1]
        self.base_url = f"http://127.0.0.1:{port}"
        return self

    def __exit__(self, *exc):
        self._server.should_exit = True
        self._thread.join(timeout=10)


class FixtureFileServer:
    """Serves one blob at any path; can truncate or corrupt responses."""

    def __init__(self, blob: bytes):
        self.blob = blob
        self.mode = "ok"  # ok | corrupt | truncate
        self.truncate_at = len(blob) // 2
        self.request_count = 0
        self.range_requests = 0
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                server.request_count += 1
                data = server.blob
                if server.mode == "corrupt":
                    flipped = bytearray(data)
                    flipped[len(flipped) // 3] ^= 0xFF
                    data = bytes(flipped)
                start = 0
                status = 200
                header_range = self.headers.get("Range")
                if header_range and header_range.startswith("bytes="):
                    server.range_requests += 1
                    start = int(header_range[len("bytes=") :].rstrip("-"))
                    status = 206
                body = data[start:]
                sent_len = len(body)
                if server.mode == "truncate":
                    body = body[: max(0, server.truncate_at - start)]
                self.send_response(status)
                self.send_header("Content-Length", str(sent_len))
                if status == 206:
                    self.send_header(
                        "Content-Range", f"bytes {start}-{len(data) - 1}/{len(data)}"
                    )
                self.end_headers()
                try:
                    self.wfile.write(body)
                    if server.mode == "truncate":
                        self.wfile.flush()
                        self.connection.close()
                except (BrokenPipeError, ConnectionResetError):
                    pass

            def log_message(self, *args):
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}/model.stlm"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._httpd.shutdown()
        self._httpd.server_close()
