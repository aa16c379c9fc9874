"""HTTP server speaking the generation wire protocol.

Serves any backend object with an `identifier` and a
`render(edges, text, seed) -> RgbImage` method, which makes it both the
built-in fake server (stub backend, for testing remote clients with no
real generation service) and a reference for conforming implementations.

Protocol (JSON bodies):

    GET  /v1/health   -> {"backend_id": str}
    POST /v1/generate    {"edges_png": base64 PNG, "prompt": str,
                          "seed": u64, "height": int, "width": int}
                      -> {"image_png": base64 PNG}
                      or {"error": {"code": str, "message": str}} with 4xx/5xx

Height and width must be positive multiples of 64 and match the decoded
edge image; the response image has exactly those dimensions.
"""

from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .images import edges_from_png_bytes, png_bytes


class WireProtocolError(Exception):
    def __init__(self, code: str, message: str, status: int = 400):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status


def _validate_generate_payload(payload: dict):
    for field in ("edges_png", "prompt", "seed", "height", "width"):
        if field not in payload:
            raise WireProtocolError("invalid_request", f"missing field {field!r}")
    if not isinstance(payload["prompt"], str) or not payload["prompt"]:
        raise WireProtocolError("invalid_request", "prompt must be a nonempty string")
    seed = payload["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not (0 <= seed < 2**64):
        raise WireProtocolError("invalid_request", "seed must be an unsigned 64-bit integer")
    for field in ("height", "width"):
        v = payload[field]
        if not isinstance(v, int) or isinstance(v, bool) or v < 64 or v % 64:
            raise WireProtocolError(
                "invalid_request", f"{field} must be a positive multiple of 64"
            )
    try:
        raw = base64.b64decode(payload["edges_png"], validate=True)
        edges = edges_from_png_bytes(raw)
    except Exception as exc:
        raise WireProtocolError("bad_image", f"edges_png is not a decodable PNG: {exc}") from exc
    if (edges.height, edges.width) != (payload["height"], payload["width"]):
        raise WireProtocolError(
            "invalid_request",
            f"edge image is {(edges.height, edges.width)}, payload says "
            f"{(payload['height'], payload['width'])}",
        )
    return edges, payload["prompt"], seed


class _Handler(BaseHTTPRequestHandler):
    backend = None  # injected by make_server

    def log_message(self, fmt, *args):  # silence default stderr chatter
        pass

    def _send_json(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _send_error_body(self, exc: WireProtocolError) -> None:
        self._send_json(exc.status, {"error": {"code": exc.code, "message": exc.message}})

    def do_GET(self):
        if self.path == "/v1/health":
            self._send_json(200, {"backend_id": self.backend.identifier})
        else:
            self._send_error_body(WireProtocolError("not_found", f"no route {self.path}", 404))

    def do_POST(self):
        if self.path != "/v1/generate":
            self._send_error_body(WireProtocolError("not_found", f"no route {self.path}", 404))
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length))
            if not isinstance(payload, dict):
                raise WireProtocolError("invalid_request", "body must be a JSON object")
            edges, prompt, seed = _validate_generate_payload(payload)
        except WireProtocolError as exc:
            self._send_error_body(exc)
            return
        except Exception as exc:
            self._send_error_body(WireProtocolError("invalid_request", f"bad JSON body: {exc}"))
            return
        try:
            img = self.backend.render(edges, prompt, seed)
        except Exception as exc:
            self._send_error_body(WireProtocolError("generation_failed", str(exc), 500))
            return
        self._send_json(
            200, {"image_png": base64.b64encode(png_bytes(img)).decode("ascii")}
        )


def make_server(backend, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"backend": backend})
    return ThreadingHTTPServer((host, port), handler)


class ServerThread:
    """Run the protocol server on a background thread (tests, fixtures)."""

    def __init__(self, backend, host: str = "127.0.0.1", port: int = 0):
        self.server = make_server(backend, host, port)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "ServerThread":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


def serve_forever(backend, host: str, port: int) -> None:
    server = make_server(backend, host, port)
    actual_host, actual_port = server.server_address[:2]
    print(f"serving generation protocol on http://{actual_host}:{actual_port} "
          f"(backend_id={backend.identifier})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
