"""Read-only JSON REST service over the metrics store.

Endpoints::

    GET /health                               {"status": "ok"}
    GET /cameras                              [{"camera_id", "state"}]
    GET /cameras/{id}/metrics?from=&to=       scene-metric records, time order
    GET /cameras/{id}/stability               stability status

Unknown cameras give 404, malformed or inverted bounds 400. Every handler
error is turned into a JSON response so a bad request cannot stop the
server.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlsplit

from .store import MetricsStore

log = logging.getLogger(__name__)


class _HttpError(Exception):
    def __init__(self, status, message):
        super().__init__(message)
        self.status = status


def _known(store: MetricsStore, camera_id: str) -> bool:
    return camera_id in store.cameras() or store.get_stability(camera_id) is not None


def handle(store: MetricsStore, path: str):
    """Route one GET request; returns ``(status, payload)``.

    Kept separate from the HTTP plumbing so it can be tested directly.
    """
    try:
        parts = urlsplit(path)
        segs = [unquote(s) for s in parts.path.split("/") if s]
        if segs == ["health"]:
            return 200, {"status": "ok"}
        if segs == ["cameras"]:
            store.refresh()
            ids = sorted(set(store.cameras()) | set(store.stability_cameras()))
            out = []
            for cam in ids:
                st = store.get_stability(cam)
                out.append({"camera_id": cam, "state": st.get("state") if st else None})
            return 200, out
        if len(segs) == 3 and segs[0] == "cameras":
            cam, what = segs[1], segs[2]
            store.refresh()
            if not _known(store, cam):
                raise _HttpError(404, f"unknown camera {cam!r}")
            if what == "metrics":
                q = parse_qs(parts.query, keep_blank_values=True)
                bounds = []
                for key in ("from", "to"):
                    vals = q.get(key)
                    if vals is None:
                        bounds.append(None)
                    elif len(vals) != 1 or not vals[0]:
                        raise _HttpError(400, f"malformed '{key}' bound")
                    else:
                        bounds.append(vals[0])
                try:
                    return 200, store.query(cam, *bounds)
                except ValueError as exc:
                    raise _HttpError(400, str(exc)) from exc
            if what == "stability":
                st = store.get_stability(cam)
                if st is None:
                    raise _HttpError(404, f"no stability status for {cam!r}")
                return 200, st
        raise _HttpError(404, "not found")
    except _HttpError as exc:
        return exc.status, {"error": str(exc)}
    except Exception as exc:  # never let a request take the service down
        log.exception("request failed: %s", path)
        return 500, {"error": f"{type(exc).__name__}"}


class _Handler(BaseHTTPRequestHandler):
    store: MetricsStore = None

    def do_GET(self):
        status, payload = handle(self.store, self.path)
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _not_allowed(self):
        body = b'{"error": "method not allowed"}'
        self.send_response(405)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    do_POST = do_PUT = do_DELETE = do_PATCH = _not_allowed

    def log_message(self, fmt, *args):
        log.info("%s %s", self.address_string(), fmt % args)


def make_server(store: MetricsStore, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    handler = type("Handler", (_Handler,), {"store": store})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def serve_metrics(store: MetricsStore, host: str = "127.0.0.1", port: int = 8080, background: bool = False):
    """Start the service; with ``background=True`` return the server running on a thread."""
    server = make_server(store, host, port)
    if background:
        threading.Thread(target=server.serve_forever, daemon=True).start()
        return server
    try:
        server.serve_forever()
    finally:
        server.server_close()
    return server
