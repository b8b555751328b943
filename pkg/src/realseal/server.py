"""HTTP front end for :class:`~realseal.trust.TrustAuthority`.

Routes::

    POST /v1/manufacturers                      name, public_key  -> 201 | 409
    POST /v1/manufacturers/{fp}/approve         X-Admin-Token     -> 200 | 401 | 404 | 409
    POST /v1/manufacturers/{fp}/revoke          X-Admin-Token     -> 200 | 401 | 404 | 409
    GET  /v1/trustlist                                             -> 200 signed list
    GET  /v1/healthz                                               -> 200 ok

Request and response bodies use the canonical key=value grammar.
"""

from __future__ import annotations

import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from realseal import grammar
from realseal.crypto import Fingerprint
from realseal.errors import (
    AlreadyRegistered,
    InvalidKey,
    InvalidTransition,
    NotFound,
    Unauthorized,
)
from realseal.trust import TrustAuthority

log = logging.getLogger(__name__)

_ACTION_RE = re.compile(r"^/v1/manufacturers/([0-9a-f]{32})/(approve|revoke)$")
_STATUS = {
    AlreadyRegistered: 409,
    InvalidTransition: 409,
    Unauthorized: 401,
    NotFound: 404,
}
MAX_BODY = 64 * 1024


class TrustHandler(BaseHTTPRequestHandler):
    authority: TrustAuthority  # set on the per-server subclass
    server_version = "realseal-ca/1"

    def log_message(self, fmt, *args):
        log.info("%s %s", self.address_string(), fmt % args)

    def _send(self, status: int, body: bytes, content_type="text/plain; charset=utf-8"):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, exc: Exception | str):
        name = type(exc).__name__ if isinstance(exc, Exception) else "Error"
        self._send(status, grammar.dumps({"error": name, "detail": str(exc)}))

    def _body(self) -> dict[str, str]:
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY:
            raise ValueError("request body too large")
        raw = self.rfile.read(length) if length else b""
        return grammar.loads(raw, strict=False) if raw.strip() else {}

    def do_GET(self):
        if self.path == "/v1/healthz":
            self._send(200, b"ok")
        elif self.path == "/v1/trustlist":
            self._send(200, self.authority.get_trust_list_bytes())
        else:
            self._error(404, "no such route")

    def do_POST(self):
        try:
            body = self._body()
        except (ValueError, grammar.GrammarError) as exc:
            return self._error(400, exc)
        try:
            if self.path == "/v1/manufacturers":
                record = self.authority.register_manufacturer(
                    body.get("name", ""), bytes.fromhex(body.get("public_key", ""))
                )
                return self._send(201, grammar.dumps(
                    {"fingerprint": record.fingerprint.hex, "status": record.status.value}
                ))
            match = _ACTION_RE.match(self.path)
            if not match:
                return self._error(404, "no such route")
            fp = Fingerprint.from_hex(match.group(1))
            token = self.headers.get("X-Admin-Token")
            if match.group(2) == "approve":
                tl = self.authority.approve(fp, token)
            else:
                tl = self.authority.revoke(fp, token, body.get("reason", ""))
            self._send(200, grammar.dumps({"list_version": tl.list_version}))
        except tuple(_STATUS) as exc:
            self._error(_STATUS[type(exc)], exc)
        except (InvalidKey, ValueError) as exc:
            self._error(400, exc)


def make_server(authority: TrustAuthority, host: str = "127.0.0.1", port: int = 0
                ) -> ThreadingHTTPServer:
    handler = type("BoundTrustHandler", (TrustHandler,), {"authority": authority})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


class BackgroundServer:
    """Run a CA server on a daemon thread; usable as a context manager."""

    def __init__(self, authority: TrustAuthority, host: str = "127.0.0.1", port: int = 0):
        self.server = make_server(authority, host, port)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "BackgroundServer":
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)
