"""Client for the CA service with a validated, TTL-bounded trust-list cache."""

from __future__ import annotations

import threading
import time
import urllib.error
import urllib.request
from pathlib import Path

from realseal import grammar
from realseal.crypto import Fingerprint
from realseal.errors import (
    AlreadyRegistered,
    InvalidTransition,
    NotFound,
    RealsealError,
    TrustSourceUnavailable,
    Unauthorized,
)
from realseal.trust import TrustList, validate_trust_list

DEFAULT_TTL = 300.0

_BY_NAME = {cls.__name__: cls for cls in
            (AlreadyRegistered, InvalidTransition, NotFound, Unauthorized)}


class TrustClient:
    def __init__(self, base_url: str, ca_root_public_key: bytes, ttl: float = DEFAULT_TTL,
                 timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.ca_root_public_key = ca_root_public_key
        self.ttl = ttl
        self.timeout = timeout
        self._cached: tuple[float, TrustList] | None = None
        self._refresh_lock = threading.Lock()

    def _request(self, method: str, path: str, fields=None, headers=None) -> tuple[int, bytes]:
        data = grammar.dumps(fields) if fields is not None else None
        req = urllib.request.Request(self.base_url + path, data=data, method=method,
                                     headers=headers or {})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.status, resp.read()
        except urllib.error.HTTPError as err:
            body = err.read()
            try:
                info = grammar.loads(body)
            except grammar.GrammarError:
                info = {}
            cls = _BY_NAME.get(info.get("error", ""), RealsealError)
            raise cls(info.get("detail", f"HTTP {err.code}")) from None
        except (urllib.error.URLError, OSError) as err:
            raise TrustSourceUnavailable(f"{self.base_url}: {err}") from None

    def health(self) -> bool:
        status, body = self._request("GET", "/v1/healthz")
        return status == 200 and body == b"ok"

    def register(self, name: str, public_key: bytes) -> Fingerprint:
        _, body = self._request("POST", "/v1/manufacturers",
                                {"name": name, "public_key": public_key.hex()})
        return Fingerprint.from_hex(grammar.loads(body)["fingerprint"])

    def approve(self, fp: Fingerprint, admin_token: str) -> int:
        _, body = self._request("POST", f"/v1/manufacturers/{fp.hex}/approve", {},
                                {"X-Admin-Token": admin_token})
        return int(grammar.loads(body)["list_version"])

    def revoke(self, fp: Fingerprint, admin_token: str, reason: str = "") -> int:
        _, body = self._request("POST", f"/v1/manufacturers/{fp.hex}/revoke",
                                {"reason": reason}, {"X-Admin-Token": admin_token})
        return int(grammar.loads(body)["list_version"])

    def fetch_bytes(self) -> bytes:
        return self._request("GET", "/v1/trustlist")[1]

    def fetch(self) -> TrustList:
        """Download and validate the list, bypassing the cache."""
        return validate_trust_list(self.fetch_bytes(), self.ca_root_public_key)

    def trust_list(self, now: float | None = None) -> TrustList:
        """Cached list, refreshed once older than ``ttl`` seconds."""
        now = time.monotonic() if now is None else now
        cached = self._cached
        if cached is not None and now - cached[0] < self.ttl:
            return cached[1]
        with self._refresh_lock:
            cached = self._cached
            if cached is not None and now - cached[0] < self.ttl:
                return cached[1]
            tl = self.fetch()
            self._cached = (now, tl)
            return tl


def load_trust_list_file(path: str | Path, ca_root_public_key: bytes) -> TrustList:
    return validate_trust_list(Path(path).read_bytes(), ca_root_public_key)
