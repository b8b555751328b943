"""The central authority: manufacturer registration, vetting, revocation,
and the CA-signed trust list.

State is an append-only JSON-lines operation log; replaying it rebuilds the
authority exactly, including the signed list bytes (Ed25519 is
deterministic and every timestamp comes from the log).
"""

from __future__ import annotations

import enum
import hmac
import json
import logging
import os
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from realseal import grammar
from realseal.crypto import (
    KEY_SIZE,
    Fingerprint,
    KeyPair,
    Signature,
    fingerprint,
    format_time,
    parse_time,
    sign_bytes,
    verify_signature,
)
from realseal.errors import (
    AlreadyRegistered,
    InvalidKey,
    InvalidTransition,
    NotFound,
    RejectedFormat,
    RejectedSignature,
    Unauthorized,
)

log = logging.getLogger(__name__)

SIGNATURE_KEY = "ca_signature"


class SignerStatus(enum.Enum):
    PENDING = "pending"
    ACTIVE = "active"
    REVOKED = "revoked"


_TRANSITIONS = {
    (SignerStatus.PENDING, SignerStatus.ACTIVE),
    (SignerStatus.ACTIVE, SignerStatus.REVOKED),
}


@dataclass(frozen=True)
class SignerRecord:
    fingerprint: Fingerprint
    public_key: bytes
    manufacturer_name: str
    status: SignerStatus
    registered_at: datetime
    status_changed_at: datetime

    def fields(self) -> dict[str, str]:
        return {
            "fingerprint": self.fingerprint.hex,
            "public_key": self.public_key.hex(),
            "manufacturer_name": self.manufacturer_name,
            "status": self.status.value,
            "registered_at": format_time(self.registered_at),
            "status_changed_at": format_time(self.status_changed_at),
        }

    def transition(self, status: SignerStatus, when: datetime) -> "SignerRecord":
        if (self.status, status) not in _TRANSITIONS:
            raise InvalidTransition(f"{self.status.value} -> {status.value} is not allowed")
        return replace(self, status=status, status_changed_at=max(when, self.status_changed_at))


@dataclass(frozen=True)
class TrustList:
    list_version: int
    issued_at: datetime
    entries: tuple[SignerRecord, ...]
    ca_signature: Signature | None = None

    def body(self) -> bytes:
        """Canonical bytes covered by the CA signature."""
        fields: dict[str, object] = {
            "list_version": self.list_version,
            "issued_at": format_time(self.issued_at),
            "entry_count": len(self.entries),
        }
        fields.update(grammar.flatten("entry", (e.fields() for e in self.entries)))
        return grammar.dumps(fields)

    def to_bytes(self) -> bytes:
        """Wire format: the body plus a ``ca_signature`` line, re-sorted."""
        if self.ca_signature is None:
            raise ValueError("trust list is unsigned")
        fields = grammar.loads(self.body())
        fields[SIGNATURE_KEY] = self.ca_signature.hex
        return grammar.dumps(fields)

    def signed(self, ca_private_key: bytes) -> "TrustList":
        return replace(self, ca_signature=sign_bytes(self.body(), ca_private_key))

    def signature_valid(self, ca_root_public_key: bytes) -> bool:
        return self.ca_signature is not None and verify_signature(
            self.body(), self.ca_signature, ca_root_public_key
        )

    def get(self, fp: Fingerprint) -> SignerRecord | None:
        for entry in self.entries:
            if entry.fingerprint == fp:
                return entry
        return None


def _split_signature(data: bytes) -> tuple[bytes, bytes]:
    marker = SIGNATURE_KEY.encode() + b"="
    lines = data.split(b"\n")
    if not data.endswith(b"\n"):
        raise RejectedFormat("missing trailing newline")
    lines = lines[:-1]
    hits = [i for i, line in enumerate(lines) if line.startswith(marker)]
    if len(hits) != 1:
        raise RejectedFormat("expected exactly one ca_signature line")
    raw = lines.pop(hits[0])[len(marker):]
    try:
        sig = bytes.fromhex(raw.decode("ascii"))
    except (UnicodeDecodeError, ValueError):
        raise RejectedSignature("ca_signature is not hex") from None
    body = b"".join(line + b"\n" for line in lines)
    return body, sig


def validate_trust_list(data: bytes, ca_root_public_key: bytes) -> TrustList:
    """Check the CA signature first, then the list's format and ordering."""
    body, sig = _split_signature(bytes(data))
    if len(sig) != 64 or not verify_signature(body, sig, ca_root_public_key):
        raise RejectedSignature("trust list signature does not verify under the CA root key")
    try:
        fields = grammar.loads(data, strict=True)
        fields.pop(SIGNATURE_KEY)
        base = {"list_version", "issued_at", "entry_count"}
        if any(k not in base and not k.startswith("entry.") for k in fields):
            raise RejectedFormat("unexpected keys in trust list")
        version = int(fields["list_version"])
        issued_at = parse_time(fields["issued_at"])
        entries = []
        for item in grammar.indexed(fields, "entry"):
            public_key = bytes.fromhex(item["public_key"])
            record = SignerRecord(
                fingerprint=Fingerprint.from_hex(item["fingerprint"]),
                public_key=public_key,
                manufacturer_name=item["manufacturer_name"],
                status=SignerStatus(item["status"]),
                registered_at=parse_time(item["registered_at"]),
                status_changed_at=parse_time(item["status_changed_at"]),
            )
            if set(item) != set(record.fields()):
                raise RejectedFormat("entry has unexpected fields")
            if len(public_key) != KEY_SIZE or fingerprint(public_key) != record.fingerprint:
                raise RejectedFormat("entry fingerprint does not match its key")
            entries.append(record)
        if int(fields["entry_count"]) != len(entries):
            raise RejectedFormat("entry_count disagrees with entries")
    except RejectedFormat:
        raise
    except (grammar.GrammarError, KeyError, ValueError) as exc:
        raise RejectedFormat(str(exc)) from None

    if version <= 0:
        raise RejectedFormat("list_version must be positive")
    hexes = [e.fingerprint.hex for e in entries]
    if hexes != sorted(hexes) or len(set(hexes)) != len(hexes):
        raise RejectedFormat("entries are not sorted by fingerprint")
    if any(e.status is SignerStatus.PENDING for e in entries):
        raise RejectedFormat("pending records must not be listed")
    trust_list = TrustList(version, issued_at, tuple(entries), Signature(sig))
    if trust_list.to_bytes() != bytes(data):
        raise RejectedFormat("trust list is not in canonical form")
    return trust_list


class TrustState(enum.Enum):
    ACTIVE = "active"
    REVOKED = "revoked"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class TrustLookup:
    state: TrustState
    public_key: bytes | None = None
    manufacturer_name: str = ""


def is_trusted(fp: Fingerprint, trust_list: TrustList | None) -> TrustLookup:
    record = trust_list.get(fp) if trust_list is not None else None
    if record is None:
        return TrustLookup(TrustState.UNKNOWN)
    state = TrustState.ACTIVE if record.status is SignerStatus.ACTIVE else TrustState.REVOKED
    return TrustLookup(state, record.public_key, record.manufacturer_name)


def _utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


@dataclass
class TrustAuthority:
    """In-process CA. Mutations are serialized; reads see a published snapshot.

    ``clock`` returns the timestamp recorded for each operation.
    """

    ca_keypair: KeyPair
    admin_token: str
    log_path: Path | None = None
    clock: Callable[[], datetime] = _utcnow
    genesis: datetime | None = None

    _records: dict[Fingerprint, SignerRecord] = field(default_factory=dict, init=False)
    _history: list[dict] = field(default_factory=list, init=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False)
    _published: tuple[TrustList, bytes] | None = field(default=None, init=False)

    def __post_init__(self):
        if self.log_path is not None:
            self.log_path = Path(self.log_path)
        ops = self._read_log()
        if ops and ops[0]["op"] == "genesis":
            self.genesis = parse_time(ops[0]["at"])
        else:
            self.genesis = (self.genesis or self.clock()).replace(microsecond=0)
            ops.insert(0, {"op": "genesis", "at": format_time(self.genesis)})
            self._append(ops[0])
        self._version = 0
        self._issued_at = self.genesis
        for op in ops[1:]:
            self._apply(op)
            self._history.append(op)
        self._publish()
        log.info("trust authority ready at list_version %d", self._version)

    # -- log ---------------------------------------------------------------
    def _read_log(self) -> list[dict]:
        if self.log_path is None or not self.log_path.exists():
            return []
        with self.log_path.open() as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def _append(self, op: dict) -> None:
        if self.log_path is None:
            return
        with self.log_path.open("a") as fh:
            fh.write(json.dumps(op, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _apply(self, op: dict) -> None:
        at = parse_time(op["at"])
        fp = Fingerprint.from_hex(op["fingerprint"])
        if op["op"] == "register":
            self._records[fp] = SignerRecord(fp, bytes.fromhex(op["public_key"]), op["name"],
                                             SignerStatus.PENDING, at, at)
            return
        target = {"approve": SignerStatus.ACTIVE, "revoke": SignerStatus.REVOKED}[op["op"]]
        self._records[fp] = self._records[fp].transition(target, at)
        self._version += 1
        self._issued_at = max(at, self._issued_at)

    def _commit(self, op: dict) -> None:
        self._apply(op)
        self._append(op)
        self._history.append(op)

    def _publish(self) -> None:
        entries = sorted(
            (r for r in self._records.values() if r.status is not SignerStatus.PENDING),
            key=lambda r: r.fingerprint.hex,
        )
        tl = TrustList(self._version, self._issued_at, tuple(entries)).signed(
            self.ca_keypair.private_key
        )
        # single reference assignment: readers see old or new, never a mix
        self._published = (tl, tl.to_bytes())

    # -- operations ----------------------------------------------------------
    @property
    def ca_public_key(self) -> bytes:
        return self.ca_keypair.public_key

    @property
    def history(self) -> list[dict]:
        return list(self._history)

    def record(self, fp: Fingerprint) -> SignerRecord:
        try:
            return self._records[fp]
        except KeyError:
            raise NotFound(f"no manufacturer with fingerprint {fp.hex}") from None

    def register_manufacturer(self, name: str, public_key: bytes) -> SignerRecord:
        if not name or len(name.encode("utf-8")) > 128:
            raise ValueError("manufacturer name must be 1-128 UTF-8 bytes")
        if len(public_key) != KEY_SIZE:
            raise InvalidKey("public key must be 32 bytes")
        fp = fingerprint(public_key)
        with self._lock:
            if fp in self._records:
                raise AlreadyRegistered(f"fingerprint {fp.hex} is already registered")
            self._commit({"op": "register", "at": format_time(self.clock()),
                          "fingerprint": fp.hex, "public_key": public_key.hex(), "name": name})
            return self._records[fp]

    def _check_token(self, credential: str | None) -> None:
        if credential is None or not hmac.compare_digest(
            credential.encode("utf-8"), self.admin_token.encode("utf-8")
        ):
            raise Unauthorized("bad admin credential")

    def _transition(self, op: str, fp: Fingerprint, credential, extra=None) -> TrustList:
        self._check_token(credential)
        with self._lock:
            record = self.record(fp)
            target = SignerStatus.ACTIVE if op == "approve" else SignerStatus.REVOKED
            at = self.clock()
            record.transition(target, at)  # raises before anything is logged
            entry = {"op": op, "at": format_time(at), "fingerprint": fp.hex}
            entry.update(extra or {})
            self._commit(entry)
            self._publish()
            return self._published[0]

    def approve(self, fp: Fingerprint, admin_credential: str | None) -> TrustList:
        return self._transition("approve", fp, admin_credential)

    def revoke(self, fp: Fingerprint, admin_credential: str | None, reason: str = "") -> TrustList:
        return self._transition("revoke", fp, admin_credential, {"reason": reason})

    def get_trust_list(self) -> TrustList:
        return self._published[0]

    def get_trust_list_bytes(self) -> bytes:
        return self._published[1]


def load_or_create_ca_key(path: str | Path) -> KeyPair:
    """Read the CA root private key, generating it on first use."""
    from realseal.crypto import generate_keypair, read_private_key, write_keypair

    path = Path(path)
    if path.exists():
        return read_private_key(path)
    keypair = generate_keypair()
    prefix = path.with_name(path.name[:-4] if path.name.endswith(".key") else path.name)
    private_path, _ = write_keypair(keypair, prefix)
    if private_path != path:
        os.replace(private_path, path)
    log.info("generated CA root key at %s", path)
    return keypair
