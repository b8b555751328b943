"""Keys, hashing, manifest canonicalization and Ed25519 signing."""

from __future__ import annotations

import enum
import hashlib
import os
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from realseal import grammar
from realseal.errors import InvalidKey, InvalidManifest, InvalidSeed

KEY_SIZE = 32
SIGNATURE_SIZE = 64
FINGERPRINT_SIZE = 16
CLAIM_VERSION = 1
KEY_ENVELOPE = "realseal-key-v1"

_INNER_FORMAT_RE = re.compile(r"^[a-z0-9]{1,16}$")
_HEX64_RE = re.compile(r"^[0-9a-f]{64}$")
_HEX32_RE = re.compile(r"^[0-9a-f]{32}$")
_TIME_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
_TIME_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$")


class SceneLabel(enum.Enum):
    LABEL_2D = "2D"
    LABEL_3D = "3D"

    @property
    def code(self) -> int:
        return 0x02 if self is SceneLabel.LABEL_2D else 0x03

    @classmethod
    def from_code(cls, code: int) -> "SceneLabel":
        return {0x02: cls.LABEL_2D, 0x03: cls.LABEL_3D}[code]

    @classmethod
    def parse(cls, text: str) -> "SceneLabel":
        return cls(text.upper())


@dataclass(frozen=True)
class Digest:
    bytes: bytes

    def __post_init__(self):
        if len(self.bytes) != 32:
            raise ValueError("digest must be 32 bytes")

    @property
    def hex(self) -> str:
        return self.bytes.hex()

    @classmethod
    def from_hex(cls, text: str) -> "Digest":
        if not _HEX64_RE.match(text):
            raise ValueError(f"not a lowercase 64-char hex digest: {text!r}")
        return cls(bytes.fromhex(text))


@dataclass(frozen=True)
class Fingerprint:
    value: bytes

    def __post_init__(self):
        if len(self.value) != FINGERPRINT_SIZE:
            raise ValueError("fingerprint must be 16 bytes")

    @property
    def hex(self) -> str:
        return self.value.hex()

    @classmethod
    def from_hex(cls, text: str) -> "Fingerprint":
        if not _HEX32_RE.match(text):
            raise ValueError(f"not a lowercase 32-char hex fingerprint: {text!r}")
        return cls(bytes.fromhex(text))

    def __str__(self) -> str:
        return self.hex


@dataclass(frozen=True)
class Signature:
    bytes: bytes

    def __post_init__(self):
        if len(self.bytes) != SIGNATURE_SIZE:
            raise ValueError("signature must be 64 bytes")

    @property
    def hex(self) -> str:
        return self.bytes.hex()


@dataclass(frozen=True)
class KeyPair:
    private_key: bytes
    public_key: bytes

    def __repr__(self) -> str:
        return f"KeyPair(public_key={self.public_key.hex()})"

    @property
    def fingerprint(self) -> Fingerprint:
        return fingerprint(self.public_key)


class Ed25519Scheme:
    """Deterministic 32-byte key / 64-byte signature scheme."""

    name = "ed25519"

    @staticmethod
    def derive_public(private_key: bytes) -> bytes:
        sk = _load_private(private_key)
        return sk.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )

    @staticmethod
    def sign(message: bytes, private_key: bytes) -> bytes:
        return _load_private(private_key).sign(message)

    @staticmethod
    def verify(message: bytes, signature: bytes, public_key: bytes) -> bool:
        if len(signature) != SIGNATURE_SIZE or len(public_key) != KEY_SIZE:
            return False
        try:
            Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True


SCHEME = Ed25519Scheme


def _load_private(private_key: bytes) -> Ed25519PrivateKey:
    if not isinstance(private_key, (bytes, bytearray)) or len(private_key) != KEY_SIZE:
        raise InvalidKey("private key must be 32 bytes")
    return Ed25519PrivateKey.from_private_bytes(bytes(private_key))


def generate_keypair(seed: bytes | None = None) -> KeyPair:
    """Make a signing keypair, deterministic when ``seed`` (32 bytes) is given."""
    if seed is None:
        seed = os.urandom(KEY_SIZE)
    elif not isinstance(seed, (bytes, bytearray)) or len(seed) != KEY_SIZE:
        raise InvalidSeed(f"seed must be exactly {KEY_SIZE} bytes")
    seed = bytes(seed)
    return KeyPair(private_key=seed, public_key=SCHEME.derive_public(seed))


def content_hash(payload: bytes) -> Digest:
    return Digest(hashlib.sha256(payload).digest())


def fingerprint(public_key: bytes) -> Fingerprint:
    return Fingerprint(content_hash(bytes(public_key)).bytes[:FINGERPRINT_SIZE])


def format_time(moment: datetime) -> str:
    if moment.tzinfo is None:
        raise ValueError("capture_time must be timezone-aware")
    return moment.astimezone(timezone.utc).strftime(_TIME_FORMAT)


def parse_time(text: str) -> datetime:
    if not _TIME_RE.match(text):
        raise ValueError(f"bad timestamp {text!r}")
    return datetime.strptime(text, _TIME_FORMAT).replace(tzinfo=timezone.utc)


@dataclass(frozen=True)
class ProvenanceManifest:
    signer_fingerprint: Fingerprint
    content_hash: Digest
    inner_format: str
    scene_label: SceneLabel
    capture_time: datetime
    device_id: str
    claim_version: int = CLAIM_VERSION

    def validate(self) -> "ProvenanceManifest":
        if self.claim_version != CLAIM_VERSION:
            raise InvalidManifest(f"unsupported claim_version {self.claim_version!r}")
        if not isinstance(self.signer_fingerprint, Fingerprint):
            raise InvalidManifest("signer_fingerprint missing")
        if not isinstance(self.content_hash, Digest):
            raise InvalidManifest("content_hash missing")
        if not isinstance(self.inner_format, str) or not _INNER_FORMAT_RE.match(self.inner_format):
            raise InvalidManifest(f"inner_format must match [a-z0-9]{{1,16}}: {self.inner_format!r}")
        if not isinstance(self.scene_label, SceneLabel):
            raise InvalidManifest("scene_label missing")
        if not isinstance(self.capture_time, datetime) or self.capture_time.tzinfo is None:
            raise InvalidManifest("capture_time must be an aware datetime")
        if self.capture_time.microsecond:
            raise InvalidManifest("capture_time must have second resolution")
        if not isinstance(self.device_id, str) or len(self.device_id.encode("utf-8")) > 64:
            raise InvalidManifest("device_id must be a string of at most 64 UTF-8 bytes")
        return self

    def fields(self) -> dict[str, str]:
        return {
            "claim_version": str(self.claim_version),
            "capture_time": format_time(self.capture_time),
            "content_hash": self.content_hash.hex,
            "device_id": self.device_id,
            "inner_format": self.inner_format,
            "scene_label": self.scene_label.value,
            "signer_fingerprint": self.signer_fingerprint.hex,
        }


MANIFEST_KEYS = frozenset(
    ["claim_version", "capture_time", "content_hash", "device_id",
     "inner_format", "scene_label", "signer_fingerprint"]
)


def canonicalize_manifest(manifest: ProvenanceManifest) -> bytes:
    """The exact bytes that get signed for ``manifest``."""
    manifest.validate()
    return grammar.dumps(manifest.fields())


def parse_manifest(data: bytes) -> ProvenanceManifest:
    """Inverse of :func:`canonicalize_manifest`; rejects non-canonical input."""
    try:
        fields = grammar.loads(data, strict=True)
    except grammar.GrammarError as exc:
        raise InvalidManifest(str(exc)) from exc
    if set(fields) != MANIFEST_KEYS:
        raise InvalidManifest(f"manifest keys {sorted(fields)} differ from the required set")
    version = fields["claim_version"]
    if not version.isdigit() or str(int(version)) != version:
        raise InvalidManifest(f"bad claim_version {version!r}")
    try:
        manifest = ProvenanceManifest(
            claim_version=int(version),
            signer_fingerprint=Fingerprint.from_hex(fields["signer_fingerprint"]),
            content_hash=Digest.from_hex(fields["content_hash"]),
            inner_format=fields["inner_format"],
            scene_label=SceneLabel(fields["scene_label"]),
            capture_time=parse_time(fields["capture_time"]),
            device_id=fields["device_id"],
        )
    except ValueError as exc:
        raise InvalidManifest(str(exc)) from exc
    return manifest.validate()


def sign_bytes(message: bytes, private_key: bytes) -> Signature:
    return Signature(SCHEME.sign(message, private_key))


def sign_manifest(manifest: ProvenanceManifest, private_key: bytes) -> Signature:
    return sign_bytes(canonicalize_manifest(manifest), private_key)


def verify_signature(message: bytes, signature: Signature | bytes, public_key: bytes) -> bool:
    """True iff ``signature`` is valid for exactly ``message`` under ``public_key``.

    Malformed lengths give False rather than raising.
    """
    raw = signature.bytes if isinstance(signature, Signature) else signature
    try:
        return SCHEME.verify(bytes(message), bytes(raw), bytes(public_key))
    except TypeError:
        return False


# key files: "realseal-key-v1:<role>\n<hex>\n"

def dump_key(key: bytes, role: str) -> str:
    if len(key) != KEY_SIZE:
        raise InvalidKey("key must be 32 bytes")
    return f"{KEY_ENVELOPE}:{role}\n{key.hex()}\n"


def load_key(text: str, role: str | None = None) -> bytes:
    lines = text.strip("\n").split("\n")
    if len(lines) != 2 or not lines[0].startswith(KEY_ENVELOPE + ":"):
        raise InvalidKey("not a realseal key file")
    found_role = lines[0].split(":", 1)[1]
    if role is not None and found_role != role:
        raise InvalidKey(f"expected a {role} key, found {found_role}")
    if not re.match(r"^[0-9a-f]{64}$", lines[1]):
        raise InvalidKey("key body must be 64 lowercase hex characters")
    return bytes.fromhex(lines[1])


def write_keypair(keypair: KeyPair, prefix: str | Path) -> tuple[Path, Path]:
    """Write ``<prefix>.key`` (mode 0600) and ``<prefix>.pub``."""
    prefix = Path(prefix)
    private_path = prefix.with_name(prefix.name + ".key")
    public_path = prefix.with_name(prefix.name + ".pub")
    fd = os.open(private_path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w") as fh:
        fh.write(dump_key(keypair.private_key, "private"))
    public_path.write_text(dump_key(keypair.public_key, "public"))
    return private_path, public_path


def read_private_key(path: str | Path) -> KeyPair:
    private = load_key(Path(path).read_text(), role="private")
    return generate_keypair(private)


def read_public_key(path: str | Path) -> bytes:
    return load_key(Path(path).read_text(), role="public")
