"""Reader, writer and verifier for ``.real`` capture containers.

Layout, little-endian::

    magic "REAL"       4
    version 0x01       1
    scene_label        1   0x02 = 2D, 0x03 = 3D
    inner_ext_len      1
    inner_ext          inner_ext_len ASCII bytes
    payload_len        8
    payload            payload_len
    manifest_len       4
    manifest           manifest_len (canonical manifest text)
    signature_len      2
    signature          signature_len
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

from realseal.crypto import (
    SIGNATURE_SIZE,
    Fingerprint,
    ProvenanceManifest,
    SceneLabel,
    Signature,
    canonicalize_manifest,
    content_hash,
    parse_manifest,
    verify_signature,
)
from realseal.errors import (
    InvalidManifest,
    Malformed,
    RefusedInconsistent,
    RefusedMandatoryField,
    RefusedUnverified,
)

log = logging.getLogger(__name__)

MAGIC = b"REAL"
VERSION = 1
SUFFIX = ".real"

_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class Verdict(enum.Enum):
    VERIFIED = "Verified"
    MALFORMED = "Malformed"
    TAMPERED = "Tampered"
    UNTRUSTED_SIGNER = "UntrustedSigner"
    REVOKED_SIGNER = "RevokedSigner"


@dataclass(frozen=True)
class RealContainer:
    version: int
    scene_label: SceneLabel
    inner_format: str
    payload: bytes
    manifest_bytes: bytes
    signature: bytes

    @property
    def manifest(self) -> ProvenanceManifest:
        return parse_manifest(self.manifest_bytes)


@dataclass(frozen=True)
class VerificationReport:
    verdict: Verdict
    signer_fingerprint: Fingerprint | None = None
    scene_label: SceneLabel | None = None
    detail: str = ""

    @property
    def verified(self) -> bool:
        return self.verdict is Verdict.VERIFIED

    def fields(self) -> dict[str, str]:
        return {
            "verdict": self.verdict.value,
            "signer_fingerprint": self.signer_fingerprint.hex if self.signer_fingerprint else "",
            "scene_label": self.scene_label.value if self.scene_label else "",
            "detail": self.detail,
        }


def write_container(payload: bytes, inner_format: str, manifest: ProvenanceManifest,
                    signature) -> bytes:
    """Serialize a container. Refuses (raises) instead of emitting bad files."""
    try:
        manifest_bytes = canonicalize_manifest(manifest)
    except InvalidManifest as exc:
        raise RefusedMandatoryField(str(exc)) from exc
    sig = signature.bytes if isinstance(signature, Signature) else bytes(signature or b"")
    if len(sig) != SIGNATURE_SIZE:
        raise RefusedMandatoryField("signature must be 64 bytes")
    if inner_format != manifest.inner_format:
        raise RefusedMandatoryField(
            f"inner_format {inner_format!r} disagrees with manifest {manifest.inner_format!r}"
        )
    if content_hash(payload) != manifest.content_hash:
        raise RefusedInconsistent("manifest content_hash does not match the payload")

    ext = inner_format.encode("ascii")
    return b"".join([
        MAGIC,
        _U8.pack(VERSION),
        _U8.pack(manifest.scene_label.code),
        _U8.pack(len(ext)),
        ext,
        _U64.pack(len(payload)),
        payload,
        _U32.pack(len(manifest_bytes)),
        manifest_bytes,
        _U16.pack(len(sig)),
        sig,
    ])


class _Cursor:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n > len(self.data) - self.pos:
            raise Malformed("truncated", f"need {n} bytes at offset {self.pos}")
        out = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return out

    def unpack(self, fmt: struct.Struct) -> int:
        return fmt.unpack(self.take(fmt.size))[0]


def read_container(data: bytes) -> RealContainer:
    """Structural parse. No hash, signature, or trust checks happen here."""
    cur = _Cursor(data)
    if len(data) < len(MAGIC):
        if MAGIC.startswith(bytes(data)):
            raise Malformed("truncated", "shorter than magic")
        raise Malformed("magic")
    if cur.take(4) != MAGIC:
        raise Malformed("magic")
    version = cur.unpack(_U8)
    if version != VERSION:
        raise Malformed("version", f"unsupported version {version}")
    label_code = cur.unpack(_U8)
    if label_code not in (0x02, 0x03):
        raise Malformed("scene-label", f"unknown label byte {label_code:#04x}")
    scene_label = SceneLabel.from_code(label_code)
    ext_len = cur.unpack(_U8)
    ext_raw = cur.take(ext_len)
    payload = cur.take(cur.unpack(_U64))
    manifest_bytes = cur.take(cur.unpack(_U32))
    sig_len = cur.unpack(_U16)
    signature = cur.take(sig_len)
    if cur.pos != len(data):
        raise Malformed("trailing", f"{len(data) - cur.pos} bytes after signature")

    try:
        inner_format = ext_raw.decode("ascii")
    except UnicodeDecodeError:
        raise Malformed("inner-format", "extension is not ASCII") from None
    try:
        manifest = parse_manifest(manifest_bytes)
    except InvalidManifest as exc:
        raise Malformed("manifest", str(exc)) from None
    if manifest.scene_label is not scene_label:
        raise Malformed("label-mismatch")
    if manifest.inner_format != inner_format:
        raise Malformed("format-mismatch")
    if sig_len != SIGNATURE_SIZE:
        raise Malformed("signature-length", f"{sig_len} != {SIGNATURE_SIZE}")
    return RealContainer(version, scene_label, inner_format, payload, manifest_bytes, signature)


def verify_container(container: RealContainer | bytes, trust_list, ca_root_public_key=None
                     ) -> VerificationReport:
    """Run the verification checks in their fixed order.

    1. structure, 2. payload hash, 3. signature under the listed key,
    4. signer listed, 5. signer active. The first failure decides the verdict.
    A signer absent from the list has no key to check against, so step 3
    is only reachable for listed signers.

    ``trust_list`` must already be validated; if ``ca_root_public_key`` is
    also given, the list's CA signature is re-checked and a bad list makes
    every signer untrusted.
    """
    from realseal.trust import TrustState, is_trusted

    if isinstance(container, (bytes, bytearray, memoryview)):
        try:
            container = read_container(bytes(container))
        except Malformed as exc:
            return VerificationReport(Verdict.MALFORMED, detail=str(exc))
    try:
        manifest = container.manifest
        if manifest.scene_label is not container.scene_label:
            raise Malformed("label-mismatch")
        if manifest.inner_format != container.inner_format:
            raise Malformed("format-mismatch")
        if canonicalize_manifest(manifest) != container.manifest_bytes:
            raise Malformed("manifest", "not canonical")
    except (Malformed, InvalidManifest) as exc:
        return VerificationReport(Verdict.MALFORMED, detail=str(exc))

    signer = manifest.signer_fingerprint
    label = manifest.scene_label

    def report(verdict, detail):
        return VerificationReport(verdict, signer, label, detail)

    if content_hash(container.payload) != manifest.content_hash:
        return report(Verdict.TAMPERED, "payload hash differs from manifest content_hash")

    lookup = is_trusted(signer, trust_list)
    if ca_root_public_key is not None and not trust_list.signature_valid(ca_root_public_key):
        lookup = is_trusted(signer, None)
    if lookup.state is not TrustState.UNKNOWN:
        if not verify_signature(container.manifest_bytes, container.signature, lookup.public_key):
            return report(Verdict.TAMPERED, "signature does not verify under the listed key")
    if lookup.state is TrustState.UNKNOWN:
        return report(Verdict.UNTRUSTED_SIGNER, f"signer {signer.hex} is not on the trust list")
    if lookup.state is TrustState.REVOKED:
        return report(Verdict.REVOKED_SIGNER, f"signer {signer.hex} has been revoked")
    return report(Verdict.VERIFIED, f"signed by {lookup.manufacturer_name}")


@dataclass(frozen=True)
class UnwrapResult:
    path: Path
    warning: str = ""


def unwrap(container: RealContainer, destination: str | Path, report: VerificationReport,
           override: bool = False) -> UnwrapResult:
    """Write the payload out under its inner extension.

    Refuses anything that did not verify unless ``override`` is set, in
    which case the file is written and the result carries a warning.
    """
    warning = ""
    if report.verdict is not Verdict.VERIFIED:
        if not override:
            raise RefusedUnverified(f"container verdict is {report.verdict.value}")
        warning = f"payload extracted from a {report.verdict.value} container"
        log.warning(warning)
    path = Path(destination)
    suffix = "." + container.inner_format
    if path.name.endswith(SUFFIX):
        path = path.with_name(path.name[: -len(SUFFIX)])
    if not path.name.endswith(suffix):
        path = path.with_name(path.name + suffix)
    path.write_bytes(container.payload)
    return UnwrapResult(path, warning)


def real_name(name: str, inner_format: str) -> str:
    """``photo`` or ``photo.png`` -> ``photo.png.real``."""
    if name.endswith(SUFFIX):
        return name
    if not name.endswith("." + inner_format):
        name = f"{name}.{inner_format}"
    return name + SUFFIX
