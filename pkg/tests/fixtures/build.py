"""Rebuild the golden ``.real`` fixtures.

    python tests/fixtures/build.py

Everything is seeded and Ed25519 is deterministic, so rerunning produces
identical bytes; test_container checks that.
"""

from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

from realseal.container import write_container
from realseal.crypto import (
    ProvenanceManifest,
    SceneLabel,
    content_hash,
    dump_key,
    generate_keypair,
    sign_manifest,
)
from realseal.trust import TrustAuthority

HERE = Path(__file__).parent
WHEN = datetime(2024, 2, 20, 12, 34, 56, tzinfo=timezone.utc)

CA = generate_keypair(bytes([0xCA]) * 32)
TRUSTED = generate_keypair(bytes(32))
REVOKED = generate_keypair(bytes([1]) * 32)
STRANGER = generate_keypair(bytes([2]) * 32)
PAYLOAD = b"\x89PNG fixture payload"


def authority() -> TrustAuthority:
    ca = TrustAuthority(CA, admin_token="fixture-token", clock=lambda: WHEN)
    for name, kp in (("Trusted Optics", TRUSTED), ("Leaky Sensors", REVOKED)):
        ca.register_manufacturer(name, kp.public_key)
        ca.approve(kp.fingerprint, "fixture-token")
    ca.revoke(REVOKED.fingerprint, "fixture-token", "key leaked")
    return ca


def sealed(kp, payload=PAYLOAD, label=SceneLabel.LABEL_3D) -> bytes:
    m = ProvenanceManifest(kp.fingerprint, content_hash(payload), "png", label, WHEN, "cam-0001")
    return write_container(payload, "png", m, sign_manifest(m, kp.private_key))


def fixtures() -> dict[str, bytes]:
    valid = sealed(TRUSTED)
    tampered = bytearray(valid)
    tampered[18] ^= 0x01  # first payload byte
    malformed = bytearray(valid)
    malformed[0] = ord("X")
    return {
        "verified.png.real": valid,
        "tampered.png.real": bytes(tampered),
        "malformed.png.real": bytes(malformed),
        "untrusted.png.real": sealed(STRANGER),
        "revoked.png.real": sealed(REVOKED),
        "trustlist.txt": authority().get_trust_list_bytes(),
        "ca.pub": dump_key(CA.public_key, "public").encode(),
        "signer.key": dump_key(TRUSTED.private_key, "private").encode(),
        "signer.pub": dump_key(TRUSTED.public_key, "public").encode(),
    }


if __name__ == "__main__":
    for name, data in fixtures().items():
        (HERE / name).write_bytes(data)
        print(f"wrote {name} ({len(data)} bytes)")
