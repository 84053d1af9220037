"""Individual signatures (Ed25519, deterministic by construction)."""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

PublicKey = bytes
Signature = bytes


class MalformedKey(ValueError):
    """Malformed key material."""


@dataclass(frozen=True)
class SigKeyPair:
    seed: bytes
    pk: PublicKey

    @property
    def sk(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(self.seed)


def keygen(seed: bytes | None = None) -> SigKeyPair:
    if seed is None:
        seed = secrets.token_bytes(32)
    if len(seed) != 32:
        raise MalformedKey("signing seed must be 32 bytes")
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    pk = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return SigKeyPair(seed, pk)


def party_keys(n: int, label: bytes = b"statechan") -> list[SigKeyPair]:
    """Deterministic key pairs for parties 1..n (index 0 holds party 1)."""
    return [keygen(hashlib.sha256(label + b"/sig/" + str(j).encode()).digest())
            for j in range(1, n + 1)]


def sign(key: SigKeyPair, m: bytes) -> Signature:
    return key.sk.sign(m)


def verify(pk: PublicKey, m: bytes, sig: Signature) -> bool:
    if not isinstance(pk, (bytes, bytearray)) or len(pk) != 32:
        return False
    if not isinstance(sig, (bytes, bytearray)) or len(sig) != 64:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(bytes(pk)).verify(bytes(sig), m)
    except (InvalidSignature, ValueError):
        return False
    return True
