"""Non-interactive proof that log_G(X) == log_H(Y) over secp256k1.

The challenge hashes the 32-byte big-endian x-coordinate of KY followed by
that of KX, matching the argument order of the on-chain verifier, and is
reduced modulo the group order.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass

from . import group
from .group import ORDER, Point


class NizkError(ValueError):
    pass


@dataclass(frozen=True)
class EqualityProof:
    KX: Point
    KY: Point
    s: int

    def to_hex(self) -> tuple[str, str, str]:
        return self.KX.to_bytes().hex(), self.KY.to_bytes().hex(), f"{self.s:064x}"


def challenge_input(KX: Point, KY: Point) -> bytes:
    return KY.x_bytes() + KX.x_bytes()


def challenge(KX: Point, KY: Point) -> int:
    return int.from_bytes(hashlib.sha256(challenge_input(KX, KY)).digest(), "big") % ORDER


def nizk_prove(x: int, G: Point, H: Point, rng=None, k: int | None = None) -> EqualityProof:
    """Prove knowledge of ``x`` with X = x*G and Y = x*H.

    ``k`` pins the commitment scalar for reproducible test vectors; otherwise it
    is drawn from ``rng`` (or the OS when ``rng`` is None).
    """
    x %= ORDER
    if x == 0:
        raise NizkError("x = 0 gives the identity point, not a valid public key")
    if not (group.is_pubkey(G) and group.is_pubkey(H)):
        raise NizkError("bases must be non-identity curve points")
    if k is None:
        rng = rng or secrets.SystemRandom()
        k = rng.randrange(1, ORDER)
    k %= ORDER
    if k == 0:
        raise NizkError("commitment scalar must be non-zero")
    KX = group.mul(k, G)
    KY = group.mul(k, H)
    c = challenge(KX, KY)
    return EqualityProof(KX, KY, (k + c * x) % ORDER)


def _verify_half(base: Point, pub, K, s: int, c: int) -> bool:
    if not group.is_pubkey(pub) or not group.is_pubkey(K):
        return False
    return group.mul(s, base) == group.add(K, group.mul(c, pub))


def nizk_verify(G, H, X, Y, KX, KY, s) -> bool:
    try:
        if not (group.is_pubkey(G) and group.is_pubkey(H)):
            return False
        if not (group.is_pubkey(KX) and group.is_pubkey(KY)):
            return False
        if not isinstance(s, int) or not 0 <= s < ORDER:
            return False
        c = challenge(KX, KY)
        return _verify_half(G, X, KX, s, c) and _verify_half(H, Y, KY, s, c)
    except (TypeError, ValueError, AttributeError):
        return False


def verify_proof(G: Point, H: Point, X: Point, Y: Point, proof: EqualityProof) -> bool:
    return nizk_verify(G, H, X, Y, proof.KX, proof.KY, proof.s)
