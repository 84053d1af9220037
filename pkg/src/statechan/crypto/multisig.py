"""Schnorr multisignatures for a fixed party set.

Keys are generated honestly inside a session, so the aggregate key is the plain
sum of the individual public keys. Rogue-key attacks are outside the threat
model. Signing runs three rounds (nonce commitment, nonce reveal, partial
signature); the simulator executes them as one joint call.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from typing import Optional, Sequence

from . import group
from .group import G, ORDER, Point


class MissingShare(ValueError):
    pass


class MultisigError(ValueError):
    pass


@dataclass(frozen=True)
class SigningShare:
    index: int
    secret: int
    pubkey: Point
    pk_master: Point


@dataclass(frozen=True)
class AggregateSignature:
    R: Point
    s: int

    def canonical_fields(self):
        return (self.R, self.s)


def _h(*parts: bytes) -> bytes:
    hasher = hashlib.sha256()
    for part in parts:
        hasher.update(len(part).to_bytes(4, "big"))
        hasher.update(part)
    return hasher.digest()


def _scalar(data: bytes) -> int:
    return int.from_bytes(data, "big") % ORDER


def multi_keygen(n: int, rng=None) -> tuple[list[SigningShare], Point]:
    if n < 1:
        raise MultisigError("need at least one signer")
    if rng is None:
        rng = secrets.SystemRandom()
    secrets_ = [rng.randrange(1, ORDER) for _ in range(n)]
    pubs = [group.mul(x, G) for x in secrets_]
    pk_master = None
    for pub in pubs:
        pk_master = group.add(pk_master, pub)
    if pk_master is None:
        raise MultisigError("degenerate aggregate key")
    shares = [SigningShare(i + 1, x, pub, pk_master) for i, (x, pub) in enumerate(zip(secrets_, pubs))]
    return shares, pk_master


def challenge(R: Point, pk_master: Point, m: bytes) -> int:
    return _scalar(_h(b"multisig/challenge", R.to_bytes(), pk_master.to_bytes(), m))


def _nonce(share: SigningShare, m: bytes) -> int:
    k = _scalar(_h(b"multisig/nonce", share.secret.to_bytes(32, "big"), share.pk_master.to_bytes(), m))
    return k or 1


def multi_sign(m: bytes, shares: Sequence[Optional[SigningShare]], n: Optional[int] = None) -> AggregateSignature:
    """Run the three signing rounds among the holders of ``shares``.

    ``shares`` must contain one entry per party in index order; a ``None``
    entry models a party that refuses to take part.
    """
    if n is not None and len(shares) != n:
        raise MissingShare(f"expected {n} shares, got {len(shares)}")
    missing = [i + 1 for i, sh in enumerate(shares) if sh is None]
    if missing:
        raise MissingShare(f"no signing share from parties {missing}")
    masters = {sh.pk_master for sh in shares}
    if len(masters) != 1:
        raise MultisigError("shares belong to different sessions")
    pk_master = masters.pop()

    # round 1: nonce commitments
    nonces = [_nonce(sh, m) for sh in shares]
    points = [group.mul(k, G) for k in nonces]
    commitments = [_h(b"multisig/R", R.to_bytes()) for R in points]
    # round 2: reveal, every participant checks the others' commitments
    for R, com in zip(points, commitments):
        if _h(b"multisig/R", R.to_bytes()) != com:
            raise MultisigError("nonce reveal does not match commitment")
    R = None
    for pt in points:
        R = group.add(R, pt)
    if R is None:
        raise MultisigError("degenerate aggregate nonce")
    # round 3: partial signatures
    c = challenge(R, pk_master, m)
    partials = [(k + c * sh.secret) % ORDER for k, sh in zip(nonces, shares)]
    for sh, R_i, s_i in zip(shares, points, partials):
        if not partial_verify(sh.pubkey, R_i, c, s_i):
            raise MultisigError(f"bad partial signature from party {sh.index}")
    return AggregateSignature(R, sum(partials) % ORDER)


def partial_verify(pubkey: Point, R_i: Point, c: int, s_i: int) -> bool:
    return group.mul(s_i, G) == group.add(R_i, group.mul(c, pubkey))


def multi_verify(pk_master: Point, m: bytes, sig: AggregateSignature) -> bool:
    if not isinstance(sig, AggregateSignature):
        return False
    if not group.is_pubkey(pk_master) or not group.is_pubkey(sig.R):
        return False
    if not 0 <= sig.s < ORDER:
        return False
    c = challenge(sig.R, pk_master, m)
    return group.mul(sig.s, G) == group.add(sig.R, group.mul(c, pk_master))
