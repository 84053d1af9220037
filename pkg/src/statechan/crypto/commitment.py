"""Hash commitments: com = SHA-256(message || randomness)."""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass

RANDOMNESS_BYTES = 32


@dataclass(frozen=True)
class Commitment:
    digest: bytes

    def __post_init__(self):
        if len(self.digest) != 32:
            raise ValueError("commitment digest must be 32 bytes")

    def hex(self) -> str:
        return self.digest.hex()

    def canonical_fields(self):
        return (self.digest,)


@dataclass(frozen=True)
class Opening:
    message: bytes
    randomness: bytes

    def __post_init__(self):
        if len(self.randomness) != RANDOMNESS_BYTES:
            raise ValueError("opening randomness must be exactly 32 bytes")

    @classmethod
    def fresh(cls, message: bytes, rng=None) -> "Opening":
        if rng is None:
            omega = secrets.token_bytes(RANDOMNESS_BYTES)
        else:
            omega = rng.randbytes(RANDOMNESS_BYTES)
        return cls(message, omega)

    def canonical_fields(self):
        return (self.message, self.randomness)


def commit(opening: Opening) -> Commitment:
    return Commitment(hashlib.sha256(opening.message + opening.randomness).digest())


def verify_open(opening: Opening, c: Commitment) -> bool:
    if not isinstance(opening, Opening) or not isinstance(c, Commitment):
        return False
    return commit(opening).digest == c.digest
