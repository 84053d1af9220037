"""secp256k1 group arithmetic.

Points are immutable affine ``Point`` values; the point at infinity is ``None``.
Scalar multiplication runs internally in Jacobian coordinates.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

P = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F
ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
B = 7


class GroupError(ValueError):
    pass


@dataclass(frozen=True)
class Point:
    x: int
    y: int

    def __post_init__(self):
        if not on_curve(self.x, self.y):
            raise GroupError("point is not on secp256k1")

    def to_bytes(self) -> bytes:
        """33-byte SEC1 compressed encoding."""
        return bytes([2 + (self.y & 1)]) + self.x.to_bytes(32, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Point":
        if len(data) == 65 and data[0] == 4:
            return cls(int.from_bytes(data[1:33], "big"), int.from_bytes(data[33:], "big"))
        if len(data) != 33 or data[0] not in (2, 3):
            raise GroupError("expected 33-byte compressed or 65-byte uncompressed point")
        x = int.from_bytes(data[1:], "big")
        y = _lift_y(x)
        if y is None:
            raise GroupError("x coordinate is not on the curve")
        if (y & 1) != (data[0] & 1):
            y = P - y
        return cls(x, y)

    def x_bytes(self) -> bytes:
        return self.x.to_bytes(32, "big")

    def __add__(self, other: Optional["Point"]) -> Optional["Point"]:
        return add(self, other)

    def __neg__(self) -> "Point":
        return Point(self.x, (-self.y) % P)

    def __rmul__(self, k: int) -> Optional["Point"]:
        return mul(k, self)


def on_curve(x: int, y: int) -> bool:
    if not (0 <= x < P and 0 <= y < P):
        return False
    return (y * y - x * x * x - B) % P == 0


def is_pubkey(pt) -> bool:
    """True iff ``pt`` is an on-curve, non-identity point."""
    return isinstance(pt, Point) and on_curve(pt.x, pt.y)


def _lift_y(x: int) -> Optional[int]:
    if not 0 <= x < P:
        return None
    y_sq = (pow(x, 3, P) + B) % P
    y = pow(y_sq, (P + 1) // 4, P)
    if y * y % P != y_sq:
        return None
    return y


G = Point(
    0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798,
    0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8,
)


# Jacobian helpers: (X, Y, Z) represents (X/Z^2, Y/Z^3); Z == 0 is infinity.

def _jdouble(X1, Y1, Z1):
    if Y1 == 0 or Z1 == 0:
        return 0, 1, 0
    YY = Y1 * Y1 % P
    S = 4 * X1 * YY % P
    M = 3 * X1 * X1 % P
    X3 = (M * M - 2 * S) % P
    Y3 = (M * (S - X3) - 8 * YY * YY) % P
    Z3 = 2 * Y1 * Z1 % P
    return X3, Y3, Z3


def _jadd(X1, Y1, Z1, X2, Y2, Z2):
    if Z1 == 0:
        return X2, Y2, Z2
    if Z2 == 0:
        return X1, Y1, Z1
    Z1Z1 = Z1 * Z1 % P
    Z2Z2 = Z2 * Z2 % P
    U1 = X1 * Z2Z2 % P
    U2 = X2 * Z1Z1 % P
    S1 = Y1 * Z2 * Z2Z2 % P
    S2 = Y2 * Z1 * Z1Z1 % P
    if U1 == U2:
        if S1 != S2:
            return 0, 1, 0
        return _jdouble(X1, Y1, Z1)
    H = (U2 - U1) % P
    R = (S2 - S1) % P
    HH = H * H % P
    HHH = H * HH % P
    V = U1 * HH % P
    X3 = (R * R - HHH - 2 * V) % P
    Y3 = (R * (V - X3) - S1 * HHH) % P
    Z3 = H * Z1 * Z2 % P
    return X3, Y3, Z3


def _to_affine(X, Y, Z) -> Optional[Point]:
    if Z == 0:
        return None
    zinv = pow(Z, -1, P)
    zinv2 = zinv * zinv % P
    return Point(X * zinv2 % P, Y * zinv2 * zinv % P)


def add(p1: Optional[Point], p2: Optional[Point]) -> Optional[Point]:
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    return _to_affine(*_jadd(p1.x, p1.y, 1, p2.x, p2.y, 1))


def mul(k: int, pt: Optional[Point]) -> Optional[Point]:
    """Scalar multiplication with a 4-bit fixed window."""
    if pt is None:
        return None
    k %= ORDER
    if k == 0:
        return None
    table = [(0, 1, 0), (pt.x, pt.y, 1)]
    for _ in range(14):
        table.append(_jadd(*table[-1], pt.x, pt.y, 1))
    acc = (0, 1, 0)
    for shift in range(252, -1, -4):
        if acc[2]:
            for _ in range(4):
                acc = _jdouble(*acc)
        nib = (k >> shift) & 0xF
        if nib:
            acc = _jadd(*acc, *table[nib])
    return _to_affine(*acc)


def hash_to_curve(label: bytes) -> Point:
    """Try-and-increment map from a label to a point with even y."""
    counter = 0
    while True:
        digest = hashlib.sha256(label + counter.to_bytes(4, "big")).digest()
        x = int.from_bytes(digest, "big") % P
        y = _lift_y(x)
        if y is not None:
            return Point(x, y if y % 2 == 0 else P - y)
        counter += 1
