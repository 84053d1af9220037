"""Canonical binary encoding for every signed protocol payload.

Each value is written as a one-byte tag, a 4-byte big-endian length, then the
payload. Sequences nest. Integers are minimal-length two's complement so that
signed quantities (execution ids of -1, channel ``net``) round-trip.
"""

from __future__ import annotations

import struct

from .group import Point

_NONE = b"N"
_BYTES = b"B"
_INT = b"I"
_STR = b"S"
_SEQ = b"L"
_BOOL = b"T"
_POINT = b"P"


def _frame(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack(">I", len(payload)) + payload


def _int_bytes(v: int) -> bytes:
    length = max(1, (v + (v < 0)).bit_length() // 8 + 1)
    return v.to_bytes(length, "big", signed=True)


def encode_value(v) -> bytes:
    if v is None:
        return _frame(_NONE, b"")
    if isinstance(v, bool):
        return _frame(_BOOL, b"\x01" if v else b"\x00")
    if isinstance(v, int):
        return _frame(_INT, _int_bytes(v))
    if isinstance(v, (bytes, bytearray)):
        return _frame(_BYTES, bytes(v))
    if isinstance(v, str):
        return _frame(_STR, v.encode("utf-8"))
    if isinstance(v, Point):
        return _frame(_POINT, v.to_bytes())
    if isinstance(v, (list, tuple)):
        return _frame(_SEQ, b"".join(encode_value(item) for item in v))
    encoder = getattr(v, "canonical_fields", None)
    if encoder is not None:
        return encode_value(tuple(encoder()))
    raise TypeError(f"no canonical encoding for {type(v).__name__}")


def encode(domain: str, *fields) -> bytes:
    """Encode a domain-separated message; the domain tag is always the first field."""
    return encode_value((domain,) + fields)


def decode_int(data: bytes) -> int:
    return int.from_bytes(data, "big", signed=True)
