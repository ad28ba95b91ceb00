"""Stable content hashing used for provenance fingerprints."""

from __future__ import annotations

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = _FNV64_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV64_PRIME) & _MASK64
    return h


def fingerprint_hex(data: bytes) -> str:
    """FNV-1a 64 of ``data`` rendered as 16 lowercase hex digits."""
    return format(fnv1a64(data), "016x")
