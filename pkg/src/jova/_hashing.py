"""32-bit FNV-1a hashing over little-endian integer tuples.

Used for atom invariants and Morgan identifiers so fingerprints are
bit-identical on every platform.
"""
import struct

FNV_OFFSET = 0x811C9DC5
FNV_PRIME = 0x01000193


def fnv1a_32(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFF
    return h


def hash_ints(values) -> int:
    """Hash a sequence of integers (each must fit in a signed 64-bit slot)."""
    values = list(values)
    return fnv1a_32(struct.pack(f"<{len(values)}q", *values))
