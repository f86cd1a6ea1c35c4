"""Seed partitioning for independent trials."""

import hashlib

_MASK64 = (1 << 64) - 1


def trial_seed(base_seed, label, j):
    """Seed of trial ``j`` of experiment ``label``: ``base_seed XOR hash(label, j)``."""
    h = hashlib.blake2b(f"{label}|{int(j)}".encode(), digest_size=8).digest()
    return (int(base_seed) ^ int.from_bytes(h, "little")) & _MASK64
