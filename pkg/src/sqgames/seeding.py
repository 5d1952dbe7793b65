"""Deterministic RNG derivation.

Every random stream in the framework is derived from a single master seed by
hashing (seed, tag...) with SHA-256.  This makes experiments reproducible
bit-for-bit, lets parallel trials run in any order without affecting results,
and lets two different games share exactly the streams they are supposed to
share (e.g. the analyst stream) while keeping others independent (e.g. masks).
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["child_seed", "child_rng"]


def _digest(master_seed: int, tags: tuple) -> bytes:
    h = hashlib.sha256()
    h.update(int(master_seed).to_bytes(16, "big", signed=True))
    for t in tags:
        h.update(b"\x1f")
        h.update(str(t).encode("utf-8"))
    return h.digest()


def child_seed(master_seed: int, *tags) -> int:
    """A 64-bit seed derived from (master_seed, tags) by SHA-256."""
    return int.from_bytes(_digest(master_seed, tags)[:8], "big")


def child_rng(master_seed: int, *tags) -> np.random.Generator:
    """An independent PCG64 generator derived from (master_seed, tags)."""
    entropy = int.from_bytes(_digest(master_seed, tags)[:16], "big")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
