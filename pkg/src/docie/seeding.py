"""Stable, key-derived random streams.

Python's builtin ``hash`` is salted per process, so every seeded decision in
the harness derives its stream from a SHA-256 digest of the seed plus a key
path.  Outcomes are reproducible across runs, platforms, and iteration order.
"""

from __future__ import annotations

import hashlib
import random


def stable_seed(*parts: object) -> int:
    """Derive a 64-bit seed from arbitrary key parts."""
    material = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stable_rng(*parts: object) -> random.Random:
    """A ``random.Random`` keyed by the given parts."""
    return random.Random(stable_seed(*parts))


def stable_uniform(*parts: object) -> float:
    """A single uniform draw in [0, 1) keyed by the given parts."""
    return stable_rng(*parts).random()


def round_half_up(x: float) -> int:
    """Round positive values with .5 going up (not banker's rounding)."""
    return int(x + 0.5)
