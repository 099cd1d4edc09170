"""Deterministic RNG derivation from a campaign seed plus string/int tags."""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_to_int(tag: str | int) -> int:
    if isinstance(tag, int):
        return tag & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def tagged_rng(seed: int, *tags: str | int) -> np.random.Generator:
    """Child generator keyed by (seed, tags); stable across runs and platforms."""
    entropy = [seed & 0xFFFFFFFFFFFFFFFF] + [_tag_to_int(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))
