"""Deterministic randomness streams.

One root seed per run; every stochastic operation draws from a child
generator derived from (root seed, operation tag, invocation counter), so
runs are bit-reproducible regardless of call interleaving within a tag.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

SEED_ENV_VAR = "POINTLOC_SEED"


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    return int(raw)


class SeedStream:
    """Factory of named, counted child generators under one root seed."""

    def __init__(self, root_seed: int):
        self.root_seed = int(root_seed) & 0xFFFFFFFFFFFFFFFF
        self._counters: dict[str, int] = {}

    def child(self, tag: str) -> np.random.Generator:
        n = self._counters.get(tag, 0)
        self._counters[tag] = n + 1
        key = zlib.crc32(tag.encode("utf-8"))
        ss = np.random.SeedSequence([self.root_seed, key, n])
        return np.random.default_rng(ss)

    def spawn(self, tag: str) -> "SeedStream":
        """Independent sub-stream (e.g. one per trial)."""
        n = self._counters.get(tag, 0)
        self._counters[tag] = n + 1
        key = zlib.crc32(tag.encode("utf-8"))
        mixed = np.random.SeedSequence([self.root_seed, key, n]).generate_state(2)
        return SeedStream(int(mixed[0]) ^ (int(mixed[1]) << 32 & 0xFFFFFFFFFFFFFFFF))
