"""Deterministic per-purpose random streams.

Every stochastic stage draws from its own numpy Generator derived from
(master seed, purpose label, optional indices).  Streams are mutually
independent and stable across runs, so stages can be rerun or reordered
without perturbing each other's draws.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def stream(master_seed: int, *path) -> np.random.Generator:
    """Generator for one purpose, e.g. ``stream(seed, "mcmc")`` or
    ``stream(seed, "noise", row)``.  Path parts may be ints or strings."""
    ss = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=tuple(_key(p) for p in path)
    )
    return np.random.Generator(np.random.PCG64(ss))
