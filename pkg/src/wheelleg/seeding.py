"""Named, order-independent random sub-streams derived from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream(root_seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Generator for stream ``name`` of item ``index``.

    Streams do not share state, so adding draws to one never shifts another.
    """
    if root_seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    key = (zlib.crc32(name.encode("utf-8")), index)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(root_seed, spawn_key=key)))
