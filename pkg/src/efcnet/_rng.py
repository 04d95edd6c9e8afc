"""Seed derivation: every random stream is keyed by (seed, component name).

The component name is hashed with CRC-32 (stable across processes, unlike
``hash``) and used as the spawn key of a :class:`numpy.random.SeedSequence`.
"""

from __future__ import annotations

import zlib

import numpy as np


def component_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def derive_rng(seed: int, *components: str | int) -> np.random.Generator:
    key = tuple(component_key(c) if isinstance(c, str) else int(c) for c in components)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
