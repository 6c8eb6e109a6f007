"""Seed derivation: every random stream descends from one master seed."""
from __future__ import annotations

import numpy as np


def derive(seed: int, *path: int) -> int:
    """Deterministic 63-bit child seed of ``seed`` along ``path``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(p) for p in path]])
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1 << 32, 1], dtype=np.uint64)) >> 1


def spawn(seed: int, k: int) -> list[int]:
    return [derive(seed, i) for i in range(k)]
