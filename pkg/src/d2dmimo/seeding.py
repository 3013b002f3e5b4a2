"""Deterministic derivation of independent random streams.

Every stochastic stage of a run (geometry, shadowing, fading, training noise)
draws from its own stream, derived from a master seed plus a structured key.
Streams are backed by the counter-based Philox generator, so results do not
depend on how work is scheduled across workers.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1


def _spawn_key(key: tuple[int, ...]) -> tuple[int, ...]:
    # SeedSequence spawn keys are sequences of uint32 words.
    words: list[int] = []
    for part in key:
        part = int(part) & _MASK64
        words.append(part & _MASK32)
        words.append(part >> 32)
    return tuple(words)


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for (master_seed, key...)."""
    ss = np.random.SeedSequence(int(master_seed) & _MASK64, spawn_key=_spawn_key(key))
    return np.random.Generator(np.random.Philox(seed=ss))


def derive_seed(master_seed: int, *key: int) -> int:
    """Collapse (master_seed, key...) into a single 64-bit seed."""
    ss = np.random.SeedSequence(int(master_seed) & _MASK64, spawn_key=_spawn_key(key))
    lo, hi = ss.generate_state(2, np.uint32)
    return (int(hi) << 32) | int(lo)
