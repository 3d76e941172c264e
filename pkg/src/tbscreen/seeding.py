"""Deterministic random substreams derived from one root seed."""
from __future__ import annotations

import numpy as np


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the substream addressed by ``keys`` under ``seed``.

    Identical ``(seed, keys)`` always give identical draws, and distinct key
    tuples give statistically independent streams.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(keys))))
