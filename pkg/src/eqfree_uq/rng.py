"""Deterministic random streams keyed by position in the ensemble.

Every stream is an independent PCG64 generator whose seed sequence is the
master seed plus a spawn key such as ``(burst, node, replica)``, so results do
not depend on the order in which streams are consumed.
"""
from __future__ import annotations

import numpy as np


def stream(master_seed: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))
