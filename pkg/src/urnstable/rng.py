"""Counter-based stream derivation.

Every random stream is keyed by ``(master seed, replicate index, role)`` so
results do not depend on scheduling or on how many replicates run before.
"""
from __future__ import annotations

import numpy as np

URN = 0
MARKS = 1
LEPAGE = 2
GAUSS = 3
AUX = 4


def seed_sequence(seed: int, rep: int = 0, role: int = AUX) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep), int(role)))


def stream(seed: int, rep: int = 0, role: int = AUX) -> np.random.Generator:
    """Philox generator for one (seed, replicate, role) triple."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, rep, role)))


def kernel_states(seed: int, start: int, stop: int, role: int = LEPAGE):
    """Philox bit generators for replicates ``start..stop-1`` plus their raw
    state addresses, for compiled kernels that draw through ``next_double``.

    The generators must stay referenced while the addresses are in use.
    """
    gens = [np.random.Philox(seed_sequence(seed, r, role)) for r in range(start, stop)]
    addrs = np.array([g.ctypes.state_address for g in gens], dtype=np.int64)
    return gens, addrs
