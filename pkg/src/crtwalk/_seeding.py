"""Deterministic seed derivation for replicas and worker pools."""

import numpy as np


def derive_seed(master, *keys):
    """Child seed as a pure function of ``(master, keys)``.

    Replica ``i`` of a run with master seed ``s`` always receives
    ``derive_seed(s, i)`` whatever the worker count or completion order.
    """
    keys = tuple(int(k) for k in keys)
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=keys)
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def make_rng(seed, *keys):
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.default_rng(int(seed))


def replica_seeds(master, count, *keys):
    """Seeds for replicas ``0..count-1``; entry ``i`` depends only on
    ``(master, keys, i)``, never on ``count``."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))
    # numba's generator takes 32-bit seeds
    return ss.generate_state(int(count), dtype=np.uint32).astype(np.int64)
