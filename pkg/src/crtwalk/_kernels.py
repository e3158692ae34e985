"""Compiled inner loops for walks on graphs given in CSR form.

Each replica reseeds the compiled generator from its own seed, so a replica's
trajectory depends only on that seed and never on batching or thread count.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _step(offsets, targets, v):
    lo = offsets[v]
    d = offsets[v + 1] - lo
    return targets[lo + int(np.random.random() * d)]


@njit(cache=True)
def walk_path(offsets, targets, start, n_steps, seed):
    np.random.seed(seed)
    out = np.empty(n_steps + 1, dtype=np.int64)
    v = start
    out[0] = v
    for i in range(n_steps):
        v = _step(offsets, targets, v)
        out[i + 1] = v
    return out


@njit(cache=True)
def walk_endpoints(offsets, targets, start, n_steps, seeds):
    out = np.empty(seeds.shape[0], dtype=np.int64)
    for r in range(seeds.shape[0]):
        np.random.seed(seeds[r])
        v = start
        for _ in range(n_steps):
            v = _step(offsets, targets, v)
        out[r] = v
    return out


@njit(cache=True)
def hitting_times(offsets, targets, start, stop, seeds, max_steps):
    """Steps until the walk first enters ``stop`` and the vertex it enters.

    A replica that runs ``max_steps`` steps without stopping reports -1.
    """
    n = seeds.shape[0]
    times = np.empty(n, dtype=np.int64)
    where = np.empty(n, dtype=np.int64)
    for r in range(n):
        np.random.seed(seeds[r])
        v = start
        k = 0
        while not stop[v] and k < max_steps:
            v = _step(offsets, targets, v)
            k += 1
        if stop[v]:
            times[r] = k
            where[r] = v
        else:
            times[r] = -1
            where[r] = -1
    return times, where


@njit(cache=True)
def visits_before_return(offsets, targets, x, y, seeds, max_steps):
    """Visits to ``y`` by a walk from ``x`` before it first returns to ``x``."""
    n = seeds.shape[0]
    counts = np.empty(n, dtype=np.int64)
    for r in range(n):
        np.random.seed(seeds[r])
        v = _step(offsets, targets, x)
        c = 0
        k = 1
        while v != x and k < max_steps:
            if v == y:
                c += 1
            v = _step(offsets, targets, v)
            k += 1
        counts[r] = c if v == x else -1
    return counts


@njit(cache=True)
def path_occupation(length, x, n_steps, seeds):
    """Visits to ``x`` during times ``0..n_steps`` of the walk on ``{0..length}`` from 0."""
    n = seeds.shape[0]
    out = np.empty(n, dtype=np.int64)
    for r in range(n):
        np.random.seed(seeds[r])
        v = 0
        c = 1 if x == 0 else 0
        for _ in range(n_steps):
            if v == 0:
                v = 1
            elif v == length:
                v = length - 1
            elif np.random.random() < 0.5:
                v -= 1
            else:
                v += 1
            if v == x:
                c += 1
        out[r] = c
    return out


@njit(cache=True)
def timed_hitting_times(offsets, targets, start, stop, seeds, max_steps, table):
    """Like :func:`hitting_times` but each step lasts an independent time drawn
    by inverse transform from ``table`` (quantiles on a uniform grid)."""
    n = seeds.shape[0]
    times = np.empty(n)
    where = np.empty(n, dtype=np.int64)
    m = table.shape[0] - 1
    for r in range(n):
        np.random.seed(seeds[r])
        v = start
        k = 0
        acc = 0.0
        while not stop[v] and k < max_steps:
            v = _step(offsets, targets, v)
            u = np.random.random() * m
            j = int(u)
            acc += table[j] + (u - j) * (table[j + 1] - table[j])
            k += 1
        if stop[v]:
            times[r] = acc
            where[r] = v
        else:
            times[r] = -1.0
            where[r] = -1
    return times, where


@njit(cache=True)
def additive_until_hit(offsets, targets, start, stop, weight, seeds, max_steps):
    """Sum of ``weight`` over the visits made before first entering ``stop``.

    A replica that exhausts ``max_steps`` reports NaN.
    """
    n = seeds.shape[0]
    out = np.empty(n)
    for r in range(n):
        np.random.seed(seeds[r])
        v = start
        k = 0
        acc = 0.0
        while not stop[v] and k < max_steps:
            acc += weight[v]
            v = _step(offsets, targets, v)
            k += 1
        out[r] = acc if stop[v] else np.nan
    return out


@njit(cache=True)
def level_crossings(values, delta):
    """Successive crossings of the lattice ``delta * Z`` by a path.

    Starting at level 0, the walk records the grid index at which the path
    first reaches the level above or below the current one. Returns the
    visited levels (starting with 0) and the indices (starting with 0).
    """
    n = values.shape[0]
    levels = np.empty(2 * n + 2, dtype=np.int64)
    index = np.empty(2 * n + 2, dtype=np.int64)
    levels[0] = 0
    index[0] = 0
    c = 1
    lv = 0
    for i in range(1, n):
        x = values[i]
        while x >= (lv + 1) * delta:
            lv += 1
            levels[c] = lv
            index[c] = i
            c += 1
        while lv > 0 and x <= (lv - 1) * delta:
            lv -= 1
            levels[c] = lv
            index[c] = i
            c += 1
    return levels[:c], index[:c]
