"""Monte Carlo summaries: KS distances, bootstrap bands and trend verdicts."""

from __future__ import annotations

import numpy as np
from scipy.stats import ks_2samp

from ._seeding import make_rng


def ks_statistic(a, b):
    """Two-sample Kolmogorov-Smirnov distance (sup of the CDF gap)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS distance needs two nonempty samples")
    return float(ks_2samp(a, b).statistic)


def ks_permutation_quantile(na, nb, level, draws, seed):
    """Permutation quantile of the KS distance under equal laws.

    Under the null the statistic only depends on the interleaving of the two
    samples, so shuffling ranks gives its exact distribution by simulation.
    """
    rng = make_rng(seed)
    pooled = np.arange(na + nb, dtype=float)
    out = np.empty(draws)
    for i in range(draws):
        perm = rng.permutation(pooled)
        out[i] = ks_statistic(perm[:na], perm[na:])
    return float(np.quantile(out, level))


def bootstrap_band(stat, samples, level=0.95, draws=500, seed=0):
    """Percentile bootstrap interval for ``stat(*samples)``.

    Every sample in ``samples`` is resampled independently with replacement.
    """
    rng = make_rng(seed)
    samples = [np.asarray(s) for s in samples]
    vals = np.empty(draws)
    for i in range(draws):
        vals[i] = stat(*[s[rng.integers(0, len(s), len(s))] for s in samples])
    lo, hi = np.quantile(vals, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def median_band(values, level=0.95, draws=500, seed=0):
    return bootstrap_band(np.median, [values], level, draws, seed)


def ks_band_halfwidth(replicas, level=0.95):
    """Asymptotic half-width of the KS acceptance band for two equal samples."""
    c = np.sqrt(-0.5 * np.log((1 - level) / 2))
    return float(c * np.sqrt(2.0 / replicas))


def adjacent_inversions(values, strict=False):
    """Count adjacent pairs that go up (or fail to go down when ``strict``)."""
    v = np.asarray(values, dtype=float)
    d = np.diff(v)
    return int(np.sum(d >= 0 if strict else d > 0))


def trend_verdict(values, max_inversions=1, strict=False):
    """Nonincreasing (or decreasing) along the list, up to ``max_inversions`` breaks."""
    return adjacent_inversions(values, strict) <= max_inversions
