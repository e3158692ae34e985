"""Excursions on a uniform grid, the tree pseudometric they induce, and samplers.

An excursion ``w`` is stored by its values at ``i/N``. The pseudometric is

    d_w(s, t) = w(s) + w(t) - 2 * min_{r in [s, t]} w(r),

answered in O(1) per query from a sparse-table range-minimum structure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._seeding import make_rng

_GRID_TOL = 1e-9


class OffGridError(ValueError):
    """Raised when a time is not a multiple of the excursion grid spacing."""


class SparseTableRMQ:
    """Range-minimum queries in O(1) after an O(N log N) build."""

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        self.n = n
        levels = [np.arange(n)]
        span = 1
        while 2 * span <= n:
            prev = levels[-1]
            left = prev[: n - 2 * span + 1]
            right = prev[span: span + n - 2 * span + 1]
            levels.append(np.where(values[right] < values[left], right, left))
            span *= 2
        self._levels = levels
        self._values = values

    def argmin(self, i, j):
        """Index of the minimum of ``values[min(i,j) : max(i,j)+1]``.

        Accepts scalars or equal-shape integer arrays.
        """
        i = np.asarray(i)
        j = np.asarray(j)
        lo = np.minimum(i, j)
        hi = np.maximum(i, j)
        length = hi - lo + 1
        k = np.floor(np.log2(length)).astype(np.int64)
        if k.ndim == 0:
            table = self._levels[int(k)]
            a = table[int(lo)]
            b = table[int(hi) - (1 << int(k)) + 1]
            return b if self._values[b] < self._values[a] else a
        out = np.empty(lo.shape, dtype=np.int64)
        for level in np.unique(k):
            sel = k == level
            table = self._levels[int(level)]
            a = table[lo[sel]]
            b = table[hi[sel] - (1 << int(level)) + 1]
            out[sel] = np.where(self._values[b] < self._values[a], b, a)
        return out

    def min(self, i, j):
        return self._values[self.argmin(i, j)]


@dataclass(frozen=True, eq=False)
class Excursion:
    """Nonnegative function on [0, 1] sampled at ``i / grid_size``.

    ``strict`` records whether the values are positive on the interior.
    """

    values: np.ndarray
    strict: bool = field(default=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.shape[0] < 3:
            raise ValueError("an excursion needs at least 3 grid values (N >= 2)")
        if v[0] != 0.0 or v[-1] != 0.0:
            raise ValueError("excursion values must vanish at both endpoints")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("excursion values must be finite and nonnegative")
        if self.strict and np.any(v[1:-1] <= 0):
            raise ValueError("strict excursion touches zero on the interior")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_rmq", None)

    @property
    def grid_size(self):
        return self.values.shape[0] - 1

    @property
    def rmq(self):
        if self._rmq is None:
            object.__setattr__(self, "_rmq", SparseTableRMQ(self.values))
        return self._rmq

    def index(self, t):
        """Grid index of time ``t``; raises :class:`OffGridError` off the grid."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < -_GRID_TOL) or np.any(t_arr > 1 + _GRID_TOL):
            raise OffGridError(f"time {t!r} outside [0, 1]")
        scaled = t_arr * self.grid_size
        idx = np.rint(scaled)
        if np.any(np.abs(scaled - idx) > _GRID_TOL * max(1, self.grid_size)):
            raise OffGridError(
                f"time {t!r} is not a multiple of 1/{self.grid_size}; "
                "snap it with Excursion.snap() or resample the excursion"
            )
        idx = idx.astype(np.int64)
        return int(idx) if idx.ndim == 0 else idx

    def snap(self, t):
        """Nearest grid time to ``t``."""
        return np.rint(np.asarray(t, dtype=float) * self.grid_size) / self.grid_size

    def times(self):
        return np.arange(self.grid_size + 1) / self.grid_size

    def __call__(self, t):
        return self.values[self.index(t)]

    def minimum_index(self, i, j):
        return self.rmq.min(i, j)

    def distance_index(self, i, j):
        return self.values[i] + self.values[j] - 2.0 * self.rmq.min(i, j)

    def integral(self):
        """Trapezoid-rule integral of ``w`` over [0, 1]."""
        return float(np.sum(self.values) / self.grid_size)


def minimum(w, s, t):
    """``m_w(s, t)``: minimum of ``w`` over ``[s ^ t, s v t]`` for grid times."""
    return w.minimum_index(w.index(s), w.index(t))


def excursion_distance(w, s, t):
    """Tree pseudodistance ``w(s) + w(t) - 2 m_w(s, t)`` for grid times."""
    return w.distance_index(w.index(s), w.index(t))


def from_function(f, N, strict=False):
    """Sample a callable on the grid ``i / N``, forcing exact zeros at the ends."""
    t = np.arange(N + 1) / N
    v = np.asarray([f(x) for x in t], dtype=float)
    v[0] = v[-1] = 0.0
    return Excursion(v, strict=strict)


def piecewise_linear(knots, N):
    """Excursion interpolating the ``(t, w)`` knots linearly on the grid."""
    knots = np.asarray(knots, dtype=float)
    t = np.arange(N + 1) / N
    v = np.interp(t, knots[:, 0], knots[:, 1])
    v[0] = v[-1] = 0.0
    return Excursion(v)


def dyck_path(m, rng):
    """Uniform nonnegative +-1 path of length ``2 m`` via the cycle lemma.

    A uniform arrangement of ``m`` up-steps and ``m + 1`` down-steps has
    exactly one cyclic rotation whose partial sums stay above -1 until the
    last step; dropping that final down-step leaves a uniform Dyck path.
    """
    steps = np.concatenate([np.ones(m, dtype=np.int64), -np.ones(m + 1, dtype=np.int64)])
    rng.shuffle(steps)
    partial = np.cumsum(steps)
    start = int(np.argmin(partial)) + 1
    rotated = np.roll(steps, -start)
    return np.concatenate([[0], np.cumsum(rotated[:-1])])


def _walk_excursion(N, rng):
    if N % 2:
        raise ValueError(
            "the conditioned-walk sampler needs an even grid size; "
            "use backend='vervaat' for odd N"
        )
    inner = dyck_path(N // 2 - 1, rng) + 1
    heights = np.concatenate([[0], inner, [0]]).astype(float)
    return Excursion(heights / np.sqrt(N), strict=True)


def _vervaat_excursion(N, rng, oversample):
    fine = N * oversample
    increments = rng.standard_normal(fine) / np.sqrt(fine)
    walk = np.concatenate([[0.0], np.cumsum(increments)])
    bridge = walk - np.arange(fine + 1) / fine * walk[-1]
    tau = int(np.argmin(bridge[:-1]))
    cyc = bridge[:-1]
    idx = (tau + oversample * np.arange(N + 1)) % fine
    values = cyc[idx] - cyc[tau]
    values[0] = values[-1] = 0.0
    return Excursion(np.maximum(values, 0.0))


def sample_brownian_excursion(N, seed, backend="walk", oversample=1):
    """Approximate normalized Brownian excursion on the grid ``i / N``.

    Parameters
    ----------
    N : int
        Grid size, at least 2. The walk backend needs ``N`` even.
    seed : int
        Seed; the output is a pure function of ``(N, seed, backend)``.
    backend : {"walk", "vervaat"}
        ``"walk"`` rescales a uniform +-1 excursion of length ``N`` by
        ``N ** -0.5``. ``"vervaat"`` rotates a discretized Brownian bridge
        at its minimum.
    oversample : int
        Vervaat only: simulate the bridge on a grid ``oversample`` times
        finer, which reduces the bias from the discrete minimum.
    """
    if N < 2:
        raise ValueError(f"grid size must be at least 2, got {N}")
    rng = make_rng(seed)
    if backend == "walk":
        return _walk_excursion(N, rng)
    if backend == "vervaat":
        return _vervaat_excursion(N, rng, int(oversample))
    raise ValueError(f"unknown excursion backend {backend!r}")


def write_csv(w, path):
    """Write columns ``t, w`` with 17 significant digits (reloads bit-exactly)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "w"])
        for t, v in zip(w.times(), w.values):
            writer.writerow([f"{t:.17g}", f"{v:.17g}"])


def read_csv(path, strict=False):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["t", "w"]:
        raise ValueError(f"{path}: expected header t,w")
    values = np.array([float(r[1]) for r in rows[1:]])
    return Excursion(values, strict=strict)
