"""Simple random walk on ordered trees and the processes derived from it.

Given a walk ``X`` and a reduced subtree, ``X`` is projected onto the
subtree, the projected path is decomposed into its jump chain ``J`` and
clock ``A``, and the clock is compared with the deterministic clock ``A_hat``
that waits ``2 n mu({x}) / deg(x)`` at each visit to ``x``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._seeding import derive_seed, replica_seeds
from .discrete_tree import AtomicMeasure, OrderedTree


@dataclass
class WalkPath:
    steps: np.ndarray
    seed: int
    tree: OrderedTree = field(repr=False)

    def __len__(self):
        return self.steps.shape[0]


def simulate_srw(t, M, seed, start=0):
    """Walk of ``M`` steps from ``start``, uniform over neighbours at each step."""
    if M < 0:
        raise ValueError("number of steps must be nonnegative")
    if t.n == 1:
        if M:
            raise ValueError("a single-vertex tree admits no steps")
        return WalkPath(np.zeros(1, dtype=np.int64), int(seed), t)
    offsets, targets = t.neighbors_csr()
    steps = _kernels.walk_path(offsets, targets, start, int(M), int(seed) & 0xFFFFFFFF)
    return WalkPath(steps, int(seed), t)


# ---------------------------------------------------------------- projection


@dataclass
class JumpDecomposition:
    """Jump chain ``J`` and clock ``A`` of a projected walk.

    ``A[l]`` is the time the projected walk makes its ``l``-th jump and
    ``J[l]`` the vertex it jumps to (``A[0] = 0``, ``J[0] = root``).
    """

    J: np.ndarray
    A: np.ndarray
    horizon: int

    def tau(self, m):
        """``max{l : A_l <= m}`` (vectorized)."""
        return np.searchsorted(self.A, m, side="right") - 1


def project_and_decompose(p, sub):
    """Projected path ``phi(X_m)`` and its jump decomposition.

    A jump is recorded when the walk reaches a subtree vertex other than the
    one it last sat on; an excursion still open at the horizon is dropped.
    """
    X = np.asarray(p.steps)
    projected = sub.projection[X]
    on_sub = np.flatnonzero(sub.mask[X])
    vals = X[on_sub]
    change = np.flatnonzero(vals[1:] != vals[:-1]) + 1
    A = np.concatenate([[0], on_sub[change]]).astype(np.int64)
    J = X[A]
    return projected, JumpDecomposition(J, A, X.shape[0] - 1)


@dataclass
class LocalTimeField:
    """Occupation counts of a jump chain and the local times derived from them."""

    J: np.ndarray
    nu: np.ndarray  # deg(x) / 2 on the host vertex index

    def counts(self, m):
        return np.bincount(self.J[: m + 1], minlength=self.nu.shape[0])

    def local(self, m):
        c = self.counts(m).astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.nu > 0, c / np.where(self.nu > 0, self.nu, 1), 0.0)


def local_times(J, sub):
    return LocalTimeField(np.asarray(J), sub.degree / 2.0)


def _dense_mass(mu_k, n_host):
    if isinstance(mu_k, AtomicMeasure):
        return mu_k.as_array(n_host)
    return np.asarray(mu_k)


def a_hat(J, sub, mu_k, n):
    """Deterministic clock: ``A_hat[0] = 0`` and
    ``A_hat[m+1] - A_hat[m] = 2 n mu_k({J_m}) / deg(J_m)``.

    ``mu_k`` is an :class:`AtomicMeasure` or a dense per-vertex array; an
    object array of fractions gives exact rational output.
    """
    J = np.asarray(J)
    mass = _dense_mass(mu_k, sub.host.n)
    deg = sub.degree
    inc = [2 * n * mass[v] / deg[v] for v in J[:-1]] if mass.dtype == object else (
        2.0 * n * mass[J[:-1]] / np.maximum(deg[J[:-1]], 1)
    )
    out = np.empty(J.shape[0], dtype=mass.dtype)
    out[0] = 0
    if J.shape[0] > 1:
        out[1:] = np.cumsum(np.asarray(inc, dtype=mass.dtype))
    return out


def a_hat_integral(J, sub, mu_k, n):
    """``A_hat[m] = n * integral of L_{m-1} d mu_k``, evaluated term by term."""
    J = np.asarray(J)
    mass = _dense_mass(mu_k, sub.host.n)
    deg = sub.degree
    out = []
    counts = {}
    for m in range(J.shape[0]):
        total = 0
        for x, c in counts.items():
            total = total + c * 2 * mass[x] / deg[x]
        out.append(n * total)
        counts[int(J[m])] = counts.get(int(J[m]), 0) + 1
    return np.asarray(out, dtype=mass.dtype)


def hat_x(J, A_hat, t):
    """``J`` at ``max{s : A_hat_s <= t}``; beyond the last knot, the last state."""
    idx = np.searchsorted(np.asarray(A_hat, dtype=float), t, side="right") - 1
    idx = np.clip(idx, 0, len(J) - 1)
    return np.asarray(J)[idx]


def clock_interp(A, x):
    """Linear interpolation of an integer-indexed clock at real indices ``x``."""
    return np.interp(x, np.arange(len(A)), np.asarray(A, dtype=float))


# ---------------------------------------------------------------- test graphs


def csr_from_edges(n, edges):
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    offsets = np.zeros(n + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(a) for a in adj])
    targets = np.fromiter((b for a in adj for b in a), dtype=np.int64, count=offsets[-1])
    return offsets, targets


def exit_graph(t, D):
    """``t`` with ``D`` pendant vertices attached at the root.

    Returns ``(n_vertices, edges, pendant_ids)``.
    """
    edges = [(int(t.parent[v]), v) for v in range(1, t.n)]
    pend = list(range(t.n, t.n + D))
    edges += [(0, p) for p in pend]
    return t.n + D, edges, pend


def gadget_graph(L, D1, D2):
    """Path ``x = 0, ..., L = y`` with ``D1 - 1`` pendants at ``x`` and ``D2 - 1`` at ``y``."""
    if L < 1 or D1 < 1 or D2 < 1:
        raise ValueError("L, D1 and D2 must be positive")
    edges = [(i, i + 1) for i in range(L)]
    n = L + 1
    for _ in range(D1 - 1):
        edges.append((0, n))
        n += 1
    for _ in range(D2 - 1):
        edges.append((L, n))
        n += 1
    return n, edges, 0, L


@dataclass
class MomentEstimate:
    mean: float
    mean_se: float
    second_moment: float
    second_moment_se: float
    replicas: int


def exit_time_stats(t, D, replicas, seed, max_steps=10 ** 9):
    """Exit time from ``t`` of the walk on ``t`` plus ``D`` pendant root edges."""
    n, edges, pend = exit_graph(t, D)
    offsets, targets = csr_from_edges(n, edges)
    stop = np.zeros(n, dtype=np.bool_)
    stop[pend] = True
    seeds = replica_seeds(seed, replicas)
    times, _ = _kernels.hitting_times(offsets, targets, 0, stop, seeds, max_steps)
    if np.any(times < 0):
        raise RuntimeError("a replica exceeded the step budget")
    x = times.astype(float)
    sq = x * x
    return MomentEstimate(
        float(x.mean()),
        float(x.std(ddof=1) / math.sqrt(replicas)),
        float(sq.mean()),
        float(sq.std(ddof=1) / math.sqrt(replicas)),
        replicas,
    )


def visits_before_return(L, D1, D2, replicas, seed, max_steps=10 ** 9):
    """Visits to ``y`` before the first return to ``x`` on the gadget graph.

    Returns the array of counts, one per replica.
    """
    n, edges, x, y = gadget_graph(L, D1, D2)
    offsets, targets = csr_from_edges(n, edges)
    seeds = replica_seeds(seed, replicas)
    counts = _kernels.visits_before_return(offsets, targets, x, y, seeds, max_steps)
    if np.any(counts < 0):
        raise RuntimeError("a replica exceeded the step budget")
    return counts


def visit_count_pmf(L, D1, D2, k):
    """Closed-form law of the visit count: ``P(N = k)``."""
    if k == 0:
        return 1 - 1 / (L * D1)
    return (1 / (L * L * D1 * D2)) * (1 - 1 / (L * D2)) ** (k - 1)


@dataclass
class TailCurve:
    t: np.ndarray
    tail: np.ndarray
    se: np.ndarray
    samples: np.ndarray
    slope: float
    intercept: float


def occupation_tail(R, n, x, replicas, seed, t_grid=None):
    """Empirical ``P(xi(x, n^2) >= t n)`` for the walk on ``{0, ..., R n}`` from 0.

    ``xi(x, m)`` counts visits to ``x`` at times ``0..m``. The returned
    slope and intercept are the least-squares line through ``log tail``
    over the grid points with positive tail.
    """
    if x not in (0, 1):
        raise ValueError("x must be 0 or 1")
    seeds = replica_seeds(seed, replicas)
    xi = _kernels.path_occupation(int(R * n), int(x), int(n * n), seeds)
    scaled = xi / n
    if t_grid is None:
        t_grid = np.linspace(0.0, scaled.max(), 41)
    t_grid = np.asarray(t_grid, dtype=float)
    tail = np.array([(scaled >= s).mean() for s in t_grid])
    se = np.sqrt(tail * (1 - tail) / replicas)
    pos = tail > 0
    slope, intercept = np.polyfit(t_grid[pos], np.log(tail[pos]), 1)
    return TailCurve(t_grid, tail, se, xi, float(slope), float(intercept))


def exponential_envelope(curve, fit_fraction=0.5, n_se=3.0):
    """Check an exponential upper envelope for a tail curve.

    The envelope has the least-squares slope and the smallest intercept
    that covers the first ``fit_fraction`` of the grid; it is then required
    to cover every grid point up to ``n_se`` standard errors.
    Returns ``(ok, envelope, worst_excess_in_se)``.
    """
    t, tail, se = curve.t, curve.tail, curve.se
    head = np.arange(len(t)) < max(2, int(round(fit_fraction * len(t))))
    pos = head & (tail > 0)
    c = np.max(np.log(tail[pos]) - curve.slope * t[pos])
    env = np.exp(c + curve.slope * t)
    with np.errstate(divide="ignore", invalid="ignore"):
        excess = np.where(se > 0, (tail - env) / se, np.where(tail > env, np.inf, 0.0))
    worst = float(np.max(excess))
    return bool(curve.slope < 0 and worst <= n_se), env, worst


# ---------------------------------------------------------------- binary log


def _varint_encode(values):
    out = bytearray()
    for v in values:
        v = int(v)
        while True:
            byte = v & 0x7F
            v >>= 7
            if v:
                out.append(byte | 0x80)
            else:
                out.append(byte)
                break
    return bytes(out)


def _varint_decode(data):
    values = []
    cur = 0
    shift = 0
    for b in data:
        cur |= (b & 0x7F) << shift
        if b & 0x80:
            shift += 7
        else:
            values.append(cur)
            cur = 0
            shift = 0
    if shift:
        raise ValueError("truncated varint stream")
    return np.asarray(values, dtype=np.int64)


def write_walk_log(path, steps, seed, tree_digest, extra=None):
    """Vertex ids as LEB128 varints plus a ``.json`` sidecar with the seed
    and the host tree digest."""
    with open(path, "wb") as fh:
        fh.write(_varint_encode(steps))
    meta = {"seed": int(seed), "tree_sha256": tree_digest, "steps": int(len(steps))}
    if extra:
        meta.update(extra)
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def read_walk_log(path):
    with open(path, "rb") as fh:
        steps = _varint_decode(fh.read())
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    return steps, meta


__all__ = [
    "WalkPath",
    "JumpDecomposition",
    "LocalTimeField",
    "simulate_srw",
    "project_and_decompose",
    "local_times",
    "a_hat",
    "a_hat_integral",
    "hat_x",
    "exit_time_stats",
    "visits_before_return",
    "visit_count_pmf",
    "occupation_tail",
    "exponential_envelope",
    "write_walk_log",
    "read_walk_log",
    "derive_seed",
]
