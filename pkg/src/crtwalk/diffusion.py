"""Grid approximation of Brownian motion on a finite metric tree.

Every edge of the host tree is cut into ``max(1, round(length / h))`` cells
of length exactly ``h``; the grid walk moves to a uniform neighbour and each
step lasts ``h**2`` units of length-measure time. Dividing times by the grid
tree's total length gives the normalized clock, in which the speed measure
is the normalized length measure. Every time-valued output carries its clock.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._seeding import make_rng, replica_seeds
from .metric_tree import ROOT, TreePoint

CLOCKS = ("length", "normalized")


class GridTree:
    """Grid vertices on a :class:`~crtwalk.metric_tree.MetricTree`.

    Vertex ``v < host.n_nodes`` is host node ``v``; the remaining vertices
    are interior points of edges. ``edge_of``/``offset_of`` give each vertex's
    position on the host (offsets are in host units; the grid metric itself
    uses cells of length ``h``).
    """

    def __init__(self, host, h, allow_coarse=False):
        if h <= 0:
            raise ValueError("grid spacing must be positive")
        lengths = host.length[1:]
        if host.n_edges and h > lengths.min() * (1 + 1e-9) and not allow_coarse:
            raise ValueError(
                f"grid spacing {h} exceeds the shortest edge {lengths.min():.3g}; "
                "refine h or pass allow_coarse=True to give short edges one cell"
            )
        self.host = host
        self.h = float(h)
        n_nodes = host.n_nodes
        cells = np.zeros(n_nodes, dtype=np.int64)
        cells[1:] = np.maximum(1, np.rint(lengths / h)).astype(np.int64)
        self.cells = cells
        edge_of = list(range(n_nodes))
        offset_of = [float(host.length[v]) for v in range(n_nodes)]
        edges = []
        for v in range(1, n_nodes):
            m = int(cells[v])
            prev = int(host.parent[v])
            for j in range(1, m):
                g = len(edge_of)
                edge_of.append(v)
                offset_of.append(float(host.length[v] * j / m))
                edges.append((prev, g))
                prev = g
            edges.append((prev, v))
        self.edge_of = np.asarray(edge_of, dtype=np.int64)
        self.offset_of = np.asarray(offset_of)
        self.offset_of[0] = 0.0
        self._finish(edges)
        self.root_grid = self
        self.root_ids = np.arange(self.n)

    def _finish(self, edges):
        self.edges = edges
        n = len(self.edge_of)
        self.n = n
        deg = np.zeros(n, dtype=np.int64)
        for a, b in edges:
            deg[a] += 1
            deg[b] += 1
        self.degree = deg
        offsets = np.zeros(n + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(deg)
        fill = offsets[:-1].copy()
        targets = np.empty(offsets[-1], dtype=np.int64)
        for a, b in edges:
            targets[fill[a]] = b
            fill[a] += 1
            targets[fill[b]] = a
            fill[b] += 1
        self.offsets = offsets
        self.targets = targets
        # lumped length measure: half of each incident cell
        self.lam = self.h * deg / 2.0

    @property
    def total_length(self):
        return self.h * len(self.edges)

    def restrict(self, node_mask):
        """Sub-grid on the host edges flagged in ``node_mask`` (plus the root)."""
        node_mask = np.asarray(node_mask, dtype=bool)
        keep = node_mask[self.edge_of] | (np.arange(self.n) == 0)
        ids = np.flatnonzero(keep)
        new = {int(g): i for i, g in enumerate(ids)}
        sub = object.__new__(GridTree)
        sub.host = self.host
        sub.h = self.h
        sub.cells = np.where(node_mask, self.cells, 0)
        sub.edge_of = self.edge_of[ids]
        sub.offset_of = self.offset_of[ids]
        sub._finish([(new[a], new[b]) for a, b in self.edges if keep[a] and keep[b]])
        sub.root_grid = self.root_grid
        sub.root_ids = self.root_ids[ids]
        return sub

    def restrict_to_labels(self, k):
        return self.restrict(self.host.span_mask(k))

    def index_in_root(self):
        """Map from root-grid ids to ids in this grid (-1 when absent)."""
        out = np.full(self.root_grid.n, -1, dtype=np.int64)
        out[self.root_ids] = np.arange(self.n)
        return out

    def point(self, g):
        e = int(self.edge_of[g])
        return ROOT if e == 0 else TreePoint(e, float(self.offset_of[g]))

    def vertex_at(self, p, tol=1e-9):
        """Grid vertex sitting exactly at ``p`` (raises when ``p`` is off-grid)."""
        p = self.host.canonical(p)
        if p.edge == 0:
            return 0
        m = self.cells[p.edge]
        j = p.offset * m / self.host.length[p.edge]
        if abs(j - round(j)) > tol * max(1, m):
            raise ValueError(f"{p} is not a grid point at spacing {self.h}")
        return self.nearest_vertex(p)

    def nearest_vertex(self, p):
        p = self.host.canonical(p)
        if p.edge == 0:
            return 0
        e = p.edge
        m = int(self.cells[e])
        j = int(round(p.offset * m / self.host.length[e]))
        if j <= 0:
            return self.nearest_vertex(self.host.node_point(int(self.host.parent[e])))
        if j >= m:
            return e
        hit = np.flatnonzero((self.edge_of == e) & (np.abs(self.offset_of - self.host.length[e] * j / m) < 1e-12 * max(1.0, self.host.length[e])))
        return int(hit[0])

    def measure_weights(self, measure):
        """Per-vertex masses of an :class:`~crtwalk.metric_tree.EdgeMeasure`.

        Atoms move to the nearest grid vertex on their edge; densities are
        lumped, each cell sending half its mass to either end.
        """
        out = np.zeros(self.n)
        idx = self.index_in_root()
        for e, o, m in zip(measure.atom_edge, measure.atom_offset, measure.atom_mass):
            g = self.root_grid.nearest_vertex(TreePoint(int(e), float(o)))
            if idx[g] < 0:
                raise ValueError("measure charges a point outside this grid")
            out[idx[g]] += m
        for a, b in self.edges:
            e = int(self.edge_of[b])  # the lower end always lies on the cell's edge
            mass = measure.density[e] * self.host.length[e] / self.host_cells(e)
            out[a] += mass / 2
            out[b] += mass / 2
        return out

    def host_cells(self, e):
        return int(self.root_grid.cells[e])


@dataclass
class DiffusionPath:
    """Visited grid vertices and the time spent at each visit (length clock).

    ``base``/``base_index`` point back to the untraced path when this path
    is a trace; tracing always starts again from ``base``.
    """

    grid: GridTree
    vertices: np.ndarray
    dwell: np.ndarray
    seed: int
    base: "DiffusionPath | None" = field(default=None, repr=False)
    base_index: np.ndarray | None = field(default=None, repr=False)

    def times(self, clock="length"):
        """Start time of each visit, plus the end time of the last one."""
        t = np.concatenate([[0.0], np.cumsum(self.dwell)])
        return t if clock == "length" else t / self.grid.total_length

    def position_at(self, t, clock="length"):
        knots = self.times(clock)
        i = np.searchsorted(knots, t, side="right") - 1
        return self.vertices[np.clip(i, 0, len(self.vertices) - 1)]


_EXIT_TABLE = None


def bm_exit_time_quantiles(size=1 << 14):
    """Quantile table of the exit time of standard Brownian motion from (-1, 1)."""
    global _EXIT_TABLE
    if _EXIT_TABLE is not None and _EXIT_TABLE.shape[0] == size + 1:
        return _EXIT_TABLE
    t = np.concatenate([np.linspace(1e-4, 0.2, 4000), np.linspace(0.2, 40.0, 40000)[1:]])
    k = np.arange(0, 400)[:, None]
    series = ((-1.0) ** k / (2 * k + 1) * np.exp(-((2 * k + 1) ** 2) * np.pi ** 2 * t / 8)).sum(0)
    survival = np.clip(4 / np.pi * series, 0.0, 1.0)
    cdf = np.maximum.accumulate(1.0 - survival)
    u = np.linspace(0.0, 1.0, size + 1)
    q = np.interp(u, cdf, t)
    q[0] = 0.0
    # the tail is exponential with rate pi^2/8; size the top cell so its mean excess matches
    q[-1] = q[-2] + 16 / np.pi ** 2
    _EXIT_TABLE = q
    return q


def grid_bm(T, h, horizon, seed, clock="length", timing="constant", start=None, allow_coarse=False, grid=None):
    """Grid Brownian motion on ``T`` started at ``start`` (default: root).

    ``horizon`` is measured in ``clock``. With ``timing="hitting"`` each step
    lasts ``h**2`` times an independent exit time of standard Brownian motion
    from (-1, 1), which has mean 1.
    """
    if clock not in CLOCKS:
        raise ValueError(f"clock must be one of {CLOCKS}")
    G = grid if grid is not None else GridTree(T, h, allow_coarse=allow_coarse)
    scale = 1.0 if clock == "length" else G.total_length
    steps = int(math.ceil(horizon * scale / G.h ** 2))
    v0 = 0 if start is None else G.vertex_at(start)
    verts = _kernels.walk_path(G.offsets, G.targets, v0, steps, int(seed) & 0xFFFFFFFF)
    if timing == "constant":
        dwell = np.full(steps + 1, G.h ** 2)
    elif timing == "hitting":
        rng = make_rng(seed, 1)
        table = bm_exit_time_quantiles()
        u = rng.random(steps + 1) * (len(table) - 1)
        j = u.astype(np.int64)
        dwell = G.h ** 2 * (table[j] + (u - j) * (table[j + 1] - table[j]))
    else:
        raise ValueError(f"unknown timing {timing!r}")
    return DiffusionPath(G, verts, dwell, int(seed))


# ---------------------------------------------------------------- property checks


@dataclass
class Estimate:
    value: float
    se: float
    replicas: int


def hitting_prob_estimate(T, z, x, y, h, replicas, seed, grid=None):
    """Monte Carlo ``P_z(hit x before y)`` for the grid walk."""
    G = grid if grid is not None else GridTree(T, h)
    gz, gx, gy = G.vertex_at(z), G.vertex_at(x), G.vertex_at(y)
    if gx == gy:
        raise ValueError("x and y must differ")
    stop = np.zeros(G.n, dtype=np.bool_)
    stop[[gx, gy]] = True
    seeds = replica_seeds(seed, replicas)
    _, where = _kernels.hitting_times(G.offsets, G.targets, gz, stop, seeds, 10 ** 12)
    p = float(np.mean(where == gx))
    return Estimate(p, math.sqrt(max(p * (1 - p), 1e-300) / replicas), replicas)


def hitting_prob_formula(T, z, x, y):
    """``d(b(z, x, y), y) / d(x, y)`` with ``b`` the branch point."""
    dxy = T.distance(x, y)
    dby = 0.5 * (T.distance(z, y) + dxy - T.distance(z, x))
    return dby / dxy


def grid_chain_hitting_probability(G, z, x, y):
    """Exact hitting probability of the grid chain (sparse linear solve)."""
    from .oracles import LinearSystemOracle

    chain = LinearSystemOracle.simple_walk(G.n, G.edges, exact=False)
    return chain.hit_probabilities([G.vertex_at(x)], [G.vertex_at(y)])[G.vertex_at(z)]


def occupation_quadrature(T, nu, x, y):
    """``integral of 2 d(b(z, x, y), y) nu(dz)`` computed edge by edge.

    The integrand is linear between the edge ends and the offsets of ``x``
    and ``y``, so the trapezoid rule on those pieces is exact.
    """
    def f(p):
        dxy = T.distance(x, y)
        return 0.5 * (T.distance(p, y) + dxy - T.distance(p, x))

    total = 0.0
    for e, o, m in zip(nu.atom_edge, nu.atom_offset, nu.atom_mass):
        total += 2 * m * f(TreePoint(int(e), float(o)))
    for v in range(1, T.n_nodes):
        if nu.density[v] == 0:
            continue
        L = T.length[v]
        cuts = {0.0, L}
        for p in (T.canonical(x), T.canonical(y)):
            if p.edge == v:
                cuts.add(p.offset)
        cuts = sorted(cuts)
        for a, b in zip(cuts[:-1], cuts[1:]):
            fa = f(TreePoint(v, a))
            fb = f(TreePoint(v, b))
            total += 2 * nu.density[v] * 0.5 * (fa + fb) * (b - a)
    return total


def occupation_density_check(T, nu, x, y, h, replicas, seed, grid=None):
    """Empirical ``E_x[sigma_y]`` in the clock of ``nu`` and its quadrature.

    The walk's clock is the additive functional that spends
    ``h**2 * nu(v) / lambda(v)`` at each visit to grid vertex ``v``
    (``nu`` and the length measure ``lambda`` both lumped on the grid); for
    ``nu`` the length measure this is ``h**2`` per step.
    Returns ``(Estimate, quadrature)``.
    """
    G = grid if grid is not None else GridTree(T, h)
    gx, gy = G.vertex_at(x), G.vertex_at(y)
    quad = occupation_quadrature(T, nu, x, y)
    if gx == gy:
        return Estimate(0.0, 0.0, replicas), quad
    weight = G.h ** 2 * G.measure_weights(nu) / G.lam
    stop = np.zeros(G.n, dtype=np.bool_)
    stop[gy] = True
    seeds = replica_seeds(seed, replicas)
    vals = _kernels.additive_until_hit(G.offsets, G.targets, gx, stop, weight, seeds, 10 ** 12)
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicas)), replicas), quad


# ---------------------------------------------------------------- local times


@dataclass
class GridLocalTimes:
    """Local times ``L(v) = (time spent at v) / lambda(v)`` on a grid."""

    grid: GridTree
    occupation: np.ndarray  # visit counts
    time_at: np.ndarray  # length-clock time spent at each vertex
    local: np.ndarray

    def occupation_identity(self):
        """``sum_v L(v) lambda(v)`` (equals the elapsed length-clock time)."""
        return float(np.sum(self.local * self.grid.lam))


def grid_local_times(p, upto=None):
    """Local times of ``p`` over its first ``upto`` visits (default: all).

    For an untraced path this is ``h * visits / (deg / 2)``.
    """
    G = p.grid
    m = len(p.vertices) if upto is None else int(upto)
    verts = p.vertices[:m]
    occ = np.bincount(verts, minlength=G.n)
    spent = np.bincount(verts, weights=p.dwell[:m], minlength=G.n)
    return GridLocalTimes(G, occ, spent, spent / G.lam)


@dataclass
class AHatCurve:
    times: np.ndarray
    values: np.ndarray
    clock: str

    def sup_deviation(self, t_max=1.0):
        """``sup_{t <= t_max} |A_hat_t - t|`` (both are linear between knots)."""
        t, a = self.times, self.values
        if t[-1] < t_max:
            raise ValueError(f"curve ends at {t[-1]:.4g} < {t_max} ({self.clock} clock)")
        j = np.searchsorted(t, t_max, side="right")
        a_end = np.interp(t_max, t, a)
        dev = np.abs(a[:j] - t[:j])
        return float(max(dev.max(), abs(a_end - t_max)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "value", "clock"])
            for t, v in zip(self.times, self.values):
                wr.writerow([f"{t:.17g}", f"{v:.17g}", self.clock])


def a_hat_limit(p, mu_weights, clock="normalized"):
    """``A_hat_t = integral of L_t d mu`` along the path.

    ``mu_weights`` are per-grid-vertex masses (see
    :meth:`GridTree.measure_weights`). Local times are clock-free, so only
    the time axis changes with ``clock``.
    """
    G = p.grid
    rate = np.asarray(mu_weights)[p.vertices] / G.lam[p.vertices]
    values = np.concatenate([[0.0], np.cumsum(p.dwell * rate)])
    return AHatCurve(p.times(clock), values, clock)


def trace_on_subtree(p, sub_grid):
    """Trace of ``p`` on a sub-grid (time runs only while on the sub-grid).

    The clock is ``A = integral of L d lambda_sub``: a visit to ``v`` lasting
    ``s`` on the host contributes ``s * lambda_sub(v) / lambda_host(v)``.
    """
    base = p.base if p.base is not None else p
    B = base.grid
    if sub_grid.root_grid is not B.root_grid:
        raise ValueError("sub-grid must come from the same root grid")
    to_sub = sub_grid.index_in_root()[B.root_ids[base.vertices]]
    keep = np.flatnonzero(to_sub >= 0)
    verts = to_sub[keep]
    host_lam = B.lam[base.vertices[keep]]
    dwell = base.dwell[keep] * (sub_grid.lam[verts] / host_lam)
    return DiffusionPath(sub_grid, verts, dwell, base.seed, base=base, base_index=keep)
