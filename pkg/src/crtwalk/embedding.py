"""Isometric embedding of trees into l1 and distances between embedded objects.

Branches are added one at a time, each along a fresh coordinate axis: the
point at distance ``s`` along the branch leading to label ``i`` is sent to
``psi(attachment point) + s * z_i``. Coordinates are 0-based here, so label
``i`` (0-based) owns axis ``i``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial import cKDTree


class SparseVector:
    """Finitely supported vector of l1 with integer coordinate indices."""

    __slots__ = ("_data",)

    def __init__(self, pairs=()):
        data = {}
        for i, v in (pairs.items() if isinstance(pairs, dict) else pairs):
            i = int(i)
            if i in data:
                raise ValueError(f"duplicate coordinate {i}")
            if v != 0:
                data[i] = float(v)
        self._data = data

    @classmethod
    def from_dense(cls, x):
        return cls((i, v) for i, v in enumerate(np.asarray(x)) if v != 0)

    def items(self):
        return sorted(self._data.items())

    def to_dense(self, dim):
        out = np.zeros(dim)
        for i, v in self._data.items():
            out[i] = v
        return out

    def norm(self):
        return math.fsum(abs(v) for v in self._data.values())

    def __sub__(self, other):
        keys = set(self._data) | set(other._data)
        return SparseVector((i, self._data.get(i, 0.0) - other._data.get(i, 0.0)) for i in keys)

    def __eq__(self, other):
        return isinstance(other, SparseVector) and self._data == other._data

    def __repr__(self):
        return f"SparseVector({self.items()})"


class TreeEmbedding:
    """The map ``psi`` for a :class:`~crtwalk.metric_tree.MetricTree`."""

    def __init__(self, tree):
        self.tree = tree
        n = tree.n_nodes
        branch = np.full(n, -1, dtype=np.int64)
        for i, leaf in enumerate(tree.leaf_nodes):
            v = int(leaf)
            while v and branch[v] < 0:
                branch[v] = i
                v = int(tree.parent[v])
        self.branch = branch
        self.dim = max(tree.k, 1)
        nodes = np.zeros((n, self.dim))
        for v in range(1, n):
            nodes[v] = nodes[tree.parent[v]]
            nodes[v, branch[v]] += tree.length[v]
        self.nodes = nodes

    def __call__(self, p):
        """Dense coordinates of a :class:`TreePoint`."""
        if p.edge == 0:
            return np.zeros(self.dim)
        out = self.nodes[self.tree.parent[p.edge]].copy()
        out[self.branch[p.edge]] += p.offset
        return out

    def sparse(self, p):
        return SparseVector.from_dense(self(p))

    def cloud(self, points):
        return np.array([self(p) for p in points]).reshape(len(points), self.dim)


def sequential_embed(tree):
    return TreeEmbedding(tree)


def embed_vertices(t, sequence):
    """l1 coordinates of the vertices of an ordered tree.

    Vertices of the root paths of ``sequence`` receive coordinates; the
    branch to ``sequence[i]`` runs along axis ``i``. Returns ``(vertices,
    coords)``; pass a sequence hitting every leaf to embed the whole tree.
    """
    claim = np.full(t.n, -1, dtype=np.int64)
    claim[0] = -2
    for i, v in enumerate(sequence):
        v = int(v)
        while claim[v] == -1:
            claim[v] = i
            v = int(t.parent[v])
    dim = max(len(sequence), 1)
    verts = np.flatnonzero(claim != -1)
    coords = np.zeros((t.n, dim))
    for v in verts[1:]:
        coords[v] = coords[t.parent[v]]
        coords[v, claim[v]] += 1.0
    return verts, coords[verts]


@dataclass
class EmbeddedTriple:
    """Embedded tree, measure and sampled paths.

    ``cloud`` is ``(P, K)``, ``mass`` is ``(P,)``; each path is a ``(T, K)``
    array sampled at ``times`` (integer steps before rescaling).
    """

    cloud: np.ndarray
    mass: np.ndarray
    paths: list = field(default_factory=list)
    times: np.ndarray | None = None

    def __post_init__(self):
        self.cloud = np.atleast_2d(np.asarray(self.cloud, dtype=float))
        self.mass = np.asarray(self.mass, dtype=float)
        if self.mass.shape[0] != self.cloud.shape[0]:
            raise ValueError("one mass per cloud point required")
        if not math.isclose(self.mass.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("measure masses must sum to 1")
        for p in self.paths:
            if np.any(p[0] != 0):
                raise ValueError("paths must start at the origin")


def theta_rescale(n, e, grid=None):
    """Scale space by ``n^{-1/2}`` and time by ``n^{3/2}``.

    Paths are read at times ``t n^{3/2}`` for ``t`` in ``grid`` (default 101
    points on [0, 1]) with linear interpolation between integer steps.
    """
    grid = np.linspace(0.0, 1.0, 101) if grid is None else np.asarray(grid, dtype=float)
    s = n ** -0.5
    horizon = n ** 1.5
    paths = []
    times = np.arange(e.paths[0].shape[0]) if e.times is None and e.paths else e.times
    for p in e.paths:
        if times[-1] < horizon * grid[-1] - 1e-9:
            raise ValueError(
                f"path covers {times[-1]} steps; rescaling at n={n} needs "
                f"{math.ceil(horizon * grid[-1])}"
            )
        at = grid * horizon
        cols = [np.interp(at, times, p[:, j]) for j in range(p.shape[1])]
        paths.append(s * np.stack(cols, axis=1))
    return EmbeddedTriple(s * e.cloud, e.mass.copy(), paths, grid)


def hausdorff_l1(A, B):
    """Hausdorff distance between finite point clouds under the l1 norm."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("empty cloud")
    dim = max(A.shape[1], B.shape[1])
    A = np.pad(A, ((0, 0), (0, dim - A.shape[1])))
    B = np.pad(B, ((0, 0), (0, dim - B.shape[1])))
    dab = cKDTree(B).query(A, p=1)[0].max()
    dba = cKDTree(A).query(B, p=1)[0].max()
    return float(max(dab, dba))


def wasserstein_l1(xa, ma, xb, mb):
    """Wasserstein-1 distance between weighted clouds with l1 ground cost.

    Solved as a transport linear program; used as the surrogate for the
    Prohorov distance between embedded measures.
    """
    xa = np.atleast_2d(np.asarray(xa, float))
    xb = np.atleast_2d(np.asarray(xb, float))
    ma = np.asarray(ma, float)
    mb = np.asarray(mb, float)
    dim = max(xa.shape[1], xb.shape[1])
    xa = np.pad(xa, ((0, 0), (0, dim - xa.shape[1])))
    xb = np.pad(xb, ((0, 0), (0, dim - xb.shape[1])))
    ma = ma / ma.sum()
    mb = mb / mb.sum()
    na, nb = len(ma), len(mb)
    cost = np.abs(xa[:, None, :] - xb[None, :, :]).sum(axis=2).ravel()
    rows = sparse.kron(sparse.eye(na), np.ones((1, nb)))
    cols = sparse.kron(np.ones((1, na)), sparse.eye(nb))
    A_eq = sparse.vstack([rows, cols]).tocsr()
    b_eq = np.concatenate([ma, mb])
    res = linprog(cost, A_eq=A_eq[:-1], b_eq=b_eq[:-1], bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def prohorov_proxy(mu, nu):
    """W1 surrogate between two :class:`EmbeddedTriple` measures."""
    return wasserstein_l1(mu.cloud, mu.mass, nu.cloud, nu.mass)


def path_sup_distance(p, q):
    """Largest l1 distance between two paths sampled on the same time grid."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if p.shape[0] != q.shape[0]:
        raise ValueError("paths must share a time grid")
    dim = max(p.shape[1], q.shape[1])
    p = np.pad(p, ((0, 0), (0, dim - p.shape[1])))
    q = np.pad(q, ((0, 0), (0, dim - q.shape[1])))
    return float(np.abs(p - q).sum(axis=1).max())


def write_cloud_jsonl(cloud, path):
    """One JSON object per point: ``{"index": i, "value": [[coord, x], ...]}``."""
    with open(path, "w") as fh:
        for i, row in enumerate(np.atleast_2d(cloud)):
            pairs = [[int(j), float(x)] for j, x in enumerate(row) if x != 0]
            fh.write(json.dumps({"index": i, "value": pairs}) + "\n")


def read_cloud_jsonl(path, dim=None):
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    rows.sort(key=lambda r: r["index"])
    vecs = [SparseVector(r["value"]) for r in rows]
    if dim is None:
        dim = 1 + max((i for v in vecs for i, _ in v.items()), default=0)
    return np.array([v.to_dense(dim) for v in vecs])
