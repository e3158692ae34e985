"""Ordered graph trees, their search-depth encoding, conditioned Galton-Watson
sampling, vertex selection through ``gamma_n`` and reduced subtrees.

Vertices are numbered in depth-first preorder, so vertex 0 is the root and
``parent[v] < v`` for every other vertex.

Search-depth convention: the depth-first walk around a tree with ``n``
vertices crosses each edge twice, giving ``2(n - 1)`` unit steps. The array
returned by :func:`contour_and_depth` holds the ``2n - 1`` depths of that walk
followed by two padding zeros (the root), so it has ``2n + 1`` entries indexed
by the grid ``{i / 2n}``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._seeding import make_rng


class OrderedTree:
    """Rooted plane tree in preorder numbering.

    Parameters
    ----------
    parent : sequence of int
        ``parent[0] == -1`` and ``parent[v] < v`` for ``v > 0``. Children of
        a vertex are ordered by increasing index.
    """

    def __init__(self, parent):
        parent = np.asarray(parent, dtype=np.int64)
        if parent.ndim != 1 or parent.shape[0] < 1:
            raise ValueError("parent array must be a nonempty 1-D sequence")
        if parent[0] != -1:
            raise ValueError("vertex 0 must be the root (parent -1)")
        n = parent.shape[0]
        if n > 1:
            rest = parent[1:]
            if np.any(rest < 0) or np.any(rest >= np.arange(1, n)):
                raise ValueError("parent[v] must satisfy 0 <= parent[v] < v")
        depth = np.zeros(n, dtype=np.int64)
        for v in range(1, n):
            depth[v] = depth[parent[v]] + 1
        # preorder: each vertex's parent is the deepest open ancestor
        stack = [0]
        for v in range(1, n):
            while stack[-1] != parent[v]:
                stack.pop()
                if not stack:
                    raise ValueError("parent array is not in depth-first preorder")
            stack.append(v)
        parent.setflags(write=False)
        depth.setflags(write=False)
        self.parent = parent
        self.depth = depth
        self.n = n
        counts = np.bincount(parent[1:], minlength=n) if n > 1 else np.zeros(1, np.int64)
        self.child_counts = counts
        children = [[] for _ in range(n)]
        for v in range(1, n):
            children[parent[v]].append(v)
        self.children = [tuple(c) for c in children]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        return isinstance(other, OrderedTree) and np.array_equal(self.parent, other.parent)

    def __hash__(self):
        return hash(self.parent.tobytes())

    def __repr__(self):
        return f"OrderedTree(n={self.n})"

    @property
    def degree(self):
        deg = self.child_counts.copy()
        deg[1:] += 1
        return deg

    @property
    def height(self):
        return int(self.depth.max())

    def neighbors_csr(self):
        """``(offsets, targets)`` adjacency with parent first, then children."""
        deg = self.degree
        offsets = np.zeros(self.n + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(deg)
        targets = np.empty(offsets[-1], dtype=np.int64)
        for v in range(self.n):
            pos = offsets[v]
            if v:
                targets[pos] = self.parent[v]
                pos += 1
            kids = self.children[v]
            targets[pos: pos + len(kids)] = kids
        return offsets, targets

    def ancestors(self, v):
        path = [v]
        while v:
            v = int(self.parent[v])
            path.append(v)
        return path

    def distance(self, x, y):
        ax = set(self.ancestors(x))
        a = y
        while a not in ax:
            a = int(self.parent[a])
        return int(self.depth[x] + self.depth[y] - 2 * self.depth[a])

    def digest(self):
        return hashlib.sha256(self.parent.astype("<i8").tobytes()).hexdigest()

    def to_json(self):
        return json.dumps({"parent": [int(p) for p in self.parent]})

    @classmethod
    def from_json(cls, text):
        return cls(json.loads(text)["parent"])


def from_child_counts(counts):
    """Tree whose preorder child counts are ``counts`` (a Lukasiewicz word)."""
    counts = np.asarray(counts, dtype=np.int64)
    n = counts.shape[0]
    if counts.sum() != n - 1:
        raise ValueError("child counts must sum to n - 1")
    parent = np.full(n, -1, dtype=np.int64)
    remaining = counts.copy()
    open_slots = [0] if counts[0] > 0 else []
    for v in range(1, n):
        if not open_slots:
            raise ValueError("child counts do not form a tree in preorder")
        p = open_slots[-1]
        parent[v] = p
        remaining[p] -= 1
        if remaining[p] == 0:
            open_slots.pop()
        if counts[v] > 0:
            open_slots.append(v)
    return OrderedTree(parent)


def contour_vertices(t):
    """Vertex sequence of the depth-first walk, padded with the root to length 2n+1."""
    seq = [0]
    stack = [(0, iter(t.children[0]))]
    while stack:
        v, it = stack[-1]
        child = next(it, None)
        if child is None:
            stack.pop()
            if stack:
                seq.append(stack[-1][0])
        else:
            seq.append(child)
            stack.append((child, iter(t.children[child])))
    seq.extend([0, 0])
    return np.asarray(seq, dtype=np.int64)


def contour_and_depth(t):
    """Search-depth array of length ``2n + 1`` (see module docstring)."""
    return t.depth[contour_vertices(t)]


def tree_from_depth(w):
    """Inverse of :func:`contour_and_depth`."""
    w = np.asarray(w)
    if w.ndim != 1 or w.shape[0] < 3 or w.shape[0] % 2 == 0:
        raise ValueError("search-depth array must have odd length 2n+1 >= 3")
    if not np.all(w == np.rint(w)):
        raise ValueError("search-depth values must be integers")
    w = w.astype(np.int64)
    n = (w.shape[0] - 1) // 2
    walk = w[: 2 * n - 1]
    if w[0] != 0 or walk[-1] != 0 or w[-2] != 0 or w[-1] != 0:
        raise ValueError("search-depth array must start at 0 and end with root padding")
    steps = np.diff(walk)
    if np.any(np.abs(steps) != 1):
        raise ValueError("depth-first walk must move by +-1 at each step")
    if np.any(walk < 0):
        raise ValueError("depths must be nonnegative")
    parent = [-1]
    path = [0]
    for s in steps:
        if s > 0:
            v = len(parent)
            parent.append(path[-1])
            path.append(v)
        else:
            path.pop()
    return OrderedTree(parent)


def enumerate_ordered_trees(n):
    """All ordered trees with ``n`` vertices (Catalan(n-1) of them)."""
    if n < 1:
        raise ValueError("n must be positive")
    m = n - 1
    for ups in itertools.combinations(range(2 * m), m):
        steps = -np.ones(2 * m, dtype=np.int64)
        steps[list(ups)] = 1
        walk = np.concatenate([[0], np.cumsum(steps)])
        if np.all(walk >= 0):
            yield tree_from_depth(np.concatenate([walk, [0, 0]]))


# ---------------------------------------------------------------- offspring laws


@dataclass(frozen=True)
class Offspring:
    """Offspring distribution parsed from a spec string.

    Accepted forms: ``geometric:p`` (``P(k) = (1-p)^k p``), ``poisson:m``,
    ``binomial:r:p`` and ``pmf:p0,p1,...``.
    """

    kind: str
    params: tuple

    @classmethod
    def parse(cls, spec):
        if isinstance(spec, Offspring):
            return spec
        name, _, rest = spec.partition(":")
        name = name.strip().lower()
        if name == "geometric":
            p = float(rest) if rest else 0.5
            if not 0 < p <= 1:
                raise ValueError("geometric parameter must lie in (0, 1]")
            return cls("geometric", (p,))
        if name == "poisson":
            m = float(rest) if rest else 1.0
            if m <= 0:
                raise ValueError("poisson mean must be positive")
            return cls("poisson", (m,))
        if name == "binomial":
            r, p = rest.split(":")
            return cls("binomial", (int(r), float(p)))
        if name == "pmf":
            probs = tuple(float(x) for x in rest.split(","))
            if any(p < 0 for p in probs) or not math.isclose(sum(probs), 1.0, abs_tol=1e-9):
                raise ValueError("pmf must be nonnegative and sum to 1")
            return cls("pmf", probs)
        raise ValueError(f"unknown offspring law {spec!r}")

    def pmf(self, k):
        if self.kind == "geometric":
            (p,) = self.params
            return (1 - p) ** k * p
        if self.kind == "poisson":
            (m,) = self.params
            return math.exp(-m) * m ** k / math.factorial(k)
        if self.kind == "binomial":
            r, p = self.params
            return math.comb(r, k) * p ** k * (1 - p) ** (r - k) if k <= r else 0.0
        probs = self.params
        return probs[k] if k < len(probs) else 0.0

    def pmf_exact(self, k):
        """Exact weight for rational-friendly laws (used by oracles)."""
        if self.kind == "geometric":
            p = Fraction(self.params[0]).limit_denominator(10 ** 9)
            return (1 - p) ** k * p
        if self.kind == "poisson":
            # the common exp(-m) factor cancels after conditioning
            m = Fraction(self.params[0]).limit_denominator(10 ** 9)
            return m ** k / math.factorial(k)
        if self.kind == "binomial":
            r, p = self.params
            p = Fraction(p).limit_denominator(10 ** 9)
            return math.comb(r, k) * p ** k * (1 - p) ** (r - k) if k <= r else Fraction(0)
        probs = self.params
        return Fraction(probs[k]).limit_denominator(10 ** 9) if k < len(probs) else Fraction(0)

    def sample(self, rng, size):
        if self.kind == "geometric":
            return rng.geometric(self.params[0], size) - 1
        if self.kind == "poisson":
            return rng.poisson(self.params[0], size)
        if self.kind == "binomial":
            return rng.binomial(self.params[0], self.params[1], size)
        return rng.choice(len(self.params), size=size, p=np.asarray(self.params))


def _counts_with_sum(law, n, rng, max_attempts):
    total = n - 1
    if law.kind == "geometric":
        # given the sum, iid geometrics are uniform over compositions
        bars = np.sort(rng.choice(total + n - 1, size=n - 1, replace=False))
        edges = np.concatenate([[-1], bars, [total + n - 1]])
        return np.diff(edges) - 1
    if law.kind == "poisson":
        return rng.multinomial(total, np.full(n, 1.0 / n))
    if law.kind == "binomial":
        r, _ = law.params
        if total > r * n:
            raise ValueError("binomial offspring cannot reach this total progeny")
        return rng.multivariate_hypergeometric(np.full(n, r), total)
    for _ in range(max_attempts):
        counts = law.sample(rng, n)
        if counts.sum() == total:
            return counts
    raise RuntimeError(
        f"rejection budget of {max_attempts} draws exhausted for n={n}; "
        "offspring law rarely produces this total progeny"
    )


def cycle_lemma_rotation(counts):
    """Rotate child counts so that they form a valid Lukasiewicz word."""
    counts = np.asarray(counts, dtype=np.int64)
    partial = np.cumsum(counts - 1)
    start = int(np.argmin(partial)) + 1
    return np.roll(counts, -start)


def sample_gw_conditioned(offspring, n, seed, max_attempts=100_000):
    """Galton-Watson tree conditioned to have exactly ``n`` vertices.

    Offspring counts are drawn iid conditioned on summing to ``n - 1`` (exact
    for geometric, Poisson and binomial laws, rejection otherwise), then the
    cyclic rotation picked by the cycle lemma turns them into a tree.
    """
    if n < 1:
        raise ValueError("tree size must be positive")
    law = Offspring.parse(offspring)
    if n == 1:
        if law.pmf(0) == 0:
            raise ValueError("offspring law has no mass at 0")
        return OrderedTree([-1])
    rng = make_rng(seed)
    counts = _counts_with_sum(law, n, rng, max_attempts)
    return from_child_counts(cycle_lemma_rotation(counts))


# ---------------------------------------------------------------- vertex selection


def gamma_n(w, t):
    """Grid index picked by ``gamma_n`` for time ``t`` in [0, 1].

    Of the two grid points bracketing ``t``, the one carrying the larger
    depth wins; ties go to the left point. Returns the index ``i`` of the
    grid time ``i / 2n``. ``t`` may be a :class:`fractions.Fraction`.
    """
    w = np.asarray(w)
    two_n = w.shape[0] - 1
    if not 0 <= t <= 1:
        raise ValueError(f"time {t} outside [0, 1]")
    lo = math.floor(t * two_n)
    hi = math.ceil(t * two_n)
    return lo if w[lo] >= w[hi] else hi


def gamma_n_array(w, t):
    w = np.asarray(w)
    two_n = w.shape[0] - 1
    t = np.asarray(t, dtype=float)
    lo = np.floor(t * two_n).astype(np.int64)
    hi = np.ceil(t * two_n).astype(np.int64)
    return np.where(w[lo] >= w[hi], lo, hi)


def select_vertices(t, w, u):
    """Vertices ``contour[gamma_n(u_i)]``; repeats allowed."""
    seq = contour_vertices(t)
    if w is None:
        w = t.depth[seq]
    idx = gamma_n_array(w, u)
    return [int(v) for v in seq[idx]]


def gamma_law_exact(t):
    """Exact law of the selected vertex when ``u`` is uniform on [0, 1].

    ``gamma_n`` is constant on each open cell ``(i/2n, (i+1)/2n)``, so
    evaluating it at cell midpoints and weighting each cell by ``1/2n``
    integrates the law exactly. Returns ``{vertex: Fraction}``.
    """
    seq = contour_vertices(t)
    w = t.depth[seq]
    two_n = len(seq) - 1
    law = {v: Fraction(0) for v in range(t.n)}
    for i in range(two_n):
        mid = Fraction(2 * i + 1, 2 * two_n)
        law[int(seq[gamma_n(w, mid)])] += Fraction(1, two_n)
    return law


# ---------------------------------------------------------------- reduced subtrees


class DiscreteSubtree:
    """Union of the root paths of selected vertices.

    Attributes
    ----------
    host : OrderedTree
    mask : bool array marking subtree vertices
    leaves : list of selected vertices, in selection order (repeats kept)
    degree : per-host-vertex degree inside the subtree (0 off the subtree)
    """

    def __init__(self, host, vertices):
        self.host = host
        self.leaves = [int(v) for v in vertices]
        mask = np.zeros(host.n, dtype=bool)
        mask[0] = True
        for v in self.leaves:
            if not 0 <= v < host.n:
                raise ValueError(f"vertex {v} not in host tree")
            while not mask[v]:
                mask[v] = True
                v = int(host.parent[v])
        self.mask = mask
        self.vertices = np.flatnonzero(mask)
        deg = np.zeros(host.n, dtype=np.int64)
        inner = self.vertices[1:]
        np.add.at(deg, host.parent[inner], 1)
        deg[inner] += 1
        self.degree = deg
        # nearest subtree ancestor, filled in preorder
        proj = np.empty(host.n, dtype=np.int64)
        proj[0] = 0
        for v in range(1, host.n):
            proj[v] = v if mask[v] else proj[host.parent[v]]
        self.projection = proj

    def __len__(self):
        return len(self.vertices)

    @property
    def edge_count(self):
        return len(self.vertices) - 1


def reduced_subtree(t, vertices):
    return DiscreteSubtree(t, vertices)


def project_vertex(t, sub, x):
    """Closest subtree vertex on the path from ``x`` to the root."""
    return int(sub.projection[x])


def delta_nk(t, sub):
    """Largest graph distance from a vertex to its projection."""
    return int(np.max(t.depth - t.depth[sub.projection]))


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite measure with atoms on host vertices."""

    support: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=np.int64)
        m = np.asarray(self.mass, dtype=float)
        if s.shape != m.shape:
            raise ValueError("support and mass must have equal length")
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "mass", m)

    @property
    def total(self):
        return float(self.mass.sum())

    def as_array(self, n):
        out = np.zeros(n)
        np.add.at(out, self.support, self.mass)
        return out

    def of(self, v):
        return float(self.mass[self.support == v].sum())


def uniform_measure(t):
    return AtomicMeasure(np.arange(t.n), np.full(t.n, 1.0 / t.n))


def pushforward_measure(mu, sub, phi=None):
    """Image of ``mu`` under the projection onto ``sub`` (or a given vertex map)."""
    proj = sub.projection if phi is None else np.asarray(phi)
    dense = np.zeros(sub.host.n)
    np.add.at(dense, proj[mu.support], mu.mass)
    support = sub.vertices
    return AtomicMeasure(support, dense[support])


def projected_counts(sub):
    """Number of host vertices projecting to each vertex (``n * mu_n^{(k)}``)."""
    return np.bincount(sub.projection, minlength=sub.host.n)
