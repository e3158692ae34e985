"""Exact first-step-analysis oracles and enumerations.

Chains with rational transition probabilities are solved over the rationals
(sympy's ``DomainMatrix`` over QQ); large chains fall back to sparse floating
point. These routines share no code with the samplers they check.
"""

from __future__ import annotations

import csv
from fractions import Fraction

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from .discrete_tree import Offspring, enumerate_ordered_trees


def _to_fraction(x):
    return Fraction(int(x.numerator), int(x.denominator))


class LinearSystemOracle:
    """Finite Markov chain given by sparse transition rows.

    Parameters
    ----------
    rows : list of dict
        ``rows[i][j]`` is the probability of moving from ``i`` to ``j``.
        Entries are :class:`fractions.Fraction` when ``exact`` is true.
    exact : bool
        Solve over the rationals instead of in floating point.
    """

    def __init__(self, rows, exact=True):
        self.rows = rows
        self.exact = exact
        self.n = len(rows)
        for i, r in enumerate(rows):
            total = sum(r.values())
            ok = total == 1 if exact else abs(total - 1) < 1e-12
            if r and not ok:
                raise ValueError(f"row {i} is not stochastic")

    @classmethod
    def simple_walk(cls, n, edges, exact=True):
        adj = [[] for _ in range(n)]
        for a, b in edges:
            adj[a].append(b)
            adj[b].append(a)
        rows = []
        for nb in adj:
            r = {}
            for j in nb:
                p = Fraction(1, len(nb)) if exact else 1.0 / len(nb)
                r[j] = r.get(j, 0) + p
            rows.append(r)
        return cls(rows, exact)

    def _solve(self, transient, rhs_fn):
        """Solve ``(I - Q) x = b`` on the transient states."""
        idx = {s: i for i, s in enumerate(transient)}
        m = len(transient)
        if self.exact:
            mat = [[QQ(0)] * m for _ in range(m)]
            for s, i in idx.items():
                mat[i][i] += QQ(1)
                for j, p in self.rows[s].items():
                    if j in idx:
                        mat[i][idx[j]] -= QQ(p.numerator, p.denominator)
            rhs = [[QQ(v.numerator, v.denominator)] for v in (Fraction(rhs_fn(s)) for s in transient)]
            sol = DomainMatrix(mat, (m, m), QQ).lu_solve(DomainMatrix(rhs, (m, 1), QQ))
            col = sol.to_list()
            return {s: _to_fraction(col[i][0]) for s, i in idx.items()}
        r, c, v = [], [], []
        for s, i in idx.items():
            r.append(i)
            c.append(i)
            v.append(1.0)
            for j, p in self.rows[s].items():
                if j in idx:
                    r.append(i)
                    c.append(idx[j])
                    v.append(-p)
        A = sparse.csr_matrix((v, (r, c)), shape=(m, m))
        b = np.array([float(rhs_fn(s)) for s in transient])
        x = np.atleast_1d(spsolve(A.tocsc(), b))
        return {s: float(x[i]) for s, i in idx.items()}

    def _transient(self, targets):
        targets = set(targets)
        return [s for s in range(self.n) if s not in targets]

    def hitting_times(self, targets):
        """Expected hitting time of ``targets`` from every state."""
        targets = set(targets)
        sol = self._solve(self._transient(targets), lambda s: 1)
        zero = Fraction(0) if self.exact else 0.0
        return {s: sol.get(s, zero) for s in range(self.n)}

    def second_moments(self, targets):
        """``E_s[T^2]`` for the hitting time ``T`` of ``targets``.

        From ``T = 1 + T'``: ``(I - Q) m2 = 2 m1 - 1`` on transient states.
        """
        m1 = self.hitting_times(targets)
        targets = set(targets)
        sol = self._solve(self._transient(targets), lambda s: 2 * m1[s] - 1)
        zero = Fraction(0) if self.exact else 0.0
        return {s: sol.get(s, zero) for s in range(self.n)}

    def hit_probabilities(self, a, b):
        """``P_s(hit a before b)`` for every state ``s``."""
        a, b = set(a), set(b)
        if a & b:
            raise ValueError("target sets must be disjoint")
        transient = self._transient(a | b)
        one = Fraction(1) if self.exact else 1.0
        zero = Fraction(0) if self.exact else 0.0

        def rhs(s):
            return sum((p for j, p in self.rows[s].items() if j in a), zero)

        sol = self._solve(transient, rhs)
        out = {}
        for s in range(self.n):
            out[s] = one if s in a else zero if s in b else sol[s]
        return out


def expected_hitting_time(chain, start, targets):
    return chain.hitting_times(targets)[start]


def second_moment_hitting_time(chain, start, targets):
    return chain.second_moments(targets)[start]


def exact_hitting_probability(chain, start, a, b):
    """Probability that the chain started at ``start`` hits ``a`` before ``b``."""
    return chain.hit_probabilities(a, b)[start]


# ---------------------------------------------------------------- exit times


def exit_chain(t, D, exact=True):
    """Walk on ``t`` plus ``D`` pendant root vertices; returns ``(chain, pendants)``."""
    edges = [(int(t.parent[v]), v) for v in range(1, t.n)]
    pend = list(range(t.n, t.n + D))
    edges += [(0, p) for p in pend]
    return LinearSystemOracle.simple_walk(t.n + D, edges, exact), pend


def exit_time_mean(t, D):
    chain, pend = exit_chain(t, D)
    return expected_hitting_time(chain, 0, pend)


def exit_time_second_moment(t, D):
    chain, pend = exit_chain(t, D)
    return second_moment_hitting_time(chain, 0, pend)


def exit_time_formula(size, D):
    """Mean exit time ``(2|T| - 2 + D) / D`` as a fraction."""
    return Fraction(2 * size - 2 + D, D)


def exit_second_moment_bound(size, height, D):
    """Upper bound ``36 (D + h(T)) |T|^2 / D``."""
    return Fraction(36 * (D + height) * size * size, D)


def exit_time_table(max_size=6, degrees=(1, 2, 3)):
    """Oracle values for every ordered tree with at most ``max_size`` vertices."""
    rows = []
    for size in range(1, max_size + 1):
        for shape_id, t in enumerate(enumerate_ordered_trees(size)):
            for D in degrees:
                chain, pend = exit_chain(t, D)
                m1 = chain.hitting_times(pend)[0]
                m2 = chain.second_moments(pend)[0]
                rows.append(
                    {
                        "size": size,
                        "shape": shape_id,
                        "parent": tuple(int(p) for p in t.parent),
                        "height": t.height,
                        "D": D,
                        "mean": m1,
                        "mean_formula": exit_time_formula(size, D),
                        "second_moment": m2,
                        "second_moment_bound": exit_second_moment_bound(size, t.height, D),
                    }
                )
    return rows


# ---------------------------------------------------------------- visit counts


def visit_count_pmf_oracle(L, D1, D2, kmax=10):
    """Law of the visits to ``y`` before the return to ``x`` on the gadget graph.

    Augments the walk with a visit counter (capped at ``kmax + 1``) and
    solves for the absorption probabilities at ``x``; this sums the whole
    series of absorbing-chain powers. Returns ``P(N = k)`` for ``k <= kmax``.
    """
    from .walk import gadget_graph

    n, edges, x, y = gadget_graph(L, D1, D2)
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    cap = kmax + 1
    states = [(v, c) for v in range(n) if v != x for c in range(cap + 1)]
    idx = {s: i for i, s in enumerate(states)}
    m = len(states)
    r, c_, vals = [], [], []
    R = np.zeros((m, cap + 1))
    for (v, c), i in idx.items():
        r.append(i)
        c_.append(i)
        vals.append(1.0)
        p = 1.0 / len(adj[v])
        for u in adj[v]:
            if u == x:
                R[i, c] += p
            else:
                cn = min(c + (u == y), cap)
                r.append(i)
                c_.append(idx[(u, cn)])
                vals.append(-p)
    A = sparse.csc_matrix((vals, (r, c_)), shape=(m, m))
    absorb = spsolve(A, R)
    absorb = np.atleast_2d(absorb)
    pmf = np.zeros(cap + 1)
    for u in adj[x]:
        p = 1.0 / len(adj[x])
        if u == x:
            continue
        start = idx[(u, 1 if u == y else 0)]
        pmf += p * absorb[start]
    return pmf[: kmax + 1]


# ---------------------------------------------------------------- conditioned trees


def conditioned_gw_law(offspring, n):
    """Exact law of a Galton-Watson tree conditioned on ``n`` vertices.

    Each ordered shape is weighted by the product of offspring probabilities
    over its vertices, then normalized. Returns ``{parent tuple: Fraction}``.
    """
    if n > 8:
        raise ValueError("enumeration is limited to n <= 8")
    law = Offspring.parse(offspring)
    weights = {}
    for t in enumerate_ordered_trees(n):
        w = Fraction(1)
        for c in t.child_counts:
            w *= law.pmf_exact(int(c))
        weights[tuple(int(p) for p in t.parent)] = w
    total = sum(weights.values())
    if total == 0:
        raise ValueError("offspring law gives zero weight to every tree of this size")
    return {k: v / total for k, v in weights.items()}


def dump_csv(rows, path):
    """Write oracle rows (dicts) to CSV for audit."""
    rows = list(rows)
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wr.writeheader()
        for row in rows:
            wr.writerow({k: str(v) for k, v in row.items()})
