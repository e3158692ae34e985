from fractions import Fraction

import numpy as np
import pytest

from crtwalk.diffusion import (
    GridTree,
    a_hat_limit,
    bm_exit_time_quantiles,
    grid_bm,
    grid_chain_hitting_probability,
    grid_local_times,
    hitting_prob_estimate,
    hitting_prob_formula,
    occupation_density_check,
    occupation_quadrature,
    trace_on_subtree,
)
from crtwalk.harness import three_leaf_tree
from crtwalk.metric_tree import ROOT, EdgeMeasure, MetricTree, TreePoint, lambda_k_measure
from crtwalk.oracles import LinearSystemOracle

SEG = MetricTree([-1, 0], [0, 1.0], [1])


def test_coarse_grid_rejected():
    with pytest.raises(ValueError, match="shortest edge"):
        GridTree(three_leaf_tree(), 0.25)
    G = GridTree(three_leaf_tree(), 0.25, allow_coarse=True)
    assert np.all(G.cells[1:] >= 1)


def test_grid_structure():
    T = three_leaf_tree()
    G = GridTree(T, 0.02)
    assert G.total_length == pytest.approx(T.total_length)
    assert len(G.edges) == G.n - 1
    # branch points keep their host degree, interior vertices have degree 2
    assert np.array_equal(G.degree[: T.n_nodes], T.shape.degree)
    assert np.all(G.degree[T.n_nodes :] == 2)
    assert G.lam.sum() == pytest.approx(G.total_length)


def test_segment_exit_time_matches_chain_oracle():
    h = 0.1
    G = GridTree(SEG, h)
    chain = LinearSystemOracle.simple_walk(G.n, G.edges, exact=True)
    far = G.vertex_at(SEG.node_point(1))
    steps = chain.hitting_times([far])[0]
    assert steps == Fraction(100)  # g**2 for g = 10 cells
    lam = EdgeMeasure(SEG, density=np.array([0.0, 1.0]))
    est, quad = occupation_density_check(SEG, lam, ROOT, SEG.node_point(1), h, 20_000, 2)
    assert quad == 1.0
    assert abs(est.value - float(steps) * h * h) <= 3 * est.se


def test_seed_determinism():
    T = three_leaf_tree()
    a = grid_bm(T, 0.02, 0.5, 9)
    b = grid_bm(T, 0.02, 0.5, 9)
    assert np.array_equal(a.vertices, b.vertices)
    c = grid_bm(T, 0.02, 0.5, 9, timing="hitting")
    d = grid_bm(T, 0.02, 0.5, 9, timing="hitting")
    assert np.array_equal(c.dwell, d.dwell)


def test_steps_adjacent():
    T = three_leaf_tree()
    p = grid_bm(T, 0.02, 1.0, 3)
    G = p.grid
    adj = {(a, b) for a, b in G.edges} | {(b, a) for a, b in G.edges}
    assert all((int(a), int(b)) in adj for a, b in zip(p.vertices[:-1], p.vertices[1:]))


def test_clocks():
    T = three_leaf_tree()
    p = grid_bm(T, 0.02, 1.0, 3, clock="normalized")
    assert p.times("normalized")[-1] >= 1.0
    assert p.times("length")[-1] == pytest.approx(p.times("normalized")[-1] * T.total_length)
    with pytest.raises(ValueError):
        grid_bm(T, 0.02, 1.0, 3, clock="wall")


def test_exit_time_quantile_table_moments():
    q = bm_exit_time_quantiles()
    mid = 0.5 * (q[1:] + q[:-1])
    assert mid.mean() == pytest.approx(1.0, abs=5e-3)
    assert (mid ** 2).mean() == pytest.approx(5 / 3, abs=2e-2)
    p = grid_bm(three_leaf_tree(), 0.02, 50.0, 1, timing="hitting")
    assert p.dwell.mean() / 0.02 ** 2 == pytest.approx(1.0, abs=0.02)


def test_hitting_trivial_cases():
    T = three_leaf_tree()
    x, y = T.node_point(2), T.node_point(4)
    assert hitting_prob_estimate(T, x, x, y, 0.02, 100, 0).value == 1.0
    assert hitting_prob_estimate(T, y, x, y, 0.02, 100, 0).value == 0.0
    assert hitting_prob_formula(T, x, x, y) == pytest.approx(1.0)
    assert hitting_prob_formula(T, y, x, y) == pytest.approx(0.0)


def test_hitting_formula_three_leaf():
    T = three_leaf_tree()
    x, y, z = T.node_point(2), T.node_point(4), TreePoint(5, 0.2)
    assert hitting_prob_formula(T, z, x, y) == pytest.approx(1 / 3)
    G = GridTree(T, 0.02)
    assert grid_chain_hitting_probability(G, z, x, y) == pytest.approx(1 / 3, abs=1e-9)


def test_gamblers_ruin_on_a_path():
    g = 10
    G = GridTree(SEG, 1 / g)
    chain = LinearSystemOracle.simple_walk(G.n, G.edges, exact=True)
    a, b = G.vertex_at(ROOT), G.vertex_at(SEG.node_point(1))
    probs = chain.hit_probabilities([b], [a])
    for j in range(g + 1):
        v = G.vertex_at(TreePoint(1, j / g) if j else ROOT)
        assert probs[v] == Fraction(j, g)
    z = TreePoint(1, 0.3)
    est = hitting_prob_estimate(SEG, z, SEG.node_point(1), ROOT, 1 / g, 50_000, 4)
    assert abs(est.value - 0.3) <= 3 * est.se


def test_refinement_agreement():
    T = three_leaf_tree()
    x, y, z = T.node_point(2), T.node_point(4), TreePoint(5, 0.2)
    a = hitting_prob_estimate(T, z, x, y, 0.02, 40_000, 1)
    b = hitting_prob_estimate(T, z, x, y, 0.01, 40_000, 2)
    assert abs(a.value - b.value) <= 3 * np.hypot(a.se, b.se)


def test_occupation_trivial_and_quadrature():
    T = three_leaf_tree()
    lam = EdgeMeasure(T, density=np.r_[0.0, np.ones(5)])
    est, _ = occupation_density_check(T, lam, T.node_point(2), T.node_point(2), 0.02, 10, 0)
    assert est.value == 0.0
    # hand value: the integral of 2 d(b(z, x, y), y) over the tree
    x, y = T.node_point(2), T.node_point(4)
    assert occupation_quadrature(T, lam, x, y) == pytest.approx(1.25)
    normalized = lambda_k_measure(T)
    assert occupation_quadrature(T, normalized, x, y) == pytest.approx(1.25 / 1.5)


def test_local_times_identity_and_sign():
    T = three_leaf_tree()
    p = grid_bm(T, 0.02, 2.0, 5)
    L = grid_local_times(p)
    assert np.all(L.local >= 0)
    assert L.occupation_identity() == pytest.approx(p.times()[-1], rel=1e-12)
    visits = np.bincount(p.vertices, minlength=p.grid.n)
    assert np.allclose(L.local, 0.02 * visits / (p.grid.degree / 2))


def _adjacent_modulus(h, seed):
    T = three_leaf_tree()
    p = grid_bm(T, h, 1.0, seed)
    L = grid_local_times(p).local
    return max(abs(L[a] - L[b]) for a, b in p.grid.edges)


def test_local_time_continuity_proxy():
    coarse = np.median([_adjacent_modulus(0.02, s) for s in range(20)])
    fine = np.median([_adjacent_modulus(0.01, 100 + s) for s in range(20)])
    assert fine < coarse


def test_a_hat_basic():
    T = three_leaf_tree()
    G = GridTree(T, 0.02)
    p = grid_bm(T, 0.02, 1.0, 2, clock="normalized", grid=G)
    mu = G.measure_weights(lambda_k_measure(T))
    assert mu.sum() == pytest.approx(1.0)
    curve = a_hat_limit(p, mu)
    assert curve.values[0] == 0.0
    assert np.all(np.diff(curve.values) >= 0)
    # with mu the normalized length measure the clock is time itself
    assert curve.sup_deviation(1.0) == pytest.approx(0.0, abs=1e-9)


def test_trace_identity_and_support():
    T = three_leaf_tree()
    G = GridTree(T, 0.02)
    p = grid_bm(T, 0.02, 1.0, 2, grid=G)
    same = trace_on_subtree(p, G.restrict_to_labels(3))
    assert np.array_equal(same.vertices, p.vertices)
    assert np.allclose(same.dwell, p.dwell)
    sub = G.restrict_to_labels(1)
    tr = trace_on_subtree(p, sub)
    assert tr.vertices.max() < sub.n
    host_ids = G.root_ids[p.vertices[tr.base_index]]
    assert np.array_equal(sub.index_in_root()[host_ids], tr.vertices)


def test_trace_composition_exact():
    w_tree = MetricTree([-1, 0, 1, 1, 3, 3, 0], [0, 0.2, 0.4, 0.2, 0.3, 0.4, 0.3], [2, 4, 5, 6])
    G = GridTree(w_tree, 0.05)
    p = grid_bm(w_tree, 0.05, 3.0, 8, grid=G)
    G3, G2 = G.restrict_to_labels(3), G.restrict_to_labels(2)
    G1 = G2.restrict(w_tree.span_mask(1))
    for inner, outer in ((G3, G2), (G2, G1), (G3, G1)):
        two = trace_on_subtree(trace_on_subtree(p, inner), outer)
        one = trace_on_subtree(p, outer)
        assert np.array_equal(two.vertices, one.vertices)
        assert np.array_equal(two.dwell, one.dwell)


def test_traced_clock_matches_host_local_times():
    T = three_leaf_tree()
    G = GridTree(T, 0.02)
    p = grid_bm(T, 0.02, 2.0, 6, grid=G)
    sub = G.restrict_to_labels(2)
    mu = sub.lam / sub.lam.sum()
    tr = trace_on_subtree(p, sub)
    traced = a_hat_limit(tr, mu, clock="length").values
    # integrate host local times against mu, read off at the host time of each traced knot
    rate = np.zeros(G.n)
    rate[sub.root_ids] = mu / G.lam[sub.root_ids]
    host = np.concatenate([[0.0], np.cumsum(p.dwell * rate[p.vertices])])
    assert np.max(np.abs(traced[:-1] - host[tr.base_index])) <= 0.02
    assert traced[-1] == pytest.approx(host[-1])


def _traced_hit_trials(tr, gz, gx, gy):
    """Independent trials of 'hit x before y from z' cut from one traced path."""
    wins = trials = 0
    waiting = True
    for v in tr.vertices:
        if waiting:
            if v == gz:
                waiting = False
        elif v == gx or v == gy:
            wins += v == gx
            trials += 1
            waiting = True
    return wins, trials


def test_traced_path_hitting_probabilities():
    T = three_leaf_tree()
    h = 0.1
    G = GridTree(T, h)
    sub = G.restrict_to_labels(2)
    idx = sub.index_in_root()
    x, y, z = T.node_point(2), T.node_point(4), ROOT
    gx, gy, gz = (idx[G.vertex_at(p)] for p in (x, y, z))
    formula = hitting_prob_formula(T, z, x, y)
    assert formula == pytest.approx(5 / 9)
    wins = trials = 0
    seed = 0
    while trials < 100_000:
        tr = trace_on_subtree(grid_bm(T, h, 2000.0, seed, grid=G), sub)
        w, n = _traced_hit_trials(tr, gz, gx, gy)
        wins, trials, seed = wins + w, trials + n, seed + 1
    assert abs(wins / trials - formula) <= 0.015
