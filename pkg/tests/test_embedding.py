import numpy as np
import pytest
from hypothesis import given, strategies as st

from crtwalk.embedding import (
    EmbeddedTriple,
    SparseVector,
    TreeEmbedding,
    embed_vertices,
    hausdorff_l1,
    path_sup_distance,
    read_cloud_jsonl,
    sequential_embed,
    theta_rescale,
    wasserstein_l1,
    write_cloud_jsonl,
)
from crtwalk.discrete_tree import sample_gw_conditioned
from crtwalk.excursion import piecewise_linear, sample_brownian_excursion
from crtwalk.metric_tree import ROOT, MetricTree, TreePoint, delta_k, reduced_tree_from_excursion

TWO_PEAK = piecewise_linear([(0, 0), (0.25, 0.5), (0.5, 0.25), (0.75, 0.5), (1, 0)], 1000)


def random_tree(seed, k, N=512):
    w = sample_brownian_excursion(N, seed)
    u = np.random.default_rng(seed).integers(1, N, k) / N
    return w, reduced_tree_from_excursion(w, u)


def random_points(T, count, rng):
    edges = rng.integers(1, T.n_nodes, count)
    return [TreePoint(int(e), float(rng.uniform(0, T.length[e]))) for e in edges]


def test_single_edge():
    T = MetricTree([-1, 0], [0, 0.7], [1])
    assert np.allclose(sequential_embed(T)(T.label_point(0)), [0.7])


def test_two_peak_embedding():
    T = reduced_tree_from_excursion(TWO_PEAK, [0.25, 0.75])
    psi = TreeEmbedding(T)
    assert np.allclose(psi(T.label_point(0)), [0.5, 0.0])
    assert np.allclose(psi(T.label_point(1)), [0.25, 0.25])
    assert psi.sparse(ROOT) == SparseVector()


@pytest.mark.parametrize("seed", range(50))
def test_isometry_exact(seed):
    _, T = random_tree(seed, 1 + seed % 9)
    psi = TreeEmbedding(T)
    nodes = [T.node_point(v) for v in range(T.n_nodes)]
    X = psi.cloud(nodes)
    D = np.abs(X[:, None, :] - X[None, :, :]).sum(-1)
    exact = np.array([[T.distance(a, b) for b in nodes] for a in nodes])
    assert np.abs(D - exact).max() <= 1e-12
    rng = np.random.default_rng(seed)
    P, Q = random_points(T, 1000, rng), random_points(T, 1000, rng)
    for p, q in zip(P, Q):
        assert abs(np.abs(psi(p) - psi(q)).sum() - T.distance(p, q)) <= 1e-12
    # label i only uses coordinates 0..i
    for i in range(T.k):
        assert np.all(psi(T.label_point(i))[i + 1 :] == 0)


@given(st.integers(0, 10_000), st.integers(2, 8))
def test_nesting(seed, k):
    _, T = random_tree(seed, k)
    big = TreeEmbedding(T)
    for j in range(1, k):
        small_tree = T.restrict(j)
        small = TreeEmbedding(small_tree)
        for v in range(small_tree.n_nodes):
            p = small_tree.node_point(v)
            q = small_tree.locate_in(T, p)
            a, b = small(p), big(q)
            assert np.allclose(np.pad(a, (0, b.size - a.size)), b, atol=1e-12)


def test_discrete_embedding_isometry():
    t = sample_gw_conditioned("geometric:0.5", 60, 1)
    leaves = [v for v in range(t.n) if not t.children[v]]
    verts, X = embed_vertices(t, leaves)
    assert list(verts) == list(range(t.n))
    D = np.abs(X[:, None, :] - X[None, :, :]).sum(-1)
    for a in range(t.n):
        for b in range(t.n):
            assert D[a, b] == t.distance(a, b)


def test_theta_examples():
    cloud = np.array([[0.0, 0.0], [0.6, 0.2]])
    path = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [3, 2], [3, 3], [4, 3], [4, 4]])
    e = EmbeddedTriple(cloud, np.array([0.25, 0.75]), [path])
    same = theta_rescale(1, e)
    assert np.array_equal(same.cloud, cloud) and np.array_equal(same.mass, e.mass)
    r4 = theta_rescale(4, e, grid=np.linspace(0, 1, 9))
    assert np.abs(r4.cloud[1]).sum() == pytest.approx(0.4)
    assert np.array_equal(r4.mass, e.mass)
    # time is compressed by 4**1.5 = 8 steps and space halved
    assert np.allclose(r4.paths[0], path / 2)
    with pytest.raises(ValueError, match="needs 27"):
        theta_rescale(9, e)


def test_theta_composition():
    e = EmbeddedTriple(np.array([[0.0], [3.0]]), np.array([0.5, 0.5]))
    a = theta_rescale(2, theta_rescale(3, e))
    b = theta_rescale(6, e)
    assert np.allclose(a.cloud, b.cloud)


def test_triple_validation():
    with pytest.raises(ValueError):
        EmbeddedTriple(np.zeros((2, 1)), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        EmbeddedTriple(np.zeros((1, 1)), np.array([1.0]), [np.array([[1.0]])])


def test_hausdorff_examples():
    A = np.array([[0.0, 0.0]])
    B = np.array([[0.0, 0.0], [0.3, 0.0]])
    assert hausdorff_l1(B, B) == 0.0
    assert hausdorff_l1(A, B) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        hausdorff_l1(np.zeros((0, 2)), B)


def test_hausdorff_bounded_by_projection_distance():
    w = sample_brownian_excursion(20_000, 4)
    u = w.snap(np.random.default_rng(4).random(6))
    T = reduced_tree_from_excursion(w, u)
    psi = TreeEmbedding(T)
    step = 0.002
    for k in range(1, 6):
        A = psi.cloud([p for p in T.points_along(step) if T.span_mask(k)[p.edge]])
        B = psi.cloud([p for p in T.points_along(step) if T.span_mask(k + 1)[p.edge]])
        assert hausdorff_l1(A, B) <= delta_k(w, T, k) + step


def test_wasserstein_simple():
    assert wasserstein_l1([[0.0]], [1.0], [[0.5]], [1.0]) == pytest.approx(0.5)
    xa = np.array([[0.0, 0.0], [1.0, 0.0]])
    xb = np.array([[0.0, 1.0]])
    assert wasserstein_l1(xa, [0.5, 0.5], xb, [1.0]) == pytest.approx(0.5 * 1 + 0.5 * 2)


def test_path_sup_distance():
    p = np.zeros((3, 2))
    q = np.array([[0, 0], [0.1, -0.1], [0, 0.05]])
    assert path_sup_distance(p, q) == pytest.approx(0.2)


def test_sparse_vector():
    v = SparseVector([(0, 1.0), (3, -2.0)])
    assert v.norm() == 3.0
    assert (v - v).norm() == 0.0
    with pytest.raises(ValueError):
        SparseVector([(1, 1.0), (1, 2.0)])


def test_cloud_jsonl_round_trip(tmp_path):
    _, T = random_tree(2, 4)
    X = TreeEmbedding(T).cloud(T.points_along(0.05))
    write_cloud_jsonl(X, tmp_path / "c.jsonl")
    assert np.array_equal(read_cloud_jsonl(tmp_path / "c.jsonl", X.shape[1]), X)
