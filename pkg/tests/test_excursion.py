import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import ks_2samp

from crtwalk.excursion import (
    Excursion,
    OffGridError,
    excursion_distance,
    from_function,
    minimum,
    piecewise_linear,
    read_csv,
    sample_brownian_excursion,
    write_csv,
)

TWO_PEAK = [(0, 0), (0.25, 0.5), (0.5, 0.25), (0.75, 0.5), (1, 0)]


def scan_min(values, i, j):
    lo, hi = min(i, j), max(i, j)
    m = values[lo]
    for v in values[lo : hi + 1]:
        m = v if v < m else m
    return m


@pytest.fixture
def triangle():
    return from_function(lambda t: np.minimum(t, 1 - t), 1000)


def test_triangle_minimum_and_distance(triangle):
    assert minimum(triangle, 0.25, 0.75) == pytest.approx(0.25, abs=1e-15)
    assert excursion_distance(triangle, 0.25, 0.75) == pytest.approx(0.0, abs=1e-15)


def test_two_peak_minimum_and_distance():
    w = piecewise_linear(TWO_PEAK, 1000)
    assert minimum(w, 0.25, 0.75) == pytest.approx(0.25)
    assert excursion_distance(w, 0.25, 0.75) == pytest.approx(0.5)


def test_degenerate_interval(triangle):
    assert minimum(triangle, 0.3, 0.3) == triangle(0.3)
    assert excursion_distance(triangle, 0.3, 0.3) == 0.0


def test_off_grid_rejected(triangle):
    with pytest.raises(OffGridError):
        minimum(triangle, 0.0001, 0.5)


def test_invalid_values_rejected():
    with pytest.raises(ValueError):
        Excursion(np.array([0.0, -0.1, 0.0]))
    with pytest.raises(ValueError):
        Excursion(np.array([0.1, 0.2, 0.0]))
    with pytest.raises(ValueError):
        Excursion(np.array([0.0, 0.0, 1.0, 0.0]), strict=True)


def test_rmq_matches_scan_on_random_queries():
    rng = np.random.default_rng(0)
    w = sample_brownian_excursion(2000, 3)
    i = rng.integers(0, 2001, 10_000)
    j = rng.integers(0, 2001, 10_000)
    fast = w.rmq.min(i, j)
    slow = np.array([scan_min(w.values, a, b) for a, b in zip(i, j)])
    assert np.array_equal(fast, slow)


def test_rmq_build_is_pure():
    w = sample_brownian_excursion(500, 8)
    a, b = Excursion(w.values.copy()), Excursion(w.values.copy())
    q = np.arange(501)
    assert np.array_equal(a.rmq.min(q, q[::-1]), b.rmq.min(q, q[::-1]))


def test_pseudometric_exhaustive_small_grid():
    w = sample_brownian_excursion(200, 11)
    idx = np.arange(201)
    D = w.distance_index(idx[:, None], idx[None, :])
    assert np.all(D >= 0)
    assert np.array_equal(D, D.T)
    assert np.all(np.diag(D) == 0)
    viol = D[:, None, :] - (D[:, :, None] + D[None, :, :])
    assert viol.max() <= 1e-12


@given(st.integers(2, 300).map(lambda n: 2 * n), st.integers(0, 2**32 - 1))
def test_sampler_endpoints_and_determinism(N, seed):
    a = sample_brownian_excursion(N, seed)
    b = sample_brownian_excursion(N, seed)
    assert a.values[0] == a.values[-1] == 0
    assert np.array_equal(a.values, b.values)
    assert np.all(a.values[1:-1] > 0)


def test_sampler_rejects_small_or_odd_grid():
    with pytest.raises(ValueError):
        sample_brownian_excursion(1, 0)
    with pytest.raises(ValueError):
        sample_brownian_excursion(7, 0)
    v = sample_brownian_excursion(7, 0, backend="vervaat")
    assert v.values[0] == v.values[-1] == 0


def test_backends_agree_on_mean_area():
    walk = np.array([sample_brownian_excursion(4000, s).integral() for s in range(10_000)])
    verv = np.array(
        [sample_brownian_excursion(4000, s, backend="vervaat", oversample=8).integral() for s in range(10_000)]
    )
    se = np.sqrt(walk.var(ddof=1) / walk.size + verv.var(ddof=1) / verv.size)
    assert abs(walk.mean() - verv.mean()) <= 3 * se
    # both near E[area] = sqrt(pi / 8)
    assert abs(walk.mean() - np.sqrt(np.pi / 8)) < 0.01


def test_brownian_scaling_refinement():
    a = [sample_brownian_excursion(1000, s).values.max() for s in range(1000)]
    b = [sample_brownian_excursion(2000, 10_000 + s).values.max() for s in range(1000)]
    assert ks_2samp(a, b).pvalue > 0.01


def test_csv_round_trip(tmp_path):
    w = sample_brownian_excursion(300, 5, backend="vervaat")
    write_csv(w, tmp_path / "w.csv")
    back = read_csv(tmp_path / "w.csv")
    assert np.array_equal(back.values, w.values)
