import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crtwalk._seeding import make_rng
from crtwalk.discrete_tree import contour_and_depth, contour_vertices
from crtwalk.excursion import Excursion, sample_brownian_excursion
from crtwalk.harness import (
    ExperimentConfig,
    crossing_vertices,
    evaluate_verdicts,
    level_crossing_tree,
    recompute_verdicts,
    run_quenched_convergence,
    run_tightness_suite,
)
from crtwalk.stats import (
    adjacent_inversions,
    bootstrap_band,
    ks_band_halfwidth,
    ks_permutation_quantile,
    ks_statistic,
    median_band,
    trend_verdict,
)


# ---------------------------------------------------------------- stats


def test_ks_identical_and_disjoint():
    a = np.arange(10.0)
    assert ks_statistic(a, a) == 0.0
    assert ks_statistic(a, a + 100) == 1.0
    with pytest.raises(ValueError):
        ks_statistic([], a)


def test_ks_calibration_uniform():
    rng = make_rng(11)
    d = ks_statistic(rng.random(10_000), rng.random(10_000))
    q = ks_permutation_quantile(10_000, 10_000, 0.95, 200, 12)
    assert q < 0.03
    assert d <= q
    # the permutation quantile matches the asymptotic band
    assert q == pytest.approx(ks_band_halfwidth(10_000), rel=0.15)


def test_bootstrap_bands():
    rng = make_rng(1)
    x = rng.normal(size=400)
    lo, hi = median_band(x, draws=300, seed=2)
    assert lo < np.median(x) < hi
    assert hi - lo < 0.4
    lo, hi = bootstrap_band(lambda a, b: a.mean() - b.mean(), [x, x + 1.0], draws=300, seed=3)
    assert lo < -1.0 < hi


def test_trend_verdict_examples():
    assert trend_verdict([3, 2, 1])
    assert trend_verdict([3, 4, 1])
    assert not trend_verdict([1, 2, 3])
    assert adjacent_inversions([1, 1, 1]) == 0
    assert adjacent_inversions([1, 1, 1], strict=True) == 2
    assert not trend_verdict([2, 2, 2], strict=True)


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=20))
def test_sorted_sequences_have_no_inversions(xs):
    assert adjacent_inversions(sorted(xs, reverse=True)) == 0
    assert adjacent_inversions(xs) <= len(xs) - 1


def test_evaluate_verdicts_limsup():
    rows = [{"stat": "s", "n": n, "k": k, "median": m}
            for n, k, m in [(10, 2, 0.5), (20, 2, 0.6), (30, 2, 0.4), (10, 4, 9.0), (20, 4, 0.3), (30, 4, 0.2)]]
    [v] = evaluate_verdicts(rows, [{"name": "x", "stat": "s", "along": "k", "fixed": {"n": "limsup"}}])
    assert v["keys"] == [2, 4]
    assert v["values"] == [0.6, 0.3]
    assert v["passed"]


# ---------------------------------------------------------------- config


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(n_list=[]).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(mode="mixed").validate()
    with pytest.raises(ValueError, match="KS band"):
        ExperimentConfig(replicas=100, max_band_width=0.05).validate()
    ExperimentConfig(replicas=10_000, max_band_width=0.05).validate()
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_json('{"n_lst": [1]}')
    cfg = ExperimentConfig(n_list=[100, 200], replicas=50)
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert ExperimentConfig.from_json(path) == cfg


def test_tightness_guard():
    with pytest.raises(ValueError, match="k <= n/10"):
        run_tightness_suite(ExperimentConfig(experiment="t", n_list=[50], k_list=[2, 8], seeds=1))


# ---------------------------------------------------------------- quenched trees


def test_level_crossing_tree_follows_the_excursion():
    e = Excursion(sample_brownian_excursion(1 << 14, 3).values / np.sqrt(2))
    delta = 0.05
    tree, index = level_crossing_tree(e, delta)
    depth = contour_and_depth(tree)
    assert np.all(np.diff(index) > 0)
    # contour heights sit within one mesh of the excursion at the crossing times
    assert np.max(np.abs(delta * depth[: len(index)] - e.values[index])) <= delta + 1e-12
    verts = crossing_vertices(tree, index, np.array([index[5], index[-2]]))
    assert verts[0] == int(contour_vertices(tree)[5])
    assert len(verts) == 2


# ---------------------------------------------------------------- reports


def _small_tightness(out):
    cfg = ExperimentConfig(experiment="tight", n_list=[60, 120], k_list=[2, 4], seeds=4, master_seed=5)
    rep = run_tightness_suite(cfg)
    rep.write(out)
    return rep


def test_tightness_report_reproducible(tmp_path):
    a = _small_tightness(tmp_path / "a")
    _small_tightness(tmp_path / "b")
    for name in ("tight_trend.csv", "tight_raw.csv", "tight_meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    again = recompute_verdicts(tmp_path / "a", "tight")
    stored = json.loads((tmp_path / "a" / "tight_meta.json").read_text())["verdicts"]
    assert [v["passed"] for v in again] == [v["passed"] for v in stored]
    assert [v["values"] for v in again] == [v["values"] for v in stored]
    assert len(a.lines()) == 3
    assert {r["stat"] for r in a.rows} == {"a_vs_ahat", "clock_vs_t", "delta"}


def test_quenched_report_small(tmp_path):
    cfg = ExperimentConfig(experiment="conv", n_list=[50, 100, 200], k_list=[2], replicas=200,
                           excursion_grid=1 << 14, master_seed=3)
    rep = run_quenched_convergence(cfg)
    rep.write(tmp_path)
    stats = {r["stat"] for r in rep.rows}
    assert stats == {"hausdorff", "w1_measure", "ks_walk_vs_diffusion", "ks_consecutive"}
    assert sum(1 for r in rep.raw) == 3 * 200
    again = recompute_verdicts(tmp_path, "conv_quenched")
    assert [v["passed"] for v in again] == [v["passed"] for v in rep.verdicts]
    meta = json.loads((tmp_path / "conv_quenched_meta.json").read_text())
    assert meta["master_seed"] == 3 and "git" in meta
