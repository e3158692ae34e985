"""Acceptance gate: one test per criterion, each at its stated tolerance and budget."""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from crtwalk.harness import (
    ExperimentConfig,
    check_a_hat_trend,
    check_exit_time_formula,
    check_gamma_uniform,
    check_hitting_probability,
    check_mean_occupation,
    check_occupation_tail,
    check_second_moment_bound,
    check_structural,
    check_visit_count_law,
    run_quenched_convergence,
    run_tightness_suite,
)

pytestmark = pytest.mark.acceptance


def _record(number, name, passed, detail, seconds, budget):
    within = seconds <= budget
    tag = "PASS" if passed and within else "FAIL"
    line = f"{number}. [{tag}] {name}: {detail} ({seconds:.1f}s of {budget:.0f}s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line
    assert within, line


def _check(number, fn, budget):
    res = fn()
    _record(number, res.name, res.passed, res.detail, res.seconds, budget)


def test_criterion_01_exit_time_formula():
    _check(1, check_exit_time_formula, 10)


def test_criterion_02_second_moment_bound():
    _check(2, check_second_moment_bound, 30)


def test_criterion_03_visit_count_law():
    _check(3, check_visit_count_law, 120)


def test_criterion_04_hitting_probability():
    _check(4, check_hitting_probability, 300)


def test_criterion_05_mean_occupation():
    _check(5, check_mean_occupation, 300)


def test_criterion_06_occupation_tail():
    _check(6, check_occupation_tail, 120)


def test_criterion_07_structural_exactness():
    _check(7, check_structural, 60)


def test_criterion_08_vertex_selection_uniform():
    _check(8, check_gamma_uniform, 60)


def test_criterion_09_continuum_clock_trend():
    _check(9, check_a_hat_trend, 900)


def _trend(number, name, rep, seconds, budget):
    verdicts = [v for v in rep.verdicts if not v.get("informational")]
    detail = "; ".join(
        f"{v['stat']} along {v['along']} " + ", ".join(f"{x:.4g}" for x in v["values"]) for v in verdicts
    )
    _record(number, name, all(v["passed"] for v in verdicts), detail, seconds, budget)


def test_criterion_10_tightness_trends():
    cfg = ExperimentConfig(experiment="tightness", n_list=[2000], k_list=[2, 4, 8, 16, 32], seeds=20)
    t0 = time.time()
    rep = run_tightness_suite(cfg)
    _trend(10, "tightness trends", rep, time.time() - t0, 1200)


def test_criterion_11_walk_marginal_trend():
    t0 = time.time()
    reports = []
    for mode in ("quenched", "annealed"):
        cfg = ExperimentConfig(experiment="convergence", n_list=[250, 500, 1000, 2000], k_list=[8],
                               replicas=2000, mode=mode)
        reports.append(run_quenched_convergence(cfg))
    seconds = time.time() - t0
    ks = [next(v for v in r.verdicts if v["stat"] == "ks_consecutive") for r in reports]
    detail = "; ".join(
        f"{m} KS " + ", ".join(f"{x:.4f}" for x in v["values"]) for m, v in zip(("quenched", "annealed"), ks)
    )
    _record(11, "walk-marginal KS trend", all(v["passed"] for v in ks), detail, seconds, 1800)
    assert np.all(np.isfinite([x for v in ks for x in v["values"]]))
