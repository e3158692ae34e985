"""Experiment orchestration: configs, checks, trend suites and their reports.

Every experiment derives all of its randomness from one master seed through
:func:`crtwalk._seeding.derive_seed`, and replicas are merged by index, so
the emitted CSV files do not depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
import subprocess
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import _kernels
from ._seeding import derive_seed, make_rng, replica_seeds
from .diffusion import (
    GridTree,
    a_hat_limit,
    grid_bm,
    grid_chain_hitting_probability,
    hitting_prob_estimate,
    hitting_prob_formula,
    occupation_density_check,
    trace_on_subtree,
)
from .discrete_tree import (
    contour_and_depth,
    delta_nk,
    enumerate_ordered_trees,
    gamma_law_exact,
    projected_counts,
    reduced_subtree,
    sample_gw_conditioned,
    select_vertices,
    tree_from_depth,
)
from .embedding import TreeEmbedding, embed_vertices, hausdorff_l1, wasserstein_l1
from .excursion import Excursion, sample_brownian_excursion
from .metric_tree import EdgeMeasure, MetricTree, TreePoint, mu_k_measure, reduced_tree_from_excursion
from .oracles import exit_time_table, visit_count_pmf_oracle
from .stats import ks_band_halfwidth, ks_statistic, median_band, trend_verdict
from .walk import (
    a_hat,
    a_hat_integral,
    clock_interp,
    exponential_envelope,
    occupation_tail,
    project_and_decompose,
    simulate_srw,
    visit_count_pmf,
    visits_before_return,
)

# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    """Parameters of a trend experiment (JSON round-trippable)."""

    experiment: str = "convergence"
    n_list: list = field(default_factory=lambda: [250, 500, 1000, 2000])
    k_list: list = field(default_factory=lambda: [8])
    h: float = 0.01
    replicas: int = 2000
    seeds: int = 20
    R: float = 1.0
    offspring: str = "geometric:0.5"
    mode: str = "quenched"
    master_seed: int = 0
    out_dir: str = "results"
    excursion_grid: int = 1 << 18
    cloud_spacing: float = 0.005
    measure_bin: float = 0.01
    max_band_width: float | None = None

    def validate(self):
        if not self.n_list or not self.k_list:
            raise ValueError("n_list and k_list must be nonempty")
        if self.replicas < 1 or self.seeds < 1:
            raise ValueError("replicas and seeds must be at least 1")
        if self.mode not in ("quenched", "annealed"):
            raise ValueError("mode must be 'quenched' or 'annealed'")
        if self.max_band_width is not None:
            need = ks_band_halfwidth(self.replicas)
            if need > self.max_band_width:
                raise ValueError(
                    f"{self.replicas} replicas give a KS band of {need:.3g}, wider than "
                    f"the requested {self.max_band_width}"
                )
        return self

    @classmethod
    def from_json(cls, path_or_text):
        text = path_or_text
        if os.path.exists(str(path_or_text)):
            text = Path(path_or_text).read_text()
        raw = json.loads(text)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**raw).validate()

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def git_hash():
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


# ---------------------------------------------------------------- reports

ROW_FIELDS = ["stat", "n", "k", "median", "lo", "hi", "count"]
RAW_FIELDS = ["stat", "n", "k", "replica", "value"]


def _fmt(x):
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def _summarize(stat, n, k, values, seed):
    values = np.asarray(values, dtype=float)
    lo, hi = median_band(values, seed=seed) if len(values) > 1 else (values[0], values[0])
    return {"stat": stat, "n": n, "k": k, "median": float(np.median(values)), "lo": lo, "hi": hi,
            "count": len(values)}


def evaluate_verdicts(rows, specs):
    """Apply verdict specs to summary rows.

    A spec names a statistic, the parameter it runs along (``n`` or ``k``),
    fixed values for the other parameter, and whether the trend must be
    strictly decreasing. ``n == "limsup"`` takes, for each ``k``, the largest
    median over the two largest ``n`` values.
    """
    out = []
    for spec in specs:
        sel = [r for r in rows if r["stat"] == spec["stat"]]
        along = spec["along"]
        fixed = spec.get("fixed", {})
        if fixed.get("n") == "limsup":
            ns = sorted({int(r["n"]) for r in sel})[-2:]
            by_k = {}
            for r in sel:
                if int(r["n"]) in ns:
                    by_k[int(r["k"])] = max(by_k.get(int(r["k"]), -np.inf), float(r["median"]))
            keys = sorted(by_k)
            vals = [by_k[k] for k in keys]
        else:
            for name, v in fixed.items():
                sel = [r for r in sel if int(r[name]) == int(v)]
            sel = sorted(sel, key=lambda r: int(r[along]))
            keys = [int(r[along]) for r in sel]
            vals = [float(r["median"]) for r in sel]
        passed = len(vals) >= 2 and trend_verdict(vals, strict=spec.get("strict", False))
        out.append({**spec, "keys": keys, "values": vals, "passed": bool(passed)})
    return out


@dataclass
class TrendReport:
    experiment: str
    rows: list
    raw: list
    verdict_specs: list
    meta: dict

    @property
    def verdicts(self):
        return evaluate_verdicts(self.rows, self.verdict_specs)

    @property
    def passed(self):
        return all(v["passed"] for v in self.verdicts if not v.get("informational"))

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{self.experiment}_trend.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(ROW_FIELDS)
            for r in self.rows:
                wr.writerow([_fmt(r[f]) for f in ROW_FIELDS])
        with open(out / f"{self.experiment}_raw.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(RAW_FIELDS)
            for r in self.raw:
                wr.writerow([_fmt(r[f]) for f in RAW_FIELDS])
        meta = {**self.meta, "verdict_specs": self.verdict_specs, "verdicts": self.verdicts}
        (out / f"{self.experiment}_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        return out

    def lines(self):
        out = []
        for v in self.verdicts:
            tag = "info" if v.get("informational") else ("PASS" if v["passed"] else "FAIL")
            vals = ", ".join(f"{x:.4g}" for x in v["values"])
            out.append(f"[{tag}] {v['name']}: {v['along']}={v['keys']} medians=({vals})")
        return out


def recompute_verdicts(out_dir, experiment):
    """Verdicts rebuilt from the emitted trend CSV and the stored specs."""
    out = Path(out_dir)
    with open(out / f"{experiment}_trend.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    specs = json.loads((out / f"{experiment}_meta.json").read_text())["verdict_specs"]
    return evaluate_verdicts(rows, specs)


def _meta(cfg, **extra):
    return {"config": asdict(cfg), "master_seed": cfg.master_seed, "git": git_hash(), **extra}


# ---------------------------------------------------------------- quenched trees


def level_crossing_tree(e, delta):
    """Ordered tree whose depth-first walk follows the ``delta``-crossings of ``e``.

    Returns ``(tree, crossing_index)`` where ``crossing_index[j]`` is the
    grid index of ``e`` at which contour step ``j`` happens.
    """
    levels, index = _kernels.level_crossings(np.asarray(e.values, dtype=float), float(delta))
    if levels[-1] != 0:
        raise ValueError("path does not return to level 0")
    depth = np.concatenate([levels, [0, 0]])
    return tree_from_depth(depth), index


def crossing_vertices(tree, index, grid_idx):
    """Vertices whose contour step time is closest to each excursion grid index."""
    from .discrete_tree import contour_vertices

    seq = contour_vertices(tree)[: len(index)]
    pos = np.searchsorted(index, grid_idx)
    pos = np.clip(pos, 1, len(index) - 1)
    left = np.abs(index[pos - 1] - grid_idx) <= np.abs(index[pos] - grid_idx)
    return [int(v) for v in seq[np.where(left, pos - 1, pos)]]


def walk_marginal(tree, n, replicas, seed, t=1.0):
    """``n^{-1/2} d(root, X_{floor(t n^{3/2})})`` over independent walks from the root."""
    off, tg = tree.neighbors_csr()
    steps = int(math.floor(t * n ** 1.5))
    ends = _kernels.walk_endpoints(off, tg, 0, steps, replica_seeds(seed, replicas))
    return tree.depth[ends] / math.sqrt(n)


def _annealed_chunk(offspring, n, seeds, t):
    out = np.empty(len(seeds))
    steps = int(math.floor(t * n ** 1.5))
    for i, s in enumerate(seeds):
        tree = sample_gw_conditioned(offspring, n, int(s))
        off, tg = tree.neighbors_csr()
        end = _kernels.walk_endpoints(off, tg, 0, steps, np.array([derive_seed(int(s), 1)], dtype=np.int64))
        out[i] = tree.depth[end[0]] / math.sqrt(n)
    return out


def annealed_marginal(offspring, n, replicas, seed, threads=1, t=1.0):
    """Walk marginal with a fresh conditioned tree for every replica."""
    seeds = replica_seeds(seed, replicas)
    chunks = np.array_split(seeds, max(1, threads * 4))
    parts = Parallel(n_jobs=threads)(delayed(_annealed_chunk)(offspring, n, c, t) for c in chunks)
    return np.concatenate(parts)


def diffusion_marginal(T, h, replicas, seed, t=1.0):
    """``d(root, B_t)`` for grid Brownian motion on ``T`` in the normalized clock."""
    G = GridTree(T, h, allow_coarse=True)
    steps = int(math.ceil(t * G.total_length / G.h ** 2))
    ends = _kernels.walk_endpoints(G.offsets, G.targets, 0, steps, replica_seeds(seed, replicas))
    heights = np.array([T.point_height(G.point(g)) for g in range(G.n)])
    return heights[ends]


def _binned_measure_coords(T, mu, emb, spacing):
    """Embed an edge measure after merging its atoms into bins along each edge."""
    bins = {}
    for e, o, m in zip(mu.atom_edge, mu.atom_offset, mu.atom_mass):
        e = int(e)
        if e == 0:
            key = (0, 0)
        else:
            nb = max(1, int(math.ceil(T.length[e] / spacing)))
            key = (e, min(nb, int(round(o / T.length[e] * nb))))
        bins[key] = bins.get(key, 0.0) + m
    pts, mass = [], []
    for (e, j), m in sorted(bins.items()):
        if e == 0:
            pts.append(emb(TreePoint(0, 0.0)))
        else:
            nb = max(1, int(math.ceil(T.length[e] / spacing)))
            pts.append(emb(TreePoint(e, T.length[e] * j / nb)))
        mass.append(m)
    return np.array(pts), np.array(mass)


def _quenched_level(cfg, wstar, u_idx, n, K):
    """Tree, distances and walk marginal for one value of ``n`` (quenched mode)."""
    e_vals = wstar.values / math.sqrt(2.0)
    delta = 1.0 / math.sqrt(2.0 * n)
    tree, index = level_crossing_tree(Excursion(e_vals), delta)
    verts = crossing_vertices(tree, index, u_idx)
    scale = 1.0 / math.sqrt(n)
    out = {"n_vertices": tree.n, "geom": []}
    for k in cfg.k_list:
        Tk = reduced_tree_from_excursion(wstar, u_idx[:k] / wstar.grid_size)
        emb = TreeEmbedding(Tk)
        cont = emb.cloud(Tk.points_along(cfg.cloud_spacing))
        sub = reduced_subtree(tree, verts[:k])
        sv, coords = embed_vertices(tree, verts[:k])
        haus = hausdorff_l1(scale * coords, cont)
        counts = projected_counts(sub)[sv] / tree.n
        cx, cm = _binned_measure_coords(Tk, mu_k_measure(wstar, Tk), emb, cfg.measure_bin)
        w1 = wasserstein_l1(scale * coords, counts, cx, cm)
        out["geom"].append((k, haus, w1))
    seed = derive_seed(cfg.master_seed, 3, n)
    out["marginal"] = walk_marginal(tree, n, cfg.replicas, seed)
    return out


def run_quenched_convergence(cfg, threads=1):
    """KS trend of walk marginals along ``n`` (plus geometry trends when quenched).

    Quenched mode fixes one Brownian excursion ``e``; the target is
    ``w* = sqrt(2) e`` (the scaling limit of the contour of geometric(1/2)
    trees) and the tree at size ``n`` follows the crossings of ``e`` of the
    lattice of mesh ``(2n)^{-1/2}``, so ``n`` is the nominal size used in
    every rescaling. Annealed mode draws a fresh conditioned tree per replica.
    """
    cfg.validate()
    t0 = time.time()
    rows, raw = [], []
    K = max(cfg.k_list)
    marg = {}
    extra = {}
    if cfg.mode == "quenched":
        e = sample_brownian_excursion(cfg.excursion_grid, derive_seed(cfg.master_seed, 1))
        wstar = Excursion(math.sqrt(2.0) * e.values)
        u = make_rng(cfg.master_seed, 2).random(K)
        u_idx = np.rint(u * wstar.grid_size).astype(np.int64)
        u_idx = np.clip(u_idx, 1, wstar.grid_size - 1)
        levels = Parallel(n_jobs=threads)(
            delayed(_quenched_level)(cfg, wstar, u_idx, n, K) for n in cfg.n_list
        )
        for n, lv in zip(cfg.n_list, levels):
            marg[n] = lv["marginal"]
            extra[str(n)] = {"n_vertices": int(lv["n_vertices"])}
            for k, haus, w1 in lv["geom"]:
                rows.append({"stat": "hausdorff", "n": n, "k": k, "median": haus, "lo": haus, "hi": haus, "count": 1})
                rows.append({"stat": "w1_measure", "n": n, "k": k, "median": w1, "lo": w1, "hi": w1, "count": 1})
        TK = reduced_tree_from_excursion(wstar, u_idx / wstar.grid_size)
        diff = diffusion_marginal(TK, cfg.h, cfg.replicas, derive_seed(cfg.master_seed, 4))
        for n in cfg.n_list:
            d = ks_statistic(marg[n], diff)
            rows.append({"stat": "ks_walk_vs_diffusion", "n": n, "k": K, "median": d, "lo": d, "hi": d, "count": 1})
    else:
        for n in cfg.n_list:
            marg[n] = annealed_marginal(cfg.offspring, n, cfg.replicas, derive_seed(cfg.master_seed, 5, n), threads)
    for n in cfg.n_list:
        for r, v in enumerate(marg[n]):
            raw.append({"stat": "walk_marginal", "n": n, "k": 0, "replica": r, "value": float(v)})
    band = ks_band_halfwidth(cfg.replicas)
    for a, b in zip(cfg.n_list[:-1], cfg.n_list[1:]):
        d = ks_statistic(marg[a], marg[b])
        rows.append({"stat": "ks_consecutive", "n": a, "k": 0, "median": d, "lo": max(0.0, d - band),
                     "hi": d + band, "count": cfg.replicas})
    specs = [{"name": f"KS between consecutive n ({cfg.mode})", "stat": "ks_consecutive",
              "along": "n", "fixed": {"k": 0}, "strict": True}]
    if cfg.mode == "quenched":
        for k in cfg.k_list:
            specs.append({"name": f"Hausdorff trend k={k}", "stat": "hausdorff", "along": "n",
                          "fixed": {"k": k}, "strict": True})
            specs.append({"name": f"W1 measure trend k={k}", "stat": "w1_measure", "along": "n",
                          "fixed": {"k": k}, "strict": True, "informational": True})
        specs.append({"name": "KS walk vs traced diffusion", "stat": "ks_walk_vs_diffusion", "along": "n",
                      "fixed": {"k": K}, "strict": False, "informational": True})
    meta = _meta(cfg, clock="normalized", sizes=extra, measure_distance="W1 surrogate (l1 ground cost)",
                 scale="nominal n", runtime_s=None)
    rep = TrendReport(f"{cfg.experiment}_{cfg.mode}", rows, raw, specs, meta)
    rep.runtime = time.time() - t0
    return rep


# ---------------------------------------------------------------- tightness


def _tightness_seed(cfg, n, s, R):
    rng = make_rng(cfg.master_seed, 6, n, s)
    tree = sample_gw_conditioned(cfg.offspring, n, derive_seed(cfg.master_seed, 7, n, s))
    K = max(cfg.k_list)
    verts = select_vertices(tree, None, rng.random(K))
    wseed = derive_seed(cfg.master_seed, 8, n, s)
    M = int(math.ceil(1.5 * R * n ** 1.5))
    subs = {k: reduced_subtree(tree, verts[:k]) for k in cfg.k_list}
    while True:
        path = simulate_srw(tree, M, wseed)
        decs = {k: project_and_decompose(path, subs[k])[1] for k in cfg.k_list}
        need = {k: int(math.floor(R * math.sqrt(n) * subs[k].edge_count)) for k in cfg.k_list}
        if all(len(decs[k].A) > need[k] + 1 for k in cfg.k_list):
            break
        M *= 2
    out = []
    for k in cfg.k_list:
        sub, dec, m_max = subs[k], decs[k], need[k]
        counts = projected_counts(sub)
        A = dec.A[: m_max + 2].astype(float)
        J = dec.J[: m_max + 2]
        Ahat = a_hat(J, sub, counts / n, n)
        s_a = np.max(np.abs(A[: m_max + 1] - Ahat[: m_max + 1])) / n ** 1.5
        nL = math.sqrt(n) * sub.edge_count
        x = np.concatenate([np.arange(m_max + 1), [R * nL]])
        s_b = np.max(np.abs(clock_interp(A, x) / n ** 1.5 - x / nL))
        s_c = delta_nk(tree, sub) / math.sqrt(n)
        out.append((k, s_a, s_b, s_c))
    return out


def run_tightness_suite(cfg, threads=1):
    """Medians over seeds of the three sup-statistics, tabulated in ``(n, k)``."""
    cfg.validate()
    if max(cfg.k_list) > min(cfg.n_list) / 10:
        raise ValueError("k must stay well below n (k <= n/10)")
    t0 = time.time()
    jobs = [(n, s) for n in cfg.n_list for s in range(cfg.seeds)]
    res = Parallel(n_jobs=threads)(delayed(_tightness_seed)(cfg, n, s, cfg.R) for n, s in jobs)
    raw, vals = [], {}
    names = ("a_vs_ahat", "clock_vs_t", "delta")
    for (n, s), per in zip(jobs, res):
        for k, *stats in per:
            for name, v in zip(names, stats):
                vals.setdefault((name, n, k), []).append(v)
                raw.append({"stat": name, "n": n, "k": k, "replica": s, "value": float(v)})
    rows = [_summarize(name, n, k, v, seed=0) for (name, n, k), v in sorted(vals.items())]
    specs = [{"name": f"{name} nonincreasing in k", "stat": name, "along": "k",
              "fixed": {"n": "limsup"}, "strict": False} for name in names]
    rep = TrendReport(cfg.experiment, rows, raw, specs, _meta(cfg, clock="discrete steps"))
    rep.runtime = time.time() - t0
    return rep


# ---------------------------------------------------------------- continuum clock trend


def a_hat_trend(excursion_seed=2024, h=0.01, path_seeds=20, ks=(2, 4, 8, 16), grid_n=1 << 16, t_max=1.0):
    """``sup_{t <= t_max} |A_hat^(k)_t - t|`` for traces of one grid BM on ``T(max k)``.

    Returns ``{k: list of per-seed sups}``; the clock is normalized.
    """
    w = sample_brownian_excursion(grid_n, excursion_seed)
    u = w.snap(make_rng(excursion_seed, 5).random(max(ks)))
    T = reduced_tree_from_excursion(w, u)
    G = GridTree(T, h, allow_coarse=True)
    subs = {k: G.restrict_to_labels(k) for k in ks}
    mus = {k: subs[k].measure_weights(mu_k_measure(w, T, k)) for k in ks}
    out = {k: [] for k in ks}
    for s in range(path_seeds):
        horizon = 1.5 * t_max
        while True:
            P = grid_bm(T, h, horizon, derive_seed(excursion_seed, 9, s), clock="normalized", grid=G)
            traces = {k: trace_on_subtree(P, subs[k]) for k in ks}
            if all(tr.times("normalized")[-1] >= t_max for tr in traces.values()):
                break
            horizon *= 2
        for k in ks:
            out[k].append(a_hat_limit(traces[k], mus[k]).sup_deviation(t_max))
    return out


# ---------------------------------------------------------------- formula checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.time()
        res = fn(*a, **kw)
        res.seconds = time.time() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_exit_time_formula(max_size=6):
    rows = exit_time_table(max_size)
    bad = [r for r in rows if r["mean"] != r["mean_formula"]]
    return CheckResult("exit-time mean formula", not bad,
                       f"{len(rows) - len(bad)}/{len(rows)} (tree, D) instances exact")


@_timed
def check_second_moment_bound(max_size=6):
    rows = exit_time_table(max_size)
    bad = [r for r in rows if not r["second_moment"] <= r["second_moment_bound"]]
    worst = max(r["second_moment"] / r["second_moment_bound"] for r in rows)
    return CheckResult("exit-time second-moment bound", not bad,
                       f"{len(rows) - len(bad)}/{len(rows)} within bound, max ratio {float(worst):.3f}")


@_timed
def check_visit_count_law(replicas=100_000, seed=3, kmax=10):
    worst_exact, worst_z, worst_eta = 0.0, 0.0, 0.0
    for L in (1, 2, 3):
        for D1 in (1, 2, 3):
            for D2 in (1, 2, 3):
                ks = np.arange(kmax + 1)
                formula = np.array([visit_count_pmf(L, D1, D2, int(k)) for k in ks])
                oracle = visit_count_pmf_oracle(L, D1, D2, kmax)
                worst_exact = max(worst_exact, float(np.max(np.abs(oracle - formula))))
                N = visits_before_return(L, D1, D2, replicas, derive_seed(seed, L, D1, D2))
                emp = np.array([np.mean(N == k) for k in ks])
                se = np.sqrt(formula * (1 - formula) / replicas)
                z = np.abs(emp - formula) / np.where(se > 0, se, np.inf)
                worst_z = max(worst_z, float(z.max()))
                eta = N / D2 - 1.0 / D1
                sd = eta.std(ddof=1)
                z_eta = abs(eta.mean()) / (sd / math.sqrt(replicas)) if sd > 0 else (0.0 if eta.mean() == 0 else np.inf)
                worst_eta = max(worst_eta, z_eta)
    ok = worst_exact <= 1e-12 and worst_z <= 3 and worst_eta <= 3
    return CheckResult("visit-count law", ok,
                       f"oracle max err {worst_exact:.2e}, MC max |z| {worst_z:.2f}, eta max |z| {worst_eta:.2f}")


def three_leaf_tree():
    """Root to b (0.2), b to leaf 1 (0.4), b to c (0.2), c to leaves 2 (0.3) and 3 (0.4)."""
    return MetricTree([-1, 0, 1, 1, 3, 3], [0, 0.2, 0.4, 0.2, 0.3, 0.4], [2, 4, 5])


@_timed
def check_hitting_probability(h=0.02, replicas=100_000, seed=4):
    T = three_leaf_tree()
    x, y, z = T.node_point(2), T.node_point(4), TreePoint(5, 0.2)
    formula = hitting_prob_formula(T, z, x, y)
    G = GridTree(T, h)
    est = hitting_prob_estimate(T, z, x, y, h, replicas, seed, grid=G)
    exact = grid_chain_hitting_probability(G, z, x, y)
    ok = abs(est.value - formula) <= 0.01 and abs(exact - formula) <= 0.02
    return CheckResult("hitting probability", ok,
                       f"MC {est.value:.4f} +- {est.se:.4f}, grid chain {exact:.6f}, formula {formula:.6f}")


@_timed
def check_mean_occupation(h=0.01, replicas=100_000, seed=5):
    seg = MetricTree([-1, 0], [0, 1.0], [1])
    length = EdgeMeasure(seg, density=np.array([0.0, 1.0]))
    est_seg, quad_seg = occupation_density_check(seg, length, TreePoint(0, 0.0), seg.node_point(1), h,
                                                 replicas, seed)
    T = three_leaf_tree()
    lam = EdgeMeasure(T, density=np.r_[0.0, np.ones(5)])
    est, quad = occupation_density_check(T, lam, T.node_point(2), T.node_point(4), h, replicas, seed + 1)
    rel = max(abs(est_seg.value - quad_seg) / quad_seg, abs(est.value - quad) / quad)
    ok = quad_seg == 1.0 and rel <= 0.05
    return CheckResult("mean occupation", ok,
                       f"segment {est_seg.value:.4f} vs {quad_seg}, 3-leaf {est.value:.4f} vs {quad:.4f}, "
                       f"max rel err {rel:.3%}")


@_timed
def check_occupation_tail(R=2, n=50, replicas=10_000, seed=6):
    msgs, ok = [], True
    for x in (0, 1):
        curve = occupation_tail(R, n, x, replicas, derive_seed(seed, x))
        good, _, worst = exponential_envelope(curve)
        ok &= bool(good)
        msgs.append(f"x={x}: slope {curve.slope:.3f}, worst excess {worst:.2f} SE")
    return CheckResult("occupation tail envelope", ok, "; ".join(msgs))


@_timed
def check_structural(seed=7, instances=100, trees=50):
    from .discrete_tree import contour_vertices

    rng = make_rng(seed)
    # contour bijection
    total = 0
    for n in range(1, 8):
        for t in enumerate_ordered_trees(n):
            if tree_from_depth(contour_and_depth(t)) != t:
                return CheckResult("structural exactness", False, f"contour round trip failed on {t}")
            total += 1
    # recovery and clock-increment identities
    for i in range(instances):
        n = int(rng.integers(5, 60))
        t = sample_gw_conditioned("geometric:0.5", n, derive_seed(seed, 1, i))
        k = int(rng.integers(1, 5))
        verts = select_vertices(t, None, rng.random(k))
        sub = reduced_subtree(t, verts)
        p = simulate_srw(t, int(rng.integers(20, 400)), derive_seed(seed, 2, i))
        projected, dec = project_and_decompose(p, sub)
        m = np.arange(len(p))
        if not np.array_equal(projected, dec.J[dec.tau(m)]):
            return CheckResult("structural exactness", False, f"recovery identity failed on instance {i}")
        counts = projected_counts(sub)
        mass = np.array([Fraction(int(c), n) for c in counts], dtype=object)
        inc = a_hat(dec.J, sub, mass, n)
        direct = a_hat_integral(dec.J, sub, mass, n)
        expect = [Fraction(2 * int(counts[v]), int(sub.degree[v])) for v in dec.J[:-1]]
        if list(np.diff(inc)) != expect or list(inc) != list(direct):
            return CheckResult("structural exactness", False, f"clock increment identity failed on {i}")
    # isometry
    worst = 0.0
    for i in range(trees):
        w = sample_brownian_excursion(512, derive_seed(seed, 3, i))
        T = reduced_tree_from_excursion(w, rng.integers(1, 512, int(rng.integers(1, 8))) / 512)
        emb = TreeEmbedding(T)
        pts = [T.node_point(v) for v in range(T.n_nodes)]
        X = emb.cloud(pts)
        for a in range(len(pts)):
            for b in range(len(pts)):
                worst = max(worst, abs(np.abs(X[a] - X[b]).sum() - T.distance(pts[a], pts[b])))
    ok = worst <= 1e-12
    return CheckResult("structural exactness", ok,
                       f"{total} contour round trips, {instances} walk instances, "
                       f"isometry max err {worst:.1e} on {trees} trees")


@_timed
def check_gamma_uniform(max_n=6):
    count = 0
    for n in range(1, max_n + 1):
        for t in enumerate_ordered_trees(n):
            law = gamma_law_exact(t)
            if any(p != Fraction(1, n) for p in law.values()):
                return CheckResult("vertex selection uniform", False, f"non-uniform on {t.parent}")
            count += 1
    return CheckResult("vertex selection uniform", True, f"exactly uniform on {count} trees")


@_timed
def check_a_hat_trend(excursion_seed=2024, h=0.01, path_seeds=20, ks=(2, 4, 8, 16)):
    sups = a_hat_trend(excursion_seed, h, path_seeds, ks)
    med = [float(np.median(sups[k])) for k in ks]
    ok = trend_verdict(med)
    return CheckResult("continuum clock trend", ok,
                       "medians " + ", ".join(f"k={k}: {m:.4f}" for k, m in zip(ks, med)))


def formula_suite(fast=False):
    """All exact-oracle and Monte Carlo checks; ``fast`` cuts replica counts."""
    f = 10 if fast else 1
    return [
        check_exit_time_formula(),
        check_second_moment_bound(),
        check_visit_count_law(replicas=100_000 // f),
        check_hitting_probability(replicas=100_000 // f),
        check_mean_occupation(replicas=100_000 // f),
        check_occupation_tail(),
        check_structural(),
        check_gamma_uniform(),
    ]


def run_formula_suite(fast=False):
    """Run :func:`formula_suite`; returns ``(all passed, results)``."""
    res = formula_suite(fast)
    return all(r.passed for r in res), res
