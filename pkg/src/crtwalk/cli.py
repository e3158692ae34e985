"""Command-line entry point (``crtwalk``)."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np


def _common(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker processes")


def _config(args, **defaults):
    from .harness import ExperimentConfig

    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig(**defaults)
    if args.seed is not None:
        cfg.master_seed = args.seed
    cfg.out_dir = args.out
    return cfg.validate()


def _excursion_tree(seed, k, grid_n):
    from ._seeding import make_rng
    from .excursion import sample_brownian_excursion
    from .metric_tree import reduced_tree_from_excursion

    w = sample_brownian_excursion(grid_n, seed)
    u = w.snap(make_rng(seed, 5).random(k))
    return w, reduced_tree_from_excursion(w, u)


def cmd_sample_tree(args):
    from .discrete_tree import contour_and_depth, sample_gw_conditioned

    seed = args.seed or 0
    t = sample_gw_conditioned(args.offspring, args.n, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tree.json").write_text(t.to_json())
    np.savetxt(out / "contour.csv", contour_and_depth(t), fmt="%d", header="depth", comments="")
    print(f"tree with {t.n} vertices, height {t.height}, digest {t.digest()[:12]}")
    return 0


def cmd_simulate_walk(args):
    from .discrete_tree import OrderedTree, sample_gw_conditioned
    from .walk import simulate_srw, write_walk_log

    seed = args.seed or 0
    if args.tree:
        t = OrderedTree.from_json(Path(args.tree).read_text())
    else:
        t = sample_gw_conditioned(args.offspring, args.n, seed)
    steps = args.steps if args.steps is not None else int(t.n ** 1.5)
    p = simulate_srw(t, steps, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_walk_log(out / "walk.bin", p.steps, seed, t.digest(), {"tree_size": t.n})
    print(f"{steps} steps on a {t.n}-vertex tree; final depth {int(t.depth[p.steps[-1]])}")
    return 0


def cmd_embed(args):
    from .embedding import TreeEmbedding, write_cloud_jsonl

    seed = args.seed or 0
    _, T = _excursion_tree(seed, args.k, args.grid_n)
    emb = TreeEmbedding(T)
    cloud = emb.cloud(T.points_along(args.spacing))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tree.json").write_text(T.to_json())
    write_cloud_jsonl(cloud, out / "cloud.jsonl")
    print(f"{len(cloud)} points in {emb.dim} coordinates; total length {T.total_length:.4f}")
    return 0


def cmd_grid_bm(args):
    from .diffusion import grid_bm, grid_local_times

    seed = args.seed or 0
    _, T = _excursion_tree(seed, args.k, args.grid_n)
    p = grid_bm(T, args.h, args.horizon, seed, clock=args.clock, timing=args.timing, allow_coarse=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    times = p.times(args.clock)
    with open(out / "grid_bm.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "vertex", "clock"])
        for t, v in zip(times[:-1], p.vertices):
            wr.writerow([f"{t:.17g}", int(v), args.clock])
    L = grid_local_times(p)
    print(f"{len(p.vertices) - 1} steps on {p.grid.n} grid vertices; "
          f"occupation identity {L.occupation_identity():.6g} vs elapsed {times[-1] * (1 if args.clock == 'length' else p.grid.total_length):.6g}")
    return 0


def cmd_verify_formulas(args):
    from .harness import run_formula_suite

    ok, res = run_formula_suite(fast=args.fast)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "formula_checks.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["check", "passed", "detail"])
        for r in res:
            wr.writerow([r.name, r.passed, r.detail])
            print(r.line())
    return 0 if ok else 1


def _report(rep, out):
    rep.write(out)
    for line in rep.lines():
        print(line)
    return 0 if rep.passed else 1


def cmd_convergence(args):
    from .harness import run_quenched_convergence

    cfg = _config(args, experiment="convergence")
    if args.mode:
        cfg.mode = args.mode
    return _report(run_quenched_convergence(cfg, threads=args.threads), args.out)


def cmd_tightness(args):
    from .harness import run_tightness_suite

    cfg = _config(args, experiment="tightness", n_list=[2000], k_list=[2, 4, 8, 16, 32])
    return _report(run_tightness_suite(cfg, threads=args.threads), args.out)


def build_parser():
    ap = argparse.ArgumentParser(prog="crtwalk", description="Random walks on random trees and their limits")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-tree", help="conditioned Galton-Watson tree")
    _common(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--offspring", default="geometric:0.5")
    p.set_defaults(func=cmd_sample_tree)

    p = sub.add_parser("simulate-walk", help="simple random walk on a tree")
    _common(p)
    p.add_argument("--tree", help="tree JSON from sample-tree")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--offspring", default="geometric:0.5")
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_simulate_walk)

    for name, fn, helptext in (("embed", cmd_embed, "l1 embedding of an excursion subtree"),
                               ("grid-bm", cmd_grid_bm, "grid Brownian motion on an excursion subtree")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--k", type=int, default=8, help="number of sampled leaves")
        p.add_argument("--grid-n", type=int, default=1 << 14, help="excursion grid size")
        if name == "embed":
            p.add_argument("--spacing", type=float, default=0.01)
        else:
            p.add_argument("--h", type=float, default=0.01)
            p.add_argument("--horizon", type=float, default=1.0)
            p.add_argument("--clock", choices=["length", "normalized"], default="normalized")
            p.add_argument("--timing", choices=["constant", "hitting"], default="constant")
        p.set_defaults(func=fn)

    p = sub.add_parser("verify-formulas", help="exact-oracle and Monte Carlo checks")
    _common(p)
    p.add_argument("--fast", action="store_true", help="tenfold fewer Monte Carlo replicas")
    p.set_defaults(func=cmd_verify_formulas)

    p = sub.add_parser("convergence", help="walk-marginal and geometry trends along n")
    _common(p)
    p.add_argument("--mode", choices=["quenched", "annealed"])
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("tightness", help="clock and projection sup-statistics along k")
    _common(p)
    p.set_defaults(func=cmd_tightness)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("--seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
