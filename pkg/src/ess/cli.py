"""``ess`` command line: analyze, gen, train, factor, solve, bench."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .sched import RewardWeights
from .sparse import (MatrixMarketError, load_matrix_market, load_vector, residual_norm,
                     save_matrix_market, save_vector)


def _weights(args) -> RewardWeights:
    return RewardWeights(args.w_time, args.w_mem / 2**30, args.w_balance)


def _add_weights(p) -> None:
    p.add_argument("--w-time", type=float, default=1.0, help="reward weight per second")
    p.add_argument("--w-mem", type=float, default=1.0, help="reward weight per GiB")
    p.add_argument("--w-balance", type=float, default=0.5, help="reward weight on imbalance")


def _add_policy(p) -> None:
    p.add_argument("--threads", type=int, default=1)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--qtable", type=Path)
    g.add_argument("--policy", choices=["static", "serial"], default="static")
    p.add_argument("--pivot-tol", type=float, default=1e-3)
    p.add_argument("--trace", type=Path, help="write the schedule trace CSV here")
    _add_weights(p)


def _policy(args):
    if args.qtable is not None:
        from .qlearn import load_qtable
        return load_qtable(args.qtable)
    return args.policy


def cmd_analyze(args) -> int:
    from .symbolic import analyze

    a = load_matrix_market(args.matrix)
    blocks = None
    extra = {}
    if args.blocks:
        from .blocks import find_diagonal_blocks, reuse_plan
        blocks = find_diagonal_blocks(a, args.border)
        plan = reuse_plan(a, blocks)
        nb = len(blocks.blocks)
        extra = {"blocks": nb, "groups": plan.n_groups,
                 "reuse_ratio": nb / plan.n_groups if plan.n_groups else 0.0}
    an = analyze(a, order=args.order, relax=args.relax, blocks=blocks)
    st = dict(an.stats, **extra)
    for key in ("n", "nnz", "fill", "frontals", "tree_height", *extra):
        val = st[key]
        print(f"{key:12s} {val:.3f}" if isinstance(val, float) else f"{key:12s} {val}")
    print("workloads   ", " ".join(map(str, st["workloads"])))
    if args.json:
        doc = dict(st, frontal_parents=list(an.tree.parent),
                   frontal_columns=[an.order.inverse[f].tolist() for f in an.partition.frontals])
        args.json.write_text(json.dumps(doc, indent=1) + "\n")
    return 0


def cmd_gen(args) -> int:
    from .matgen import GenSpec, generate

    spec = GenSpec.load(args.templates)
    if args.seed is not None:
        spec = GenSpec(spec.block_templates, spec.block_counts, spec.network_size,
                       spec.coupling_density, args.seed, spec.ratio)
    a, m = generate(spec)
    save_matrix_market(a, args.out)
    if args.blockmap:
        args.blockmap.write_text(json.dumps(m.to_dict()) + "\n")
    print(f"wrote {args.out}: n={a.n} nnz={a.nnz} blocks={len(m.blocks)}")
    return 0


def cmd_train(args) -> int:
    from .qlearn import Hyper, save_qtable, train

    files = sorted(Path(args.corpus).glob("*.mtx"))
    if not files:
        print(f"no .mtx files in {args.corpus}", file=sys.stderr)
        return 2
    corpus = [load_matrix_market(f) for f in files]
    hyper = Hyper(alpha=args.alpha, gamma=args.gamma, epsilon=args.epsilon, target=args.target)
    q = train(corpus, args.threads, hyper, _weights(args), args.episodes, args.seed,
              real_exec=args.real_exec, restarts=args.restarts)
    save_qtable(q, args.out)
    for i, why in q.skipped:
        print(f"skipped {files[i].name}: {why}", file=sys.stderr)
    print(f"wrote {args.out}: {len(q.entries)} entries from {len(corpus)} matrices")
    return 0


def _factor(args, a):
    from .numeric import parallel_factor

    lu, trace = parallel_factor(a, policy=_policy(args), cores=args.threads,
                                pivot_tol=args.pivot_tol, weights=_weights(args))
    if args.trace:
        trace.write_csv(args.trace)
    return lu, trace


def cmd_factor(args) -> int:
    from .numeric import solve

    a = load_matrix_market(args.matrix)
    lu, trace = _factor(args, a)
    b = a.matvec(np.ones(a.n))
    res = residual_norm(a, solve(lu, b), b)
    print(f"n            {a.n}")
    print(f"frontals     {lu.analysis.n_frontals}")
    print(f"tasks        {len(trace.rows)}")
    print(f"delayed      {lu.delayed}")
    print(f"makespan_us  {trace.makespan_us:.1f}")
    print(f"peak_bytes   {trace.peak_bytes}")
    print(f"residual     {res:.3e}")
    print(f"digest       {hashlib.sha256(lu.values_digest()).hexdigest()}")
    print(f"kernels      {kernels.BACKEND}")
    return 0


def cmd_solve(args) -> int:
    from .numeric import solve

    a = load_matrix_market(args.matrix)
    b = load_vector(args.rhs)
    lu, _ = _factor(args, a)
    x = solve(lu, b)
    save_vector(x, args.out)
    print(f"residual {residual_norm(a, x, b):.3e}")
    return 0


def cmd_bench(args) -> int:
    from .bench import bench

    q = None
    if args.qtable is not None:
        from .qlearn import load_qtable
        q = load_qtable(args.qtable)
    threads = [int(t) for t in args.threads.split(",")]
    policies = args.policies.split(",")
    rep = bench(args.corpus, threads, policies, args.repeats, q)
    print(rep.table())
    if args.out:
        rep.write_csv(args.out)
    if not rep.ok:
        print("residual check failed", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ess", description="Task-tree scheduled multifrontal LU.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("analyze", help="symbolic analysis report")
    p.add_argument("matrix", type=Path)
    p.add_argument("--order", choices=["amd", "natural"], default="amd")
    p.add_argument("--relax", type=int, default=4)
    p.add_argument("--json", type=Path)
    p.add_argument("--blocks", action="store_true", help="detect and reuse diagonal blocks")
    p.add_argument("--border", type=int, default=0, help="trailing border columns")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("gen", help="generate a synthetic matrix")
    p.add_argument("--templates", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--blockmap", type=Path)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="learn a Q-table offline")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--target", choices=["next", "max"], default="next")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=1,
                   help="train from this many consecutive seeds, keep the best greedy return")
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--real-exec", action="store_true", help="train on wall-clock execution")
    _add_weights(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("factor", help="factor a matrix")
    p.add_argument("matrix", type=Path)
    _add_policy(p)
    p.set_defaults(fn=cmd_factor)

    p = sub.add_parser("solve", help="factor and solve A x = b")
    p.add_argument("matrix", type=Path)
    p.add_argument("--rhs", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_policy(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("bench", help="timing table over a corpus")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--threads", default="1,2,4")
    p.add_argument("--policies", default="serial,static")
    p.add_argument("--qtable", type=Path)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out", type=Path)
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.fn(args)
    except (MatrixMarketError, ValueError, ArithmeticError, OSError) as exc:
        print(f"ess: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
