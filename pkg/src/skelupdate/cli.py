"""Command line entry point: factor, update, bench-ex1, bench-ex2, verify."""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from typing import List, Optional

import numpy as np

from . import io
from .bench import ExperimentConfig, emit, example1_problem, example2_problem, sweep
from .factor import build
from .geometry import TreeError, matched_tree
from .kernels import diff
from .update import update

_FLAGS = [
    ("problem", str), ("N", int), ("eps", float), ("kind", str), ("mode", str),
    ("kappa", float), ("n_occ", int), ("n_proxy", int), ("seed", int), ("repeats", int),
    ("oracle_cap", int),
]


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value file; flags override its entries")
    for name, typ in _FLAGS:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)


def _config(args, **overrides) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config) if args.config else None
    kw = dataclasses.asdict(base) if base else {}
    for name, _ in _FLAGS:
        val = getattr(args, name)
        if val is not None:
            kw[name] = val
    kw.update(overrides)
    if base is not None and ("problem" in overrides or args.problem):
        # problem-dependent defaults must be re-derived
        for key in ("kind", "n_occ", "oracle_cap"):
            if getattr(args, key) is None:
                kw[key] = None
    return ExperimentConfig(**kw)


def _problem(cfg: ExperimentConfig):
    return example1_problem(cfg) if cfg.problem == "circle-bump" else example2_problem(cfg)


def cmd_factor(args) -> int:
    cfg = _config(args)
    old, new = _problem(cfg)
    tree_old, _ = matched_tree(old.disc, new.disc, cfg.n_occ)
    t0 = time.perf_counter()
    F = build(cfg.kind, old, tree_old, cfg.eps, cfg.n_occ, cfg.n_proxy)
    t_f = time.perf_counter() - t0
    io.save(F, args.out)
    print(f"N={F.N} levels={F.tree.L} root={len(F.root_dofs)} t_f={t_f:.4g}s -> {args.out}")
    return 0


def cmd_update(args) -> int:
    F_old = io.load(args.factorization)
    cfg = _config(args, N=F_old.N, eps=F_old.eps, kind=F_old.kind)
    _, new = _problem(cfg)
    pert = diff(F_old.kernel, new)
    try:
        tree_new = F_old.tree.assign(new.disc.points)
    except TreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    F_new, marks = update(F_old, new, pert, tree_new)
    t_u = time.perf_counter() - t0
    if args.out:
        io.save(F_new, args.out)
    print("N,m,marked_total,t_u_seconds")
    print(f"{F_new.N},{pert.m},{marks.total},{t_u!r}")
    return 0


def _bench(args, problem: str) -> int:
    cfg = _config(args, problem=problem)
    sizes = args.sizes or [cfg.N]
    rows = sweep(cfg, sizes)
    emit(rows, args.out, args.plot)
    bad = [r for r in rows if not r["passed"]]
    for r in rows:
        if r.get("sub_asymptotic"):
            print(f"note: N={r['N']} kappa={r['kappa']} is sub-asymptotic", file=sys.stderr)
    for r in bad:
        print(f"FAILED: N={r['N']} relerr={r['relerr']} exact_match={r['exact_match']}",
              file=sys.stderr)
    return 1 if bad else 0


def cmd_verify(args) -> int:
    F = io.load(args.factorization)
    tol = (100 if F.kind == "hif" else 10) * F.eps
    b = np.random.default_rng(args.seed or 0).standard_normal(F.N)
    res = float(np.linalg.norm(F.kernel.matvec(F.solve(b)) - b) / np.linalg.norm(b))
    fresh = build(F.kind, F.kernel, F.tree, F.eps, F.tree.n_occ, F.n_proxy)
    same = F.same_blocks(fresh)
    ok = res <= tol and same
    print(f"residual={res:.3e} (tol {tol:.1e}) bitwise_equal_fresh={same} "
          f"{'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skelupdate", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("factor", help="factor the unperturbed problem and save it")
    _add_config_flags(f)
    f.add_argument("--out", required=True, help="factorization file to write")
    f.set_defaults(func=cmd_factor)

    u = sub.add_parser("update", help="update a saved factorization to the perturbed problem")
    _add_config_flags(u)
    u.add_argument("--factorization", required=True)
    u.add_argument("--out", help="file for the updated factorization")
    u.set_defaults(func=cmd_update)

    for name, problem in (("bench-ex1", "circle-bump"), ("bench-ex2", "lippmann-schwinger")):
        b = sub.add_parser(name, help=f"build/perturb/update sweep for {problem}")
        _add_config_flags(b)
        b.add_argument("--sizes", type=int, nargs="+", help="values of N to sweep")
        b.add_argument("--out", default="-", help="CSV path (default stdout)")
        b.add_argument("--plot", help="optional scaling plot (png/pdf)")
        b.set_defaults(func=lambda a, pr=problem: _bench(a, pr))

    v = sub.add_parser("verify", help="check a saved factorization against its problem")
    v.add_argument("--factorization", required=True)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
