"""The eight acceptance criteria, each at its stated tolerance.

Every test reports one status line (collected in the terminal summary)
before asserting.
"""

import warnings

import numpy as np
import pytest
from scipy import linalg

from skelupdate.bench import ExperimentConfig, example1_problem, example2_problem, run
from skelupdate.compress import interp_decomp
from skelupdate.factor import hif_build, rskelf_build
from skelupdate.geometry import build_tree, matched_tree
from skelupdate.kernels import (Perturbation, bump_circle, diff, helmholtz_ls, laplace_dlp,
                                ls_grid, scatterer_w0)
from skelupdate.skel import dense_operators, skeletonize_dense
from skelupdate.update import mark_hif, mark_rskelf, update

_CACHE = {}


def _ls(side):
    if side not in _CACHE:
        _CACHE[side] = helmholtz_ls(ls_grid(side, scatterer_w0), 2 * np.pi * 0.1)
    return _CACHE[side]


def _ls_hif(side, eps):
    key = (side, eps)
    if key not in _CACHE:
        _CACHE[key] = hif_build(_ls(side), eps=eps, n_occ=16)
    return _CACHE[key]


def test_criterion_1_factorization_accuracy(acceptance_report):
    rng = np.random.default_rng(1)
    worst, fails = 0.0, []
    for N in (1024, 2048, 4096):
        K = laplace_dlp(bump_circle(N, 0.9 * np.pi, 1.1 * np.pi))
        for eps in (1e-3, 1e-6, 1e-9):
            F = rskelf_build(K, eps=eps)
            b = rng.standard_normal(N)
            res = np.linalg.norm(K.matvec(F.solve(b)) - b) / np.linalg.norm(b)
            worst = max(worst, res / eps)
            if res > 10 * eps:
                fails.append((N, eps, res))
    ok = not fails
    acceptance_report(1, "PASS" if ok else "FAIL",
                      f"max residual/eps = {worst:.3g} (limit 10) {fails or ''}")
    assert ok


def test_criterion_2_hif_accuracy(acceptance_report):
    rng = np.random.default_rng(2)
    worst, fails = 0.0, []
    for side in (32, 64):
        K = _ls(side)
        lu = linalg.lu_factor(K.dense())
        b = rng.standard_normal(side * side)
        xd = linalg.lu_solve(lu, b)
        for eps in (1e-3, 1e-6):
            err = np.linalg.norm(_ls_hif(side, eps).solve(b) - xd) / np.linalg.norm(xd)
            worst = max(worst, err / eps)
            if err > 100 * eps:
                fails.append((side, eps, err))
    ok = not fails
    acceptance_report(2, "PASS" if ok else "FAIL",
                      f"max error/eps = {worst:.3g} (limit 100) {fails or ''}")
    assert ok


def _exactness(old, new, kind, n_occ, eps, tree_pair):
    t_old, t_new = tree_pair
    build = rskelf_build if kind == "rskelf" else hif_build
    F_old = build(old, t_old, eps=eps)
    F_new, _ = update(F_old, new, diff(old, new), t_new)
    fresh = build(new, t_new, eps=eps)
    X = np.random.default_rng(3).standard_normal((new.N, 10))
    a, b = F_new.apply(X), fresh.apply(X)
    agree = float(np.max(np.linalg.norm(a - b, axis=0) / np.linalg.norm(b, axis=0)))
    return F_new.same_blocks(fresh), agree


def test_criterion_3_update_exactness(acceptance_report):
    results = {}
    for mode in ("fixed-proportion", "fixed-count"):
        cfg = ExperimentConfig(N=4096, eps=1e-6, mode=mode)
        old, new = example1_problem(cfg)
        results[f"circle {mode}"] = _exactness(old, new, "rskelf", 64, 1e-6,
                                               matched_tree(old.disc, new.disc, 64))
    cfg = ExperimentConfig(problem="lippmann-schwinger", N=1024, eps=1e-6)
    old, new = example2_problem(cfg)
    tree = build_tree(old.disc, 16)
    results["LS 32^2"] = _exactness(old, new, "hif", 16, 1e-6, (tree, tree))
    ok = all(same and agree <= 1e-13 for same, agree in results.values())
    detail = "; ".join(f"{k}: bitwise={s} apply={a:.1e}" for k, (s, a) in results.items())
    acceptance_report(3, "PASS" if ok else "FAIL", detail)
    assert ok


def test_criterion_4_marked_set_bounds(acceptance_report):
    rng = np.random.default_rng(4)
    worst = {"rskelf": 0, "hif": 0}
    violations = 0
    for L in (4, 5, 6, 7):
        disc = ls_grid(2 ** (L + 1))  # four points per leaf
        tree = build_tree(disc, 4)
        assert tree.L == L and len(tree.levels[L]) == 4 ** L
        for leaf in rng.choice(tree.levels[L], 50, replace=False):
            pert = Perturbation(tree.boxes[leaf].dofs, "one leaf", disc, disc)
            for kind, fn, cap in (("rskelf", mark_rskelf, 25), ("hif", mark_hif, 81)):
                marks = fn(tree, pert)
                biggest = max(len(marks[float(l)]) for l in range(1, L + 1))
                worst[kind] = max(worst[kind], biggest)
                violations += biggest > cap
    ok = violations == 0
    acceptance_report(4, "PASS" if ok else "FAIL",
                      f"max |M| rskelf {worst['rskelf']} (<=25), hif {worst['hif']} (<=81), "
                      f"{violations} violations")
    assert ok


def test_criterion_5_update_scaling(acceptance_report):
    sizes = [2 ** e for e in range(12, 18)]
    fc = [run(ExperimentConfig(N=N, eps=1e-6, mode="fixed-count", oracle_cap=0))[0]
          for N in sizes]
    fp = [run(ExperimentConfig(N=N, eps=1e-6, mode="fixed-proportion", oracle_cap=0))[0]
          for N in sizes]
    marked = [r["marked_total"] for r in fc]
    steps = np.diff(marked)
    ratio = [r["t_u_seconds"] / r["t_f_seconds"] for r in fc]
    inversions = int(np.sum(np.diff(ratio) > 0))
    growth = [b["t_u_seconds"] / a["t_u_seconds"] for a, b in zip(fp, fp[1:])]
    checks = {
        "marked increments <= 25": bool(np.all(steps <= 25)),
        "t_u/t_f decreasing (<=1 inversion)": inversions <= 1,
        "fixed-proportion t_u growth in [1.5, 3.0]": all(1.5 <= g <= 3.0 for g in growth),
    }
    ok = all(checks.values())
    detail = (f"sum|M| {marked} steps {steps.tolist()}; t_u/t_f "
              f"{[round(x, 4) for x in ratio]} ({inversions} inversions); t_u growth "
              f"{[round(g, 2) for g in growth]}; "
              + ", ".join(f"{k}: {'ok' if v else 'NO'}" for k, v in checks.items()))
    acceptance_report(5, "PASS" if ok else "FAIL", detail)
    assert ok


def test_criterion_6_id_contract(acceptance_report):
    rng = np.random.default_rng(6)
    bad_bound = bad_det = bad_mono = 0
    for _ in range(200):
        m, n = rng.integers(2, 81, size=2)
        r = int(rng.integers(1, min(m, n) + 1))
        noise = 10.0 ** rng.uniform(-14, -2)
        A = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        A += noise * np.linalg.norm(A, 2) * rng.standard_normal((m, n)) / np.sqrt(m * n)
        if rng.random() < 0.3:
            A = A * np.exp(rng.uniform(-5, 5, n))  # uneven column scales
        eps = float(rng.choice([1e-3, 1e-6, 1e-9, 1e-12]))
        idr = interp_decomp(A, eps)
        err = np.linalg.norm(A[:, idr.R] - A[:, idr.S] @ idr.T, 2) if len(idr.R) else 0.0
        bad_bound += err > 10 * eps * np.linalg.norm(A, 2)
        again = interp_decomp(A.copy(), eps)
        bad_det += not all(x.tobytes() == y.tobytes() for x, y in
                           zip((idr.S, idr.R, idr.T), (again.S, again.R, again.T)))
        bad_mono += interp_decomp(A, eps / 10).rank < idr.rank
    ok = bad_bound == bad_det == bad_mono == 0
    acceptance_report(6, "PASS" if ok else "FAIL",
                      f"200 matrices: bound violations {bad_bound}, nondeterministic {bad_det}, "
                      f"monotonicity violations {bad_mono}")
    assert ok


def test_criterion_7_skeletonization_oracle(acceptance_report):
    rng = np.random.default_rng(7)
    worst_off = worst_schur = 0.0
    fails = 0
    for _ in range(50):
        n = int(rng.integers(6, 61))
        k = int(rng.integers(2, n // 2 + 1))
        I = np.sort(rng.choice(n, k, replace=False))
        comp = np.setdiff1d(np.arange(n), I)
        A = rng.standard_normal((n, n)) + 2 * np.sqrt(n) * np.eye(n)
        rank = int(rng.integers(0, k + 1))
        C = rng.standard_normal((rank, k))
        noise = 10.0 ** rng.uniform(-13, -4)
        A[np.ix_(comp, I)] = (rng.standard_normal((len(comp), rank)) @ C
                              + noise * rng.standard_normal((len(comp), k)))
        A[np.ix_(I, comp)] = (rng.standard_normal((len(comp), rank)) @ C
                              + noise * rng.standard_normal((len(comp), k))).T
        eps = float(rng.choice([1e-3, 1e-6, 1e-9]))
        sk = skeletonize_dense(A, I, eps)
        Q, Mh, H = dense_operators(sk, n)
        Z = Mh @ Q.T @ A @ Q @ H
        rest = np.setdiff1d(np.arange(n), sk.R)
        scale = np.linalg.norm(A, 2)
        off = max(np.linalg.norm(Z[np.ix_(sk.R, rest)], 2),
                  np.linalg.norm(Z[np.ix_(rest, sk.R)], 2)) if len(sk.R) else 0.0
        s, r, T = sk.S, sk.R, sk.T
        D_SR = A[np.ix_(s, r)] - A[np.ix_(s, s)] @ T
        D_RS = A[np.ix_(r, s)] - T.T @ A[np.ix_(s, s)]
        ref = A[np.ix_(s, s)] - D_SR @ np.linalg.solve(sk.D_RR, D_RS) if len(r) else \
            A[np.ix_(s, s)]
        schur = (np.linalg.norm(sk.D_SS - ref) / np.linalg.norm(ref)) if ref.size else 0.0
        worst_off = max(worst_off, off / (eps * scale))
        worst_schur = max(worst_schur, schur)
        fails += off > 10 * eps * scale or schur > 1e-13
    ok = fails == 0
    acceptance_report(7, "PASS" if ok else "FAIL",
                      f"50 matrices: max off-block/(eps|A|) {worst_off:.3g} (<=10), max D_SS "
                      f"rel diff {worst_schur:.2e} (<=1e-13), {fails} failures")
    assert ok


def test_criterion_8_skeleton_growth(acceptance_report):
    F = _ls_hif(64, 1e-6)
    L = F.tree.L
    box = [(int(t), mean) for t, _, mean, _ in F.skeleton_stats() if float(t).is_integer()]
    x = np.array([L - lvl for lvl, _ in box], dtype=float)
    k = np.array([mean for _, mean in box])
    a, b = np.polyfit(x, k, 1)
    fit = a * x + b
    dev = float(np.max(np.abs(k - fit) / np.abs(fit)))
    ok = dev <= 0.5
    detail = (f"mean |S| by L-l {dict(zip(x.astype(int).tolist(), np.round(k, 1).tolist()))}; "
              f"fit {a:.2f}(L-l)+{b:.2f}; max deviation {dev:.0%} (<=50%)")
    if not ok:
        warnings.warn(f"skeleton growth does not fit O(L-l): {detail}")
    acceptance_report(8, "PASS" if ok else "WARN", detail)
