"""Experiment harness for the two perturbation examples.

Example 1 moves the points of a bumped circle back onto the plain
circle (rskelf); example 2 adds a Gaussian bump to a Lippmann-Schwinger
scatterer (hif). Each run builds, perturbs, updates and verifies.
"""

from __future__ import annotations

import csv
import dataclasses
import gc
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import linalg

from ._validation import check_eps, check_int, check_kind
from .factor import Factorization, build
from .geometry import matched_tree
from .kernels import (KernelMatrix, bump_circle, diff, helmholtz_ls, laplace_dlp, ls_grid,
                      perturbation_scale, scatterer_w0, scatterer_w1)
from .skel import lu_logdet
from .update import update

PROBLEMS = ("circle-bump", "lippmann-schwinger")
MODES = ("fixed-proportion", "fixed-count")
COLUMNS = ("problem", "N", "eps", "kappa", "mode", "t_f_seconds", "t_u_seconds",
           "marked_total", "relerr", "exact_match")
ORACLE_CAP = {"circle-bump": 8192, "lippmann-schwinger": 4096}
DEFAULT_N_OCC = {"circle-bump": 64, "lippmann-schwinger": 16}


@dataclass
class ExperimentConfig:
    problem: str = "circle-bump"
    N: int = 4096
    eps: float = 1e-6
    kind: Optional[str] = None  # rskelf for the circle, hif for the grid
    mode: str = "fixed-count"
    kappa: float = 0.1
    n_occ: Optional[int] = None
    n_proxy: int = 64
    seed: int = 0
    output: str = "-"
    repeats: int = 3
    oracle_cap: Optional[int] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        check_int(self.N, "N", 4)
        check_eps(self.eps)
        if self.kind is None:
            self.kind = "rskelf" if self.problem == "circle-bump" else "hif"
        check_kind(self.kind)
        if self.n_occ is None:
            self.n_occ = DEFAULT_N_OCC[self.problem]
        check_int(self.n_occ, "n_occ", 4)
        check_int(self.n_proxy, "n_proxy", 4)
        check_int(self.seed, "seed", 0)
        check_int(self.repeats, "repeats", 1)
        if self.oracle_cap is None:
            self.oracle_cap = ORACLE_CAP[self.problem]
        check_int(self.oracle_cap, "oracle_cap", 0)
        if not (isinstance(self.kappa, (int, float)) and self.kappa > 0):
            raise ValueError("kappa must be positive")
        if self.problem == "circle-bump" and self.mode == "fixed-count" and self.N <= 1000:
            raise ValueError("fixed-count windows need N > 1000")
        if self.problem == "lippmann-schwinger":
            side = math.isqrt(self.N)
            if side * side != self.N:
                raise ValueError("lippmann-schwinger needs N to be a perfect square")
            if self.mode != "fixed-count":
                raise ValueError("the scatterer perturbation is fixed-count only")

    # ---- key=value file form --------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if val is None:
                val = ""
            elif isinstance(val, float):
                val = repr(val)  # exact round trip
            lines.append(f"{f.name}={val}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        types = {f.name: f for f in dataclasses.fields(cls)}
        kw = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"expected key=value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"unknown key {key!r}")
            kw[key] = _parse_value(key, val)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


_INTS = {"N", "n_occ", "n_proxy", "seed", "repeats", "oracle_cap"}
_FLOATS = {"eps", "kappa"}


def _parse_value(key: str, val: str):
    if val == "":
        return None
    if key in _INTS:
        return int(val)
    if key in _FLOATS:
        return float(val)
    return val


# ---------------------------------------------------------------------------
# oracle


class DenseOracle:
    """Explicit matrix with an LU factorization, for verification only."""

    def __init__(self, kernel: KernelMatrix, cap: int = 8192):
        if kernel.N > cap:
            raise ValueError(f"N={kernel.N} exceeds the dense oracle cap {cap}")
        self.A = kernel.dense()
        self.lu = linalg.lu_factor(self.A)

    def solve(self, b):
        return linalg.lu_solve(self.lu, b)

    def matvec(self, x):
        return self.A @ x

    def logdet(self) -> complex:
        return lu_logdet(self.lu)


def dense_oracle(kernel: KernelMatrix, cap: int = 8192) -> DenseOracle:
    return DenseOracle(kernel, cap)


# ---------------------------------------------------------------------------
# problems


def circle_window(N: int, mode: str):
    if mode == "fixed-proportion":
        return 0.9 * np.pi, 1.1 * np.pi
    return np.pi - 1000 * np.pi / N, np.pi + 1000 * np.pi / N


def example1_problem(cfg: ExperimentConfig):
    t_m, t_M = circle_window(cfg.N, cfg.mode)
    old, new = bump_circle(cfg.N, t_m, t_M), bump_circle(cfg.N)
    return laplace_dlp(old), laplace_dlp(new)


def example2_problem(cfg: ExperimentConfig):
    side = math.isqrt(cfg.N)
    old = ls_grid(side, scatterer_w0)
    s = perturbation_scale(old.points)
    new = ls_grid(side, lambda x: scatterer_w1(x, s))
    k = 2 * np.pi * cfg.kappa
    return helmholtz_ls(old, k), helmholtz_ls(new, k)


def sub_asymptotic(cfg: ExperimentConfig, F: Factorization) -> bool:
    """Leaf boxes wider than a radian of wavelength."""
    if cfg.problem != "lippmann-schwinger":
        return False
    leaf_width = 2 * F.tree.root.half_width / (1 << F.tree.L)
    return 2 * np.pi * cfg.kappa * leaf_width > 1.0


def median_time(fn: Callable, repeats: int = 3):
    """Median wall-clock seconds of ``repeats`` calls and the last result.

    The garbage collector is paused while timing, as timeit does.
    """
    times, out = [], None
    enabled = gc.isenabled()
    try:
        for _ in range(repeats):
            gc.collect()
            gc.disable()
            t0 = time.perf_counter()
            out = fn()
            times.append(time.perf_counter() - t0)
            if enabled:
                gc.enable()
    finally:
        if enabled:
            gc.enable()
    return float(np.median(times)), out


def _run(cfg: ExperimentConfig, old: KernelMatrix, new: KernelMatrix, tol: float) -> dict:
    tree_old, tree_new = matched_tree(old.disc, new.disc, cfg.n_occ)
    pert = diff(old, new)
    t_f, F_old = median_time(
        lambda: build(cfg.kind, old, tree_old, cfg.eps, cfg.n_occ, cfg.n_proxy), cfg.repeats)
    t_u, (F_new, marks) = median_time(
        lambda: update(F_old, new, pert, tree_new), cfg.repeats)
    row = {"problem": cfg.problem, "N": cfg.N, "eps": cfg.eps, "kappa": cfg.kappa,
           "mode": cfg.mode, "t_f_seconds": t_f, "t_u_seconds": t_u,
           "marked_total": marks.total, "relerr": float("nan"), "exact_match": "unverified"}
    if cfg.N <= cfg.oracle_cap:
        rng = np.random.default_rng(cfg.seed)
        b = rng.standard_normal(cfg.N)
        if cfg.problem == "circle-bump":
            row["relerr"] = float(np.linalg.norm(new.matvec(F_new.solve(b)) - b)
                                  / np.linalg.norm(b))
        else:
            xd = DenseOracle(new, cfg.oracle_cap).solve(b)
            row["relerr"] = float(np.linalg.norm(F_new.solve(b) - xd) / np.linalg.norm(xd))
        fresh = build(cfg.kind, new, tree_new, cfg.eps, cfg.n_occ, cfg.n_proxy)
        row["exact_match"] = F_new.same_blocks(fresh)
    row["passed"] = row["exact_match"] is not False and not row["relerr"] > tol
    row["sub_asymptotic"] = sub_asymptotic(cfg, F_new)
    return row


def run_example1(cfg: ExperimentConfig) -> List[dict]:
    if cfg.problem != "circle-bump":
        raise ValueError("run_example1 needs problem=circle-bump")
    old, new = example1_problem(cfg)
    return [_run(cfg, old, new, 10 * cfg.eps)]


def run_example2(cfg: ExperimentConfig) -> List[dict]:
    if cfg.problem != "lippmann-schwinger":
        raise ValueError("run_example2 needs problem=lippmann-schwinger")
    old, new = example2_problem(cfg)
    return [_run(cfg, old, new, 100 * cfg.eps)]


def run(cfg: ExperimentConfig) -> List[dict]:
    return run_example1(cfg) if cfg.problem == "circle-bump" else run_example2(cfg)


def sweep(cfg: ExperimentConfig, sizes: Sequence[int]) -> List[dict]:
    rows = []
    for n in sizes:
        rows.extend(run(dataclasses.replace(cfg, N=int(n))))
    return rows


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def emit(rows: Sequence[dict], out=None, plot: Optional[str] = None) -> None:
    """Write rows as CSV to ``out`` (path, file object or stdout)."""
    close = False
    if out is None or out == "-":
        fh = sys.stdout
    elif hasattr(out, "write"):
        fh = out
    else:
        fh, close = open(out, "w", newline=""), True
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])
    finally:
        if close:
            fh.close()
    if plot:
        scaling_plot(rows, plot)


def scaling_plot(rows: Sequence[dict], path: str) -> None:
    """Log-log t_f and t_u against N with O(N) and O(log^4 N) guides."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    Ns = np.array([r["N"] for r in rows], dtype=float)
    tf = np.array([r["t_f_seconds"] for r in rows])
    tu = np.array([r["t_u_seconds"] for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(Ns, tf, "o-", label="factor")
    ax.loglog(Ns, tu, "s-", label="update")
    ax.loglog(Ns, tf[0] * Ns / Ns[0], "k--", lw=0.8, label="O(N)")
    ax.loglog(Ns, tu[0] * np.log(Ns) ** 4 / np.log(Ns[0]) ** 4, "k:", lw=0.8,
              label="O(log^4 N)")
    ax.set_xlabel("N")
    ax.set_ylabel("seconds")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
