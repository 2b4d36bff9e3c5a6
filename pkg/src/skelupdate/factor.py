"""rskelf and hif factorization drivers and the resulting operator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Hashable, Iterator, List, Optional, Sequence, Set

import numpy as np
from scipy import linalg

from .compress import DEFAULT_N_PROXY, proxy_rows, proxy_surface
from .geometry import QuadTree, build_tree, edge_cell_dofs, edge_cells
from .kernels import KernelMatrix
from .skel import SkelData, factor_block, lu_logdet, skeletonize

INF = np.iinfo(np.int32).max
KINDS = ("rskelf", "hif")


class CompressionError(RuntimeError):
    pass


@dataclass(eq=False)
class Stage:
    """One level (box stage) or half level (edge stage) of a factorization.

    ``skels[k]`` belongs to ``owners[k]`` and is None when that owner had
    no active DOFs. ``member[i]`` is the position of the set whose skeleton
    holds DOF i after this stage, or -1.
    """

    tag: float
    kind: str
    level: int
    owners: list
    skels: List[Optional[SkelData]]
    member: np.ndarray

    def sets(self) -> Iterator[SkelData]:
        return (sk for sk in self.skels if sk is not None)

    def n_redundant(self) -> int:
        return sum(len(sk.R) for sk in self.sets())


def schedule(tree: QuadTree, kind: str):
    """(tag, kind, level) of every stage, finest first."""
    out = []
    for lvl in range(tree.L, 0, -1):
        out.append((float(lvl), "box", lvl))
        if kind == "hif":
            out.append((lvl - 0.5, "edge", lvl))
    return out


def stage_owners(tree: QuadTree, kind: str, level: int) -> list:
    if kind == "box":
        return sorted(tree.levels[level])
    return tree.level_edges(level)


def root_limit(N: int, n_occ: int) -> float:
    return max(float(n_occ), 4.0 * np.sqrt(N) * np.log(max(N, 2)))


class Engine:
    """Matrix state between stages plus the per-owner skeletonization."""

    def __init__(self, kind: str, kernel: KernelMatrix, tree: QuadTree, eps: float,
                 n_proxy: int = DEFAULT_N_PROXY):
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if tree.n_points != kernel.N:
            raise ValueError("tree and kernel disagree on the number of DOFs")
        self.kind = kind
        self.kernel = kernel
        self.tree = tree
        self.eps = float(eps)
        self.n_proxy = int(n_proxy)
        self.N = kernel.N
        self.dtype = np.result_type(kernel.dtype, np.float64)
        self.points = kernel.disc.points
        self.stages: List[Stage] = []
        self.elim = np.full(self.N, INF, dtype=np.int32)
        # rskelf only ever reads the latest stage's skeleton blocks
        self.lookback = 1 if kind == "rskelf" else None

    # ---- matrix state -----------------------------------------------------
    def state_block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Current A(rows, cols): the newest D_SS covering an entry, else the kernel."""
        out = np.asarray(self.kernel.block(rows, cols), dtype=self.dtype)
        if not self.stages or len(rows) == 0 or len(cols) == 0:
            return out
        stages = self.stages[-self.lookback:] if self.lookback else self.stages
        filled = None if len(stages) == 1 else np.zeros(out.shape, dtype=bool)
        for st in reversed(stages):
            mr, mc = st.member[rows], st.member[cols]
            common = np.intersect1d(mr[mr >= 0], mc[mc >= 0])
            for k in common:
                ri = np.flatnonzero(mr == k)
                ci = np.flatnonzero(mc == k)
                sk = st.skels[k]
                sub = sk.D_SS[np.ix_(sk.s_positions(rows[ri]), sk.s_positions(cols[ci]))]
                idx = np.ix_(ri, ci)
                if filled is None:
                    out[idx] = sub
                    continue
                blk = out[idx]
                free = ~filled[idx]
                blk[free] = sub[free]
                out[idx] = blk
                filled[idx] = True
        return out

    def partners(self, I: np.ndarray) -> np.ndarray:
        """DOFs sharing a skeleton block with some DOF of I at an earlier stage."""
        got = []
        for st in self.stages:
            m = st.member[I]
            for k in np.unique(m[m >= 0]):
                got.append(st.skels[k].S)
        return np.unique(np.concatenate(got)) if got else np.zeros(0, np.intp)

    # ---- owners -----------------------------------------------------------
    def owner_geometry(self, kind: str, owner):
        tree = self.tree
        if kind == "box":
            box = tree.boxes[owner]
            return box.center, box.width, tree.nbor(owner)
        lvl = owner[1]
        width = 2.0 * tree.root.half_width / (1 << lvl)
        adj = tree.edge_boxes(owner)
        nb = set(adj)
        for b in adj:
            nb.update(tree.nbor(b))
        return np.asarray(tree.edge_center(owner)), width, tuple(sorted(nb))

    def owner_dofs(self, kind: str, owner, active: np.ndarray) -> np.ndarray:
        if kind == "box":
            d = self.tree.subtree_dofs(owner)
            return d[active[d]]
        return edge_cell_dofs(self.tree, owner, active, self.points)

    def near_field(self, I, nb_boxes, surf, active) -> np.ndarray:
        if not self.kernel.has_proxy:
            return np.setdiff1d(np.flatnonzero(active), I, assume_unique=True)
        parts = [self.tree.subtree_dofs(b) for b in nb_boxes]
        cand = np.concatenate(parts) if parts else np.zeros(0, np.intp)
        cand = cand[active[cand]]
        cand = cand[surf.inside(self.points[cand])]
        if self.kind == "hif":
            extra = self.partners(I)
            cand = np.concatenate([cand, extra[active[extra]]])
        return np.setdiff1d(cand, I)

    def skel_owner(self, kind: str, owner, I: np.ndarray, active: np.ndarray) -> SkelData:
        center, width, nb = self.owner_geometry(kind, owner)
        surf = proxy_surface(center, width, self.n_proxy, self.kernel.wavenumber)
        N = self.near_field(I, nb, surf, active)
        a_ii = self.state_block(I, I)
        stack = proxy_rows(self.kernel, I, self.state_block(N, I), self.state_block(I, N), surf)
        return skeletonize(owner, I, a_ii, stack, self.eps)

    # ---- stages -------------------------------------------------------------
    def run_stage(self, tag: float, kind: str, level: int, old: Optional[Stage] = None,
                  marked: Optional[Set[Hashable]] = None, verify: bool = False) -> Stage:
        """Skeletonize every owner of a stage, or only ``marked`` ones reusing ``old``."""
        t = len(self.stages)
        active = self.elim >= t
        owners = stage_owners(self.tree, kind, level)
        if old is None:
            member = np.full(self.N, -1, dtype=np.int32)
            if kind == "edge":
                cells = {c.key: c.dofs for c in edge_cells(self.tree, level, active, self.points)}
        else:
            if list(old.owners) != owners:
                raise ValueError("stage owners differ; the tree changed")
            member = old.member.copy()
        skels: List[Optional[SkelData]] = []
        fresh = []
        for k, o in enumerate(owners):
            if old is not None and o not in marked:
                sk = old.skels[k]
                if verify:
                    I = self.owner_dofs(kind, o, active)
                    prev = np.sort(np.concatenate([sk.S, sk.R])) if sk is not None else I[:0]
                    if not np.array_equal(I, prev):
                        raise AssertionError(f"unmarked owner {o!r} changed its DOF set")
                skels.append(sk)
                continue
            if old is None and kind == "edge":
                I = cells.get(o, np.zeros(0, np.intp))
            else:
                I = self.owner_dofs(kind, o, active)
            sk = self.skel_owner(kind, o, I, active) if len(I) else None
            skels.append(sk)
            fresh.append((k, sk))
        if old is not None:
            for k, _ in fresh:
                prev = old.skels[k]
                if prev is not None:
                    member[prev.S] = -1
                    hit = prev.R[self.elim[prev.R] == t]
                    self.elim[hit] = INF
        for k, sk in fresh:
            if sk is not None:
                member[sk.S] = k
                self.elim[sk.R] = t
        st = Stage(tag, kind, level, owners, skels, member)
        self.stages.append(st)
        return st

    def finish(self) -> "Factorization":
        root = np.flatnonzero(self.elim == INF)
        limit = root_limit(self.N, self.tree.n_occ)
        if len(root) > limit:
            raise CompressionError(
                f"root block has {len(root)} DOFs (limit {limit:.0f}); compression failed")
        A0 = self.state_block(root, root)
        lu = factor_block(A0, "root block")
        return Factorization(self.kind, self.kernel, self.tree, self.eps, self.n_proxy,
                             self.stages, self.elim, root, A0, lu)


class Factorization:
    """G ~ F, stored as per-stage skeletonizations plus a dense root block."""

    def __init__(self, kind, kernel, tree, eps, n_proxy, stages, elim, root_dofs, root_A, root_lu):
        self.kind = kind
        self.kernel = kernel
        self.tree = tree
        self.eps = eps
        self.n_proxy = n_proxy
        self.stages: List[Stage] = stages
        self.elim = elim
        self.root_dofs = root_dofs
        self.root_A = root_A
        self.root_lu = root_lu
        self.N = len(elim)
        self.dtype = np.result_type(kernel.dtype, np.float64)

    def _vec(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.N or x.ndim > 2:
            raise ValueError(f"expected {self.N} rows, got shape {x.shape}")
        return np.array(x, dtype=np.result_type(self.dtype, x.dtype))

    def apply(self, x):
        """y ~ G x."""
        x = self._vec(x)
        for st in self.stages:
            for sk in st.sets():
                sk.apply_v_inv(x)
        y = np.zeros_like(x)
        for st in self.stages:
            for sk in st.sets():
                if len(sk.R):
                    y[sk.R] = sk.D_RR @ x[sk.R]
        r = self.root_dofs
        if len(r):
            y[r] = self.root_A @ x[r]
        for st in reversed(self.stages):
            for sk in st.sets():
                sk.apply_u_adj_inv(y)
        return y

    matvec = apply

    def solve(self, b):
        """x ~ G^{-1} b."""
        x = self._vec(b)
        for st in self.stages:
            for sk in st.sets():
                sk.apply_u_adj(x)
        for st in self.stages:
            for sk in st.sets():
                if len(sk.R):
                    x[sk.R] = linalg.lu_solve(sk.lu, x[sk.R], check_finite=False)
        r = self.root_dofs
        if len(r):
            x[r] = linalg.lu_solve(self.root_lu, x[r], check_finite=False)
        for st in reversed(self.stages):
            for sk in st.sets():
                sk.apply_v(x)
        return x

    def logdet(self) -> complex:
        """log det F; the real part is log|det|, the imaginary part a phase."""
        total = lu_logdet(self.root_lu)
        for st in self.stages:
            for sk in st.sets():
                total += sk.logdet()
        return complex(total)

    def skeleton_stats(self):
        """Per stage: (tag, number of sets, mean |S|, max |S|)."""
        out = []
        for st in self.stages:
            sizes = [len(sk.S) for sk in st.sets()]
            out.append((st.tag, len(sizes), float(np.mean(sizes)) if sizes else 0.0,
                        max(sizes) if sizes else 0))
        return out

    def n_eliminated(self) -> int:
        return sum(st.n_redundant() for st in self.stages) + len(self.root_dofs)

    def owner_map(self) -> Dict[tuple, Optional[SkelData]]:
        return {(st.tag, o): sk for st in self.stages for o, sk in zip(st.owners, st.skels)}

    def same_blocks(self, other: "Factorization") -> bool:
        """Bitwise equality of every stored block and of the root."""
        if len(self.stages) != len(other.stages):
            return False
        for a, b in zip(self.stages, other.stages):
            if a.tag != b.tag or list(a.owners) != list(b.owners):
                return False
            for x, y in zip(a.skels, b.skels):
                if (x is None) != (y is None) or (x is not None and not x.same_as(y)):
                    return False
        return (np.array_equal(self.root_dofs, other.root_dofs)
                and self.root_A.tobytes() == other.root_A.tobytes()
                and self.root_lu[0].tobytes() == other.root_lu[0].tobytes())

    def differing_owners(self, other: "Factorization") -> Set[tuple]:
        """(tag, owner) pairs whose skeletonization differs between two builds."""
        mine, theirs = self.owner_map(), other.owner_map()
        out = set()
        for key in set(mine) | set(theirs):
            x, y = mine.get(key), theirs.get(key)
            if (x is None) != (y is None) or (x is not None and not x.same_as(y)):
                out.add(key)
        return out


def build(kind: str, kernel: KernelMatrix, tree: Optional[QuadTree] = None, eps: float = 1e-6,
          n_occ: int = 64, n_proxy: int = DEFAULT_N_PROXY) -> Factorization:
    if not eps > 0:
        raise ValueError("eps must be positive")
    if tree is None:
        tree = build_tree(kernel.disc, n_occ)
    eng = Engine(kind, kernel, tree, eps, n_proxy)
    for tag, skind, lvl in schedule(tree, kind):
        eng.run_stage(tag, skind, lvl)
    return eng.finish()


def rskelf_build(kernel: KernelMatrix, tree: Optional[QuadTree] = None, eps: float = 1e-6,
                 n_occ: int = 64, n_proxy: int = DEFAULT_N_PROXY) -> Factorization:
    """Recursive skeletonization: box stages from the leaves up, then the root."""
    return build("rskelf", kernel, tree, eps, n_occ, n_proxy)


def hif_build(kernel: KernelMatrix, tree: Optional[QuadTree] = None, eps: float = 1e-6,
              n_occ: int = 64, n_proxy: int = DEFAULT_N_PROXY) -> Factorization:
    """Hierarchical interpolative factorization: box and edge stages alternate."""
    return build("hif", kernel, tree, eps, n_occ, n_proxy)


def apply(F: Factorization, x):
    return F.apply(x)


def solve(F: Factorization, b):
    return F.solve(b)


def logdet(F: Factorization) -> complex:
    return F.logdet()


def skeleton_stats(F: Factorization):
    return F.skeleton_stats()


def relative_residual(kernel: KernelMatrix, F: Factorization, b: Sequence) -> float:
    """||G solve(F, b) - b|| / ||b|| with G applied by direct summation."""
    b = np.asarray(b)
    x = F.solve(b)
    return float(np.linalg.norm(kernel.matvec(x) - b) / np.linalg.norm(b))
