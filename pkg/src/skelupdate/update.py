"""Marked-set propagation and selective refactorization after a local change."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Optional, Set, Tuple

import numpy as np

from .compress import proxy_surface
from .factor import Engine, Factorization, schedule
from .geometry import QuadTree, TreeError
from .kernels import KernelMatrix, Perturbation, diff


@dataclass
class MarkedSets:
    """Owners to recompute, keyed by stage tag (``l`` for boxes, ``l - 0.5`` for edges).

    ``P`` and ``U`` hold the owners added by the parent and neighbor rules,
    ``direct`` those whose own neighborhood holds a modified DOF.
    """

    kind: str
    M: Dict[float, Set[Hashable]] = field(default_factory=dict)
    P: Dict[float, Set[int]] = field(default_factory=dict)
    U: Dict[float, Set[int]] = field(default_factory=dict)
    direct: Dict[float, Set[int]] = field(default_factory=dict)
    reach: Dict[int, Optional[int]] = field(default_factory=dict)

    def __getitem__(self, tag: float) -> Set[Hashable]:
        return self.M.get(tag, set())

    @property
    def any(self) -> bool:
        return any(self.M.values())

    @property
    def total(self) -> int:
        """Sum of |M| over all stages."""
        return sum(len(m) for m in self.M.values())

    @property
    def box_total(self) -> int:
        return sum(len(m) for t, m in self.M.items() if float(t).is_integer())

    def counts(self) -> Dict[float, int]:
        return {t: len(m) for t, m in sorted(self.M.items(), reverse=True)}


def touched_leaves(tree_old: QuadTree, tree_new: QuadTree, pert: Perturbation) -> Set[int]:
    """Leaves holding a modified DOF before or after the change."""
    mod = np.asarray(pert.modified_dofs, dtype=np.intp)
    if len(mod) == 0:
        return set()
    return set(tree_old.leaf_of()[mod].tolist()) | set(tree_new.leaf_of()[mod].tolist())


def _touched_at(tree: QuadTree, leaves: Set[int], lvl: int) -> Set[int]:
    out = set()
    for t in leaves:
        out.add(tree.ancestor(t, lvl) if tree.boxes[t].level >= lvl else t)
    return out


def _same_level(tree: QuadTree, boxes, lvl: int) -> Set[int]:
    return {b for b in boxes if tree.boxes[b].level == lvl}


def _closed_nbhd(tree: QuadTree, b: int) -> Set[int]:
    lvl = tree.boxes[b].level
    return {b} | _same_level(tree, tree.nbor(b), lvl)


def direct_marks(tree: QuadTree, touched: Set[int], lvl: int,
                 moved: Optional[np.ndarray] = None) -> Set[int]:
    """Level boxes whose skeletonization reads a modified DOF directly.

    That is boxes holding a touched leaf, plus neighbors whose proxy disc
    contains an old or new position of a modified DOF (``moved``). Without
    positions every neighbor of a touched box counts.
    """
    own = _touched_at(tree, touched, lvl)
    out: Set[int] = {x for x in own if tree.boxes[x].level == lvl}
    cand: Set[int] = set()
    for x in own:
        if tree.boxes[x].level == lvl:
            cand |= _same_level(tree, tree.nbor(x), lvl)
        else:
            cand |= _same_level(tree, tree.coarse_neighbors_of(x), lvl)
    cand -= out
    if moved is None:
        return out | cand
    for b in cand:
        box = tree.boxes[b]
        if proxy_surface(box.center, box.width).inside(moved).any():
            out.add(b)
    return out


def _reach(tree: QuadTree, marked: Set[int], touched: Set[int], lvl: int) -> Optional[int]:
    anchors = [tree.boxes[a].z for a in _touched_at(tree, touched, lvl)
               if tree.boxes[a].level == lvl]
    if not anchors or not marked:
        return None
    A = np.array(anchors)
    return int(max(np.abs(A - np.array(tree.boxes[b].z)).max(axis=1).min() for b in marked))


def _moved_points(pert: Perturbation) -> Optional[np.ndarray]:
    if pert.old is None or pert.new is None:
        return None
    mod = pert.modified_dofs
    return np.vstack([pert.old.points[mod], pert.new.points[mod]])


def _mark(kind: str, tree_old: QuadTree, tree_new: QuadTree, pert: Perturbation,
          near_all: bool = False) -> MarkedSets:
    if tree_old.structure_key() != tree_new.structure_key():
        raise TreeError("tree invalidated; rebuild required (box structure differs)")
    tree = tree_new
    out = MarkedSets(kind)
    touched = touched_leaves(tree_old, tree_new, pert)
    if not touched:
        return out
    if near_all:
        # no geometry: every owner reads every active DOF
        for tag, skind, lvl in schedule(tree, kind):
            out.M[tag] = set(tree.levels[lvl]) if skind == "box" else set(tree.level_edges(lvl))
        return out
    moved = _moved_points(pert)
    prev_boxes: Set[int] = set()
    prev_edges: Set[tuple] = set()
    for lvl in range(tree.L, 0, -1):
        direct = direct_marks(tree, touched, lvl, moved)
        P = {tree.boxes[b].parent for b in prev_boxes}
        for e in prev_edges:
            P.update(tree.boxes[b].parent for b in tree.edge_boxes(e))
        P = _same_level(tree, P, lvl)
        U: Set[int] = set()
        for p in P:
            U |= _closed_nbhd(tree, p)
        U -= P
        M = direct | P | U
        tag = float(lvl)
        out.M[tag], out.P[tag], out.U[tag], out.direct[tag] = M, P, U, direct
        out.reach[lvl] = _reach(tree, M, touched, lvl)
        prev_boxes, prev_edges = M, set()
        if kind == "hif":
            # an edge reads the boxes on both sides and their neighbors
            for b in M:
                for y in _closed_nbhd(tree, b):
                    prev_edges.update(tree.box_edges(y))
            for x in _touched_at(tree, touched, lvl):
                if tree.boxes[x].level < lvl:
                    for c in _same_level(tree, tree.coarse_neighbors_of(x), lvl):
                        prev_edges.update(tree.box_edges(c))
            out.M[lvl - 0.5] = set(prev_edges)
    return out


def mark_rskelf(tree_old: QuadTree, pert: Perturbation,
                tree_new: Optional[QuadTree] = None, near_all: bool = False) -> MarkedSets:
    """Marked boxes per level for rskelf.

    A box is marked if it reads a modified DOF (see :func:`direct_marks`),
    if a child is marked (parent rule), or if a same-level neighbor was
    marked by the parent rule (neighbor rule).
    """
    return _mark("rskelf", tree_old, tree_new if tree_new is not None else tree_old, pert,
                 near_all)


def mark_hif(tree_old: QuadTree, pert: Perturbation,
             tree_new: Optional[QuadTree] = None, near_all: bool = False) -> MarkedSets:
    """Marked boxes and edges for hif.

    Edges are marked when any box in their neighborhood is marked; the
    boxes on both sides of a marked edge then mark their parents.
    """
    return _mark("hif", tree_old, tree_new if tree_new is not None else tree_old, pert, near_all)


def mark(kind: str, tree_old: QuadTree, pert: Perturbation,
         tree_new: Optional[QuadTree] = None, near_all: bool = False) -> MarkedSets:
    fn = mark_rskelf if kind == "rskelf" else mark_hif
    return fn(tree_old, pert, tree_new, near_all)


def skel_update(engine: Engine, tag: float, kind: str, level: int, old_stage, marked: Set,
                verify: bool = False):
    """Recompute the marked owners of one stage; everything else is reused as is."""
    if not marked and not verify:
        engine.stages.append(old_stage)
        return old_stage
    return engine.run_stage(tag, kind, level, old=old_stage, marked=marked, verify=verify)


def update(F_old: Factorization, kernel_new: KernelMatrix, pert: Optional[Perturbation] = None,
           tree_new: Optional[QuadTree] = None, verify: bool = False
           ) -> Tuple[Factorization, MarkedSets]:
    """Factorization of ``kernel_new`` reusing every unaffected block of ``F_old``.

    The result equals, bit for bit, a fresh build of ``kernel_new`` on
    ``tree_new`` (by default the old boxes with the new points). With
    ``verify`` every reused owner is checked to have an unchanged DOF set.
    """
    if kernel_new.N != F_old.N:
        raise ValueError("the number of DOFs must not change")
    if tree_new is None:
        tree_new = F_old.tree.assign(kernel_new.disc.points)
    if pert is None:
        pert = diff(F_old.kernel, kernel_new)
    marks = mark(F_old.kind, F_old.tree, pert, tree_new, not kernel_new.has_proxy)
    eng = Engine(F_old.kind, kernel_new, tree_new, F_old.eps, F_old.n_proxy)
    eng.elim = F_old.elim.copy()
    for old, (tag, skind, lvl) in zip(F_old.stages, schedule(tree_new, F_old.kind)):
        skel_update(eng, tag, skind, lvl, old, marks[tag], verify)
    if marks.any:
        F_new = eng.finish()
    else:
        F_new = Factorization(F_old.kind, kernel_new, tree_new, F_old.eps, F_old.n_proxy,
                              eng.stages, eng.elim, F_old.root_dofs, F_old.root_A,
                              F_old.root_lu)
    return F_new, marks


def update_cost_report(F_old: Factorization, pert: Perturbation,
                       tree_new: Optional[QuadTree] = None) -> dict:
    """Marked counts per stage and a cubic work proxy for the update.

    ``measured_work`` sums (|S|+|R|)^3 over the marked owners of ``F_old``;
    ``predicted_work`` charges each marked owner the stage's largest set.
    """
    marks = mark(F_old.kind, F_old.tree, pert, tree_new, not F_old.kernel.has_proxy)
    per_stage: List[tuple] = []
    dofs = 0
    measured = predicted = 0.0
    for st in F_old.stages:
        m = marks[st.tag]
        sizes = {o: sk.size for o, sk in zip(st.owners, st.skels) if sk is not None}
        biggest = max(sizes.values(), default=0)
        hit = [sizes.get(o, 0) for o in m]
        dofs += sum(hit)
        measured += float(sum(s ** 3 for s in hit))
        predicted += float(len(m) * biggest ** 3)
        per_stage.append((st.tag, len(m)))
    return {"marked": per_stage, "marked_total": marks.total, "reskeletonized_dofs": dofs,
            "predicted_work": predicted, "measured_work": measured}
