"""Point sets and the adaptive quadtree used by the factorizations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

# (level, z1, z2) -> box id
_Key = Tuple[int, int, int]
# ("v" | "h", level, i, j): vertical edge on grid line x = i spanning row j,
# horizontal edge on grid line y = j spanning column i.
EdgeKey = Tuple[str, int, int, int]


class TreeError(ValueError):
    pass


@dataclass
class Discretization:
    """Collocation points with quadrature weights.

    ``normals`` and ``params`` are only present for boundary
    discretizations; ``coef`` holds an optional per-point coefficient
    (e.g. a scatterer field) that enters the kernel.
    """

    points: np.ndarray
    weights: np.ndarray
    normals: Optional[np.ndarray] = None
    params: Optional[np.ndarray] = None
    curvature: Optional[np.ndarray] = None
    coef: Optional[np.ndarray] = None
    bounds: Optional[Tuple[float, float, float]] = None  # (cx, cy, half-width)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float).reshape(-1, 2)
        self.weights = np.ascontiguousarray(self.weights, dtype=float).ravel()
        n = len(self.points)
        if len(self.weights) != n:
            raise ValueError("weights must have one entry per point")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")
        for name in ("normals", "params", "curvature", "coef"):
            val = getattr(self, name)
            if val is None:
                continue
            val = np.ascontiguousarray(val, dtype=float)
            if len(val) != n:
                raise ValueError(f"{name} must have one entry per point")
            setattr(self, name, val)
        if self.normals is not None:
            self.normals = self.normals.reshape(-1, 2)
            nrm = np.hypot(self.normals[:, 0], self.normals[:, 1])
            if np.any(np.abs(nrm - 1.0) > 1e-12):
                raise ValueError("normals must have unit length")

    @property
    def dof_count(self) -> int:
        return len(self.points)


@dataclass
class Box:
    id: int
    level: int
    z: Tuple[int, int]
    center: np.ndarray
    half_width: float
    parent: int
    children: List[int] = field(default_factory=list)
    dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def width(self) -> float:
        return 2.0 * self.half_width


@dataclass(frozen=True)
class EdgeCell:
    key: EdgeKey
    center: Tuple[float, float]
    boxes: Tuple[int, ...]
    dofs: np.ndarray


def _child_slot(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    # boundary points go to the child with the lexicographically smaller center
    ix = (points[:, 0] > center[0]).astype(np.intp)
    iy = (points[:, 1] > center[1]).astype(np.intp)
    return ix + 2 * iy


class QuadTree:
    """Adaptive quadtree over a fixed root square.

    The box structure is separate from the DOF assignment: ``assign``
    returns a tree with the same boxes and the DOFs of a different
    point set, which is how factorizations of perturbed problems share
    a decomposition of space.
    """

    def __init__(self, boxes: List[Box], n_occ: int, n_points: int):
        self.boxes = boxes
        self.n_occ = n_occ
        self.n_points = n_points
        self.nlevels = max(b.level for b in boxes) + 1
        self.index: Dict[_Key, int] = {(b.level, b.z[0], b.z[1]): b.id for b in boxes}
        self.levels: List[List[int]] = [[] for _ in range(self.nlevels)]
        for b in boxes:
            self.levels[b.level].append(b.id)
        self._nbor_cache: Dict[int, Tuple[int, ...]] = {}
        self._coarse_cache: Optional[Dict[int, List[int]]] = None
        self._subtree: Dict[int, np.ndarray] = {}
        self._leaf_of: Optional[np.ndarray] = None

    @property
    def L(self) -> int:
        return self.nlevels - 1

    @property
    def root(self) -> Box:
        return self.boxes[0]

    def leaves(self) -> List[int]:
        return [b.id for b in self.boxes if b.is_leaf]

    def structure_key(self) -> Tuple:
        return tuple((b.level, b.z, tuple(b.children)) for b in self.boxes) + (
            tuple(self.root.center), self.root.half_width)

    # ---- DOF bookkeeping -------------------------------------------------
    def leaf_of(self) -> np.ndarray:
        """Leaf box id of every DOF."""
        if self._leaf_of is None:
            out = np.full(self.n_points, -1, dtype=np.intp)
            for b in self.boxes:
                if b.is_leaf:
                    out[b.dofs] = b.id
            self._leaf_of = out
        return self._leaf_of

    def subtree_dofs(self, b: int) -> np.ndarray:
        """Sorted DOFs contained in box ``b`` (all descendants)."""
        got = self._subtree.get(b)
        if got is None:
            box = self.boxes[b]
            if box.is_leaf:
                got = box.dofs
            else:
                got = np.sort(np.concatenate([self.subtree_dofs(c) for c in box.children]))
            self._subtree[b] = got
        return got

    def ancestor(self, b: int, level: int) -> int:
        while self.boxes[b].level > level:
            b = self.boxes[b].parent
        return b

    def assign(self, points: np.ndarray) -> "QuadTree":
        """Same boxes, DOFs taken from ``points``.

        Raises TreeError if a point lands where the tree has no leaf.
        """
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        root = self.root
        if np.any(np.abs(points - root.center).max(axis=1) > root.half_width):
            raise TreeError("tree invalidated; rebuild required (point outside root)")
        boxes = [Box(b.id, b.level, b.z, b.center, b.half_width, b.parent, list(b.children))
                 for b in self.boxes]
        stack = [(0, np.arange(len(points), dtype=np.intp))]
        while stack:
            bid, idx = stack.pop()
            box = boxes[bid]
            if box.is_leaf:
                box.dofs = idx
                continue
            slots = _child_slot(points[idx], box.center)
            by_slot = {}
            for c in box.children:
                cz = boxes[c].z
                by_slot[(cz[0] & 1) + 2 * (cz[1] & 1)] = c
            for s in range(4):
                sel = idx[slots == s]
                if len(sel) == 0:
                    continue
                if s not in by_slot:
                    raise TreeError("tree invalidated; rebuild required "
                                    "(point in a pruned region)")
                stack.append((by_slot[s], sel))
        return QuadTree(boxes, self.n_occ, len(points))

    # ---- neighbours -------------------------------------------------------
    def nbor(self, b: int) -> Tuple[int, ...]:
        """Adjacent boxes at the same level plus adjacent childless boxes above."""
        got = self._nbor_cache.get(b)
        if got is not None:
            return got
        box = self.boxes[b]
        lvl, (z1, z2) = box.level, box.z
        out = set()
        side = 1 << lvl
        for d1 in (-1, 0, 1):
            for d2 in (-1, 0, 1):
                if d1 == 0 and d2 == 0:
                    continue
                y1, y2 = z1 + d1, z2 + d2
                if not (0 <= y1 < side and 0 <= y2 < side):
                    continue
                hit = self.index.get((lvl, y1, y2))
                if hit is not None:
                    out.add(hit)
                    continue
                for up in range(1, lvl + 1):
                    hit = self.index.get((lvl - up, y1 >> up, y2 >> up))
                    if hit is not None:
                        if self.boxes[hit].is_leaf and hit != self.ancestor(b, lvl - up):
                            out.add(hit)
                        break
        got = tuple(sorted(out))
        self._nbor_cache[b] = got
        return got

    def coarse_neighbors_of(self, b: int) -> List[int]:
        """Finer-level boxes that list the childless box ``b`` in their nbor."""
        if self._coarse_cache is None:
            rev: Dict[int, List[int]] = {}
            for box in self.boxes:
                for c in self.nbor(box.id):
                    if self.boxes[c].level < box.level:
                        rev.setdefault(c, []).append(box.id)
            self._coarse_cache = rev
        return self._coarse_cache.get(b, [])

    # ---- edges ------------------------------------------------------------
    def box_edges(self, b: int) -> List[EdgeKey]:
        box = self.boxes[b]
        lvl, (z1, z2) = box.level, box.z
        # sorted by edge center (x, then y): left, bottom, top, right
        return [("v", lvl, z1, z2), ("h", lvl, z1, z2),
                ("h", lvl, z1, z2 + 1), ("v", lvl, z1 + 1, z2)]

    def edge_center(self, e: EdgeKey) -> Tuple[float, float]:
        kind, lvl, i, j = e
        w = 2.0 * self.root.half_width / (1 << lvl)
        x0 = self.root.center[0] - self.root.half_width
        y0 = self.root.center[1] - self.root.half_width
        if kind == "v":
            return (x0 + i * w, y0 + (j + 0.5) * w)
        return (x0 + (i + 0.5) * w, y0 + j * w)

    def edge_boxes(self, e: EdgeKey) -> Tuple[int, ...]:
        kind, lvl, i, j = e
        cand = [(i - 1, j), (i, j)] if kind == "v" else [(i, j - 1), (i, j)]
        return tuple(self.index[(lvl, a, c)] for a, c in cand if (lvl, a, c) in self.index)

    def level_edges(self, level: int) -> List[EdgeKey]:
        keys = set()
        for b in self.levels[level]:
            keys.update(self.box_edges(b))
        return sorted(keys, key=lambda e: (self.edge_center(e), e))


def _root_square(points: np.ndarray) -> Tuple[np.ndarray, float]:
    lo, hi = points.min(axis=0), points.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * float(np.max(hi - lo))
    half = half * (1 + 1e-8) + 1e-12
    return center, half


def _build(point_sets: Sequence[np.ndarray], n_occ: int,
           bounds: Optional[Tuple[float, float, float]]) -> QuadTree:
    if n_occ < 1:
        raise ValueError("n_occ must be positive")
    allpts = np.concatenate(point_sets)
    if len(allpts) == 0:
        raise ValueError("empty discretization")
    if bounds is None:
        center, half = _root_square(allpts)
    else:
        center, half = np.array(bounds[:2], dtype=float), float(bounds[2])
    tiny = half * 4 * np.finfo(float).eps

    boxes = [Box(0, 0, (0, 0), center, half, -1)]
    stack = [(0, [np.arange(len(p), dtype=np.intp) for p in point_sets])]
    while stack:
        bid, idxs = stack.pop()
        box = boxes[bid]
        if max(len(i) for i in idxs) <= n_occ:
            continue
        if box.half_width < tiny:
            raise TreeError("unresolvable point cluster")
        parts = [(_child_slot(p[i], box.center), i) for p, i in zip(point_sets, idxs)]
        for s in range(4):
            sub = [i[slots == s] for slots, i in parts]
            if all(len(x) == 0 for x in sub):
                continue
            sx, sy = s & 1, s >> 1
            h = 0.5 * box.half_width
            c = box.center + np.array([(2 * sx - 1) * h, (2 * sy - 1) * h])
            child = Box(len(boxes), box.level + 1, (2 * box.z[0] + sx, 2 * box.z[1] + sy),
                        c, h, bid)
            boxes.append(child)
            box.children.append(child.id)
            stack.append((child.id, sub))
    # renumber breadth-first so ids increase with level
    order = sorted(range(len(boxes)), key=lambda i: (boxes[i].level, boxes[i].z[1], boxes[i].z[0]))
    remap = {old: new for new, old in enumerate(order)}
    out = []
    for old in order:
        b = boxes[old]
        out.append(Box(remap[old], b.level, b.z, b.center, b.half_width,
                       remap.get(b.parent, -1), sorted(remap[c] for c in b.children)))
    skeleton = QuadTree(out, n_occ, 0)
    return skeleton.assign(point_sets[0])


def build_tree(disc: Discretization, n_occ: int = 64) -> QuadTree:
    """Adaptive quadtree: a box splits iff it holds more than ``n_occ`` DOFs."""
    if n_occ < 4:
        raise ValueError("n_occ must be at least 4")
    return _build([disc.points], n_occ, disc.bounds)


def matched_tree(disc_old: Discretization, disc_new: Discretization,
                 n_occ: int = 64) -> Tuple[QuadTree, QuadTree]:
    """One box structure valid for both point sets.

    A box splits iff either discretization puts more than ``n_occ`` DOFs
    in it. Returns the tree with the old and with the new DOF assignment.
    """
    if disc_old.dof_count != disc_new.dof_count:
        raise ValueError("point count must not change")
    bounds = disc_old.bounds if disc_old.bounds is not None else None
    if bounds is None:
        center, half = _root_square(np.concatenate([disc_old.points, disc_new.points]))
        bounds = (center[0], center[1], half)
    old = _build([disc_old.points, disc_new.points], n_occ, bounds)
    return old, old.assign(disc_new.points)


def nbor(tree: QuadTree, b: int) -> Tuple[int, ...]:
    return tree.nbor(b)


def assign_to_edges(tree: QuadTree, owner: int, dofs: np.ndarray,
                    points: np.ndarray) -> List[EdgeKey]:
    """Nearest of the four edges of box ``owner`` for each DOF.

    Ties go to the lexicographically smaller edge center.
    """
    cands = tree.box_edges(owner)
    if len(dofs) == 0:
        return []
    cen = np.array([tree.edge_center(e) for e in cands])
    p = points[dofs]
    d2 = (p[:, None, 0] - cen[None, :, 0]) ** 2 + (p[:, None, 1] - cen[None, :, 1]) ** 2
    pick = np.argmin(d2, axis=1)
    return [cands[k] for k in pick]


def edge_cells(tree: QuadTree, level: int, active: np.ndarray,
               points: np.ndarray) -> List[EdgeCell]:
    """Voronoi partition of the active DOFs of level-``level`` boxes by edge.

    ``active`` is a boolean mask over all DOFs. Each DOF goes to the
    nearest of its own box's four edges. DOFs of childless coarser boxes
    are left alone; they are eliminated at their own level.
    """
    buckets: Dict[EdgeKey, List[np.ndarray]] = {}
    for b in tree.levels[level]:
        dofs = tree.subtree_dofs(b)
        dofs = dofs[active[dofs]]
        keys = assign_to_edges(tree, b, dofs, points)
        for d, e in zip(dofs, keys):
            buckets.setdefault(e, []).append(d)
    out = []
    for e in tree.level_edges(level):
        if e not in buckets:
            continue
        out.append(EdgeCell(e, tree.edge_center(e), tree.edge_boxes(e),
                            np.sort(np.asarray(buckets[e], dtype=np.intp))))
    return out


def edge_cell_dofs(tree: QuadTree, e: EdgeKey, active: np.ndarray,
                   points: np.ndarray) -> np.ndarray:
    """DOFs of the single edge cell ``e``; agrees with :func:`edge_cells`."""
    got = []
    for b in tree.edge_boxes(e):
        dofs = tree.subtree_dofs(b)
        dofs = dofs[active[dofs]]
        keys = assign_to_edges(tree, b, dofs, points)
        got.extend(d for d, k in zip(dofs, keys) if k == e)
    return np.sort(np.asarray(got, dtype=np.intp))
