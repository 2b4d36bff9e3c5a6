"""Estimator-style wrapper: fit a factorization, then solve, apply or update."""

from __future__ import annotations

import time
from typing import Optional

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_eps, check_int, check_kernel, check_kind, check_vector
from .factor import build
from .geometry import QuadTree
from .kernels import KernelMatrix, Perturbation
from .update import MarkedSets, update


class SkeletonFactorization(BaseEstimator):
    """Hierarchical factorization of a kernel matrix.

    Parameters
    ----------
    kind : {"rskelf", "hif"}
        Box stages only, or box stages alternating with edge stages.
    eps : float
        Relative ID tolerance.
    n_occ : int
        Leaf occupancy bound of the quadtree.
    n_proxy : int
        Points on each proxy circle.

    Attributes
    ----------
    factorization_ : Factorization
    tree_ : QuadTree
    marks_ : MarkedSets or None
        Set by :meth:`update`.
    fit_seconds_, update_seconds_ : float
    """

    def __init__(self, kind: str = "rskelf", eps: float = 1e-6, n_occ: int = 64,
                 n_proxy: int = 64):
        self.kind = kind
        self.eps = eps
        self.n_occ = n_occ
        self.n_proxy = n_proxy

    def _validate(self):
        check_kind(self.kind)
        check_eps(self.eps)
        check_int(self.n_occ, "n_occ", 4)
        check_int(self.n_proxy, "n_proxy", 4)

    def fit(self, kernel: KernelMatrix, tree: Optional[QuadTree] = None):
        self._validate()
        check_kernel(kernel)
        t0 = time.perf_counter()
        F = build(self.kind, kernel, tree, self.eps, self.n_occ, self.n_proxy)
        self.fit_seconds_ = time.perf_counter() - t0
        self.factorization_ = F
        self.tree_ = F.tree
        self.n_dofs_ = F.N
        self.marks_ = None
        return self

    def _check_fitted(self):
        if not hasattr(self, "factorization_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def solve(self, b):
        self._check_fitted()
        return self.factorization_.solve(check_vector(b, self.n_dofs_, "b"))

    def apply(self, x):
        self._check_fitted()
        return self.factorization_.apply(check_vector(x, self.n_dofs_, "x"))

    def logdet(self) -> complex:
        self._check_fitted()
        return self.factorization_.logdet()

    def skeleton_stats(self):
        self._check_fitted()
        return self.factorization_.skeleton_stats()

    def update(self, kernel_new: KernelMatrix, pert: Optional[Perturbation] = None,
               tree_new: Optional[QuadTree] = None, verify: bool = False):
        """Refactor in place for a locally perturbed kernel."""
        self._check_fitted()
        check_kernel(kernel_new)
        t0 = time.perf_counter()
        F, marks = update(self.factorization_, kernel_new, pert, tree_new, verify)
        self.update_seconds_ = time.perf_counter() - t0
        self.factorization_ = F
        self.tree_ = F.tree
        self.marks_: MarkedSets = marks
        return self


class RSKELF(SkeletonFactorization):
    """Recursive skeletonization factorization."""

    def __init__(self, eps: float = 1e-6, n_occ: int = 64, n_proxy: int = 64):
        super().__init__("rskelf", eps, n_occ, n_proxy)


class HIF(SkeletonFactorization):
    """Hierarchical interpolative factorization."""

    def __init__(self, eps: float = 1e-6, n_occ: int = 64, n_proxy: int = 64):
        super().__init__("hif", eps, n_occ, n_proxy)
