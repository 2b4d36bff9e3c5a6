"""Hierarchical skeletonization factorizations with fast local updates."""

from .estimator import HIF, RSKELF, SkeletonFactorization
from .factor import Factorization, build, hif_build, rskelf_build
from .geometry import Discretization, QuadTree, TreeError, build_tree, matched_tree
from .kernels import (DenseKernel, HelmholtzLS, LaplaceDLP, Perturbation, bump_circle, diff,
                      helmholtz_ls, laplace_dlp, ls_grid)
from .update import MarkedSets, mark_hif, mark_rskelf, update

__version__ = "0.1.0"

__all__ = [
    "HIF", "RSKELF", "SkeletonFactorization", "Factorization", "build", "hif_build",
    "rskelf_build", "Discretization", "QuadTree", "TreeError", "build_tree", "matched_tree",
    "DenseKernel", "HelmholtzLS", "LaplaceDLP", "Perturbation", "bump_circle", "diff",
    "helmholtz_ls", "laplace_dlp", "ls_grid", "MarkedSets", "mark_hif", "mark_rskelf",
    "update",
]
