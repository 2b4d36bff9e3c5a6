"""Skeletonization of one DOF set: ID, block elimination, stored operators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, List, Sequence

import numpy as np
from scipy import linalg

from .compress import IdResult, interp_decomp

SINGULAR_PIVOT = 1e3 * np.finfo(float).eps


class SingularBlockError(np.linalg.LinAlgError):
    pass


@dataclass(eq=False)
class SkelData:
    """Everything kept from skeletonizing one box or edge.

    ``S`` and ``R`` are global DOF indices. The elimination operators are
    stored only through ``T``, ``X_sr = D_SR D_RR^{-1}`` and
    ``X_rs = D_RR^{-1} D_RS``.
    """

    owner: Hashable
    S: np.ndarray
    R: np.ndarray
    T: np.ndarray
    D_SS: np.ndarray
    D_RR: np.ndarray
    lu: Any
    X_sr: np.ndarray
    X_rs: np.ndarray
    _s_order: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self._s_order = np.argsort(self.S, kind="stable")

    @property
    def size(self) -> int:
        return len(self.S) + len(self.R)

    def s_positions(self, dofs: np.ndarray) -> np.ndarray:
        """Positions within S of the given DOFs (all must be in S)."""
        srt = self.S[self._s_order]
        return self._s_order[np.searchsorted(srt, dofs)]

    def arrays(self) -> List[np.ndarray]:
        return [self.S, self.R, self.T, self.D_SS, self.D_RR, self.X_sr, self.X_rs,
                self.lu[0], self.lu[1]]

    def same_as(self, other: "SkelData") -> bool:
        """Bitwise equality of every stored block."""
        if other is self:
            return True
        a, b = self.arrays(), other.arrays()
        return all(x.shape == y.shape and x.dtype == y.dtype and
                   x.tobytes() == y.tobytes() for x, y in zip(a, b))

    # ---- operator actions (in place on x, global indexing) ----------------
    def apply_u_adj(self, x):
        if len(self.R):
            x[self.R] -= self.T.conj().T @ x[self.S]
            x[self.S] -= self.X_sr @ x[self.R]

    def apply_u_adj_inv(self, x):
        if len(self.R):
            x[self.S] += self.X_sr @ x[self.R]
            x[self.R] += self.T.conj().T @ x[self.S]

    def apply_v(self, x):
        if len(self.R):
            x[self.R] -= self.X_rs @ x[self.S]
            x[self.S] -= self.T @ x[self.R]

    def apply_v_inv(self, x):
        if len(self.R):
            x[self.S] += self.T @ x[self.R]
            x[self.R] += self.X_rs @ x[self.S]

    def logdet(self) -> complex:
        return lu_logdet(self.lu)


def lu_logdet(lu) -> complex:
    f, piv = lu
    if f.size == 0:
        return 0j
    d = np.diagonal(f).astype(complex)
    swaps = int(np.count_nonzero(piv != np.arange(len(piv))))
    return complex(np.sum(np.log(d)) + 1j * np.pi * (swaps % 2))


def factor_block(D: np.ndarray, what: str = "redundant block"):
    if D.size == 0:
        return (D.copy(), np.zeros(0, dtype=np.int32))
    with warnings.catch_warnings():
        # singularity is reported below with a clearer message
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu = linalg.lu_factor(D, check_finite=False)
    piv = np.abs(np.diagonal(lu[0]))
    if not np.all(np.isfinite(piv)) or piv.min() <= SINGULAR_PIVOT * piv.max() or piv.max() == 0:
        if what == "redundant block":
            raise SingularBlockError("redundant block singular; decrease eps or n_occ")
        raise SingularBlockError(f"{what} singular")
    return lu


def eliminate(owner, dofs: np.ndarray, a_ii: np.ndarray, idr: IdResult) -> SkelData:
    """Block elimination of the redundant DOFs given an ID of the couplings."""
    s, r, T = idr.S, idr.R, idr.T
    dtype = np.result_type(a_ii.dtype, T.dtype)
    a_ii = a_ii.astype(dtype, copy=False)
    T = T.astype(dtype, copy=False)
    A_SS = a_ii[np.ix_(s, s)]
    A_SR = a_ii[np.ix_(s, r)]
    A_RS = a_ii[np.ix_(r, s)]
    A_RR = a_ii[np.ix_(r, r)]
    Th = T.conj().T
    D_SR = A_SR - A_SS @ T
    D_RS = A_RS - Th @ A_SS
    D_RR = A_RR - A_RS @ T - Th @ A_SR + Th @ (A_SS @ T)
    lu = factor_block(D_RR)
    if len(r):
        X_sr = linalg.lu_solve(lu, D_SR.T, trans=1, check_finite=False).T
        X_rs = linalg.lu_solve(lu, D_RS, check_finite=False)
        D_SS = A_SS - D_SR @ X_rs
    else:
        X_sr = np.zeros((len(s), 0), dtype)
        X_rs = np.zeros((0, len(s)), dtype)
        D_SS = A_SS.copy()
    return SkelData(owner, dofs[s], dofs[r], T, D_SS, D_RR, lu, X_sr, X_rs)


def skeletonize(owner, dofs: np.ndarray, a_ii: np.ndarray, stack: np.ndarray,
                eps: float) -> SkelData:
    """Skeletonize the DOF set ``dofs``.

    ``a_ii`` is the current diagonal block A(I, I) and ``stack`` a matrix
    whose columns (indexed like ``dofs``) carry all off-diagonal couplings,
    typically from :func:`compress.proxy_rows`.
    """
    dofs = np.asarray(dofs, dtype=np.intp)
    return eliminate(owner, dofs, a_ii, interp_decomp(stack, eps))


def skeletonize_dense(A: np.ndarray, dofs: Sequence[int], eps: float, owner=None) -> SkelData:
    """Skeletonize against the full complement of an explicit matrix."""
    dofs = np.asarray(dofs, dtype=np.intp)
    comp = np.setdiff1d(np.arange(A.shape[0]), dofs)
    stack = np.vstack([A[np.ix_(comp, dofs)], A[np.ix_(dofs, comp)].conj().T])
    # drop zero rows: they cannot change the ID
    stack = stack[np.any(stack != 0, axis=1)]
    return skeletonize(owner, dofs, A[np.ix_(dofs, dofs)], stack, eps)


def group_skeletonize(A: np.ndarray, groups: Iterable[Sequence[int]], eps: float) -> List[SkelData]:
    """Independent skeletonizations of disjoint DOF sets of an explicit matrix."""
    groups = [np.asarray(g, dtype=np.intp) for g in groups]
    seen = np.concatenate(groups) if groups else np.zeros(0, np.intp)
    if len(np.unique(seen)) != len(seen):
        raise ValueError("DOF sets must be pairwise disjoint")
    return [skeletonize_dense(A, g, eps, owner=i) for i, g in enumerate(groups)]


def dense_operators(sk: SkelData, n: int):
    """Explicit Q, M^*, H for one skeletonization (test and debugging aid)."""
    dtype = sk.T.dtype
    Q = np.eye(n, dtype=dtype)
    Q[np.ix_(sk.S, sk.R)] = -sk.T
    Mh = np.eye(n, dtype=dtype)
    Mh[np.ix_(sk.S, sk.R)] = -sk.X_sr
    H = np.eye(n, dtype=dtype)
    H[np.ix_(sk.R, sk.S)] = -sk.X_rs
    return Q, Mh, H
