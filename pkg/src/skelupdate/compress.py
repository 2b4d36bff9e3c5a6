"""Interpolative decomposition and proxy-surface compression rows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

DEFAULT_N_PROXY = 64
PROXY_RADIUS = 1.5  # in units of the box width


@dataclass
class IdResult:
    """Columns ``S`` of A interpolate the columns ``R``: A[:, R] ~ A[:, S] @ T.

    S and R are positions into the column index set handed to :func:`interp_decomp`.
    """

    S: np.ndarray
    R: np.ndarray
    T: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.S)


def interp_decomp(A: np.ndarray, eps: float) -> IdResult:
    """Deterministic column ID by pivoted QR.

    The rank is cut at the first diagonal entry of R with magnitude at or
    below ``eps`` times the largest one.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    A = np.asarray(A)
    m, n = A.shape
    if n == 0:
        return IdResult(np.zeros(0, np.intp), np.zeros(0, np.intp), np.zeros((0, 0), A.dtype))
    if m == 0 or not np.any(A):
        return IdResult(np.zeros(0, np.intp), np.arange(n), np.zeros((0, n), A.dtype))
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    R, piv = linalg.qr(A, mode="r", pivoting=True, check_finite=False)
    diag = np.abs(np.diagonal(R))
    small = np.nonzero(diag <= eps * diag[0])[0]
    k = int(small[0]) if len(small) else len(diag)
    S, Rd = piv[:k], piv[k:]
    if k == 0:
        T = np.zeros((0, n), dtype=R.dtype)
    elif k == n:
        T = np.zeros((k, 0), dtype=R.dtype)
    else:
        T = linalg.solve_triangular(R[:k, :k], R[:k, k:n], check_finite=False)
    return IdResult(np.asarray(S, np.intp), np.asarray(Rd, np.intp), T)


def id_rows_reduced(A: np.ndarray, eps: float) -> IdResult:
    """ID computed on the nonzero rows of A only; valid for all of A."""
    A = np.asarray(A)
    keep = np.any(A != 0, axis=1)
    return interp_decomp(A[keep], eps)


@dataclass(frozen=True)
class ProxySurface:
    center: np.ndarray
    radius: float
    n_proxy: int

    @property
    def points(self) -> np.ndarray:
        theta = 2 * np.pi * np.arange(self.n_proxy) / self.n_proxy
        return np.column_stack([self.center[0] + self.radius * np.cos(theta),
                                self.center[1] + self.radius * np.sin(theta)])

    def inside(self, pts: np.ndarray) -> np.ndarray:
        d = pts - self.center
        return np.hypot(d[:, 0], d[:, 1]) < self.radius


def proxy_surface(center, width: float, n_proxy: int = DEFAULT_N_PROXY,
                  wavenumber: float = 0.0) -> ProxySurface:
    radius = PROXY_RADIUS * width
    if wavenumber * radius > 2 * np.pi:
        n_proxy *= 2
    return ProxySurface(np.asarray(center, dtype=float), radius, n_proxy)


def proxy_rows(kernel, dofs: np.ndarray, a_near_in: np.ndarray,
               a_in_near: np.ndarray, surface: ProxySurface) -> np.ndarray:
    """Stack whose column ID stands in for the ID of A(I^c, I) and A(I, I^c)^*.

    ``a_near_in`` = A(N, I) and ``a_in_near`` = A(I, N) come from the current
    matrix state; far interactions are replaced by kernel evaluations
    against the proxy points.
    """
    blocks = [a_near_in, a_in_near.conj().T]
    pts = surface.points
    p_out = kernel.proxy_targets(dofs, pts)
    blocks.append(p_out)
    if not (kernel.symmetric and not np.iscomplexobj(p_out)):
        blocks.append(kernel.proxy_sources(dofs, pts).conj().T)
    dtype = np.result_type(*blocks)
    return np.vstack([b.astype(dtype, copy=False) for b in blocks])
