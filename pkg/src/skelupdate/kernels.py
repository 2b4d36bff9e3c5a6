"""Implicit system matrices, problem generators and the perturbation model."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, special

from .geometry import Discretization

TWO_PI = 2.0 * np.pi
MACHINE_EPS = 2.0 ** -52


class KernelMatrix:
    """An N x N matrix available only through block extraction.

    Subclasses provide ``block`` plus the two proxy evaluations used to
    stand in for far-field interactions during compression.
    """

    disc: Discretization
    symmetric = False
    dtype = np.float64
    has_proxy = True  # False: no geometry, every other DOF counts as near
    wavenumber = 0.0

    @property
    def shape(self):
        n = self.disc.dof_count
        return (n, n)

    @property
    def N(self) -> int:
        return self.disc.dof_count

    def block(self, rows, cols) -> np.ndarray:
        raise NotImplementedError

    def proxy_targets(self, cols, proxy: np.ndarray) -> np.ndarray:
        """Interactions from DOFs ``cols`` (sources) to far targets ``proxy``."""
        raise NotImplementedError

    def proxy_sources(self, rows, proxy: np.ndarray) -> np.ndarray:
        """Interactions from far sources ``proxy`` to DOFs ``rows`` (targets)."""
        raise NotImplementedError

    def matvec(self, x: np.ndarray, chunk: int = 1024) -> np.ndarray:
        """Direct O(N^2) summation, a block of rows at a time."""
        n = self.N
        x = np.asarray(x)
        out = np.zeros(x.shape, dtype=np.result_type(self.dtype, x.dtype))
        cols = np.arange(n)
        for s in range(0, n, chunk):
            rows = np.arange(s, min(n, s + chunk))
            out[rows] = self.block(rows, cols) @ x
        return out

    def dense(self) -> np.ndarray:
        idx = np.arange(self.N)
        return self.block(idx, idx)

    def params(self) -> dict:
        return {}


class DenseKernel(KernelMatrix):
    """Wraps an explicit matrix. No geometry, so no proxy acceleration."""

    has_proxy = False

    def __init__(self, A: np.ndarray, disc: Optional[Discretization] = None):
        self.A = np.asarray(A)
        self.dtype = self.A.dtype
        if disc is None:
            n = self.A.shape[0]
            disc = Discretization(np.zeros((n, 2)), np.ones(n))
        self.disc = disc
        self.symmetric = bool(np.array_equal(self.A, self.A.T))

    def block(self, rows, cols):
        return self.A[np.ix_(np.asarray(rows, dtype=np.intp), np.asarray(cols, dtype=np.intp))]

    def proxy_targets(self, cols, proxy):
        return np.zeros((0, len(cols)), dtype=self.dtype)

    def proxy_sources(self, rows, proxy):
        return np.zeros((len(rows), 0), dtype=self.dtype)


# ---------------------------------------------------------------------------
# Laplace double layer on a closed curve


def _dlp(tx, ty, sx, sy, nx, ny):
    dx = tx - sx
    dy = ty - sy
    return (dx * nx + dy * ny) / (dx * dx + dy * dy) / TWO_PI


class LaplaceDLP(KernelMatrix):
    """Nystrom discretization of -1/2 + D for the interior Dirichlet problem.

    Off-diagonal entries are (dK/dnu_y)(x_i, y_j) w_j with
    K(r) = -log(r) / (2 pi); the diagonal uses the smooth-curve limit
    -kappa_i / (4 pi) w_i.
    """

    symmetric = False
    dtype = np.float64

    def __init__(self, disc: Discretization):
        if disc.normals is None:
            raise ValueError("double-layer kernel needs normals")
        if disc.curvature is None:
            raise ValueError("double-layer kernel needs curvature for the diagonal")
        self.disc = disc

    def block(self, rows, cols):
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        p, nrm, w = self.disc.points, self.disc.normals, self.disc.weights
        tx, ty = p[rows, 0][:, None], p[rows, 1][:, None]
        sx, sy = p[cols, 0][None, :], p[cols, 1][None, :]
        same = rows[:, None] == cols[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = _dlp(tx, ty, sx, sy, nrm[cols, 0][None, :], nrm[cols, 1][None, :])
        out = out * w[cols][None, :]
        if same.any():
            r, c = np.nonzero(same)
            d = cols[c]
            out[r, c] = -0.5 - self.disc.curvature[d] * w[d] / (2 * TWO_PI)
        return out

    def proxy_targets(self, cols, proxy):
        cols = np.asarray(cols, dtype=np.intp)
        p, nrm, w = self.disc.points, self.disc.normals, self.disc.weights
        out = _dlp(proxy[:, 0][:, None], proxy[:, 1][:, None],
                   p[cols, 0][None, :], p[cols, 1][None, :],
                   nrm[cols, 0][None, :], nrm[cols, 1][None, :])
        return out * w[cols][None, :]

    def proxy_sources(self, rows, proxy):
        # single-layer sources on the proxy circle span harmonic fields inside it
        rows = np.asarray(rows, dtype=np.intp)
        p = self.disc.points
        dx = p[rows, 0][:, None] - proxy[:, 0][None, :]
        dy = p[rows, 1][:, None] - proxy[:, 1][None, :]
        scale = TWO_PI / len(proxy)
        return -np.log(np.hypot(dx, dy)) / TWO_PI * scale


def laplace_dlp(disc: Discretization) -> LaplaceDLP:
    return LaplaceDLP(disc)


# ---------------------------------------------------------------------------
# Lippmann-Schwinger


def _helmholtz(k, r):
    return 0.25j * special.hankel1(0, k * r)


@lru_cache(maxsize=64)
def self_cell_integral(k: float, h: float) -> complex:
    """Integral of (i/4) H0(k|y|) over the square [-h/2, h/2]^2.

    Polar coordinates about the singularity: over each of the eight
    triangles the radial integral is closed form,
    int_0^R H0(kr) r dr = R H1(kR)/k + 2i/(pi k^2).
    """

    def radial(theta):
        R = 0.5 * h / np.cos(theta)
        return 0.25j * (R * special.hankel1(1, k * R) / k + 2j / (np.pi * k * k))

    re = integrate.quad(lambda t: radial(t).real, 0.0, np.pi / 4, epsabs=1e-14, epsrel=1e-13)[0]
    im = integrate.quad(lambda t: radial(t).imag, 0.0, np.pi / 4, epsabs=1e-14, epsrel=1e-13)[0]
    return 8.0 * complex(re, im)


class HelmholtzLS(KernelMatrix):
    """Symmetric Lippmann-Schwinger matrix I + k sqrt(w) K k sqrt(w).

    One-point quadrature off the diagonal; the self cell is integrated
    with :func:`self_cell_integral`.
    """

    symmetric = True
    dtype = np.complex128

    def __init__(self, disc: Discretization, k: float):
        if disc.coef is None:
            raise ValueError("Lippmann-Schwinger kernel needs a scatterer field (coef)")
        if np.any(disc.coef < 0):
            raise ValueError("scatterer field must be non-negative")
        n = disc.dof_count
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise ValueError("grid must have a perfect-square number of points")
        self.disc = disc
        self.k = float(k)
        self.wavenumber = self.k
        self.h = 1.0 / side
        self.area = self.h * self.h
        self.scale = self.k * np.sqrt(disc.coef)
        self.diag = self_cell_integral(self.k, self.h)

    def block(self, rows, cols):
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        p = self.disc.points
        r = np.hypot(p[rows, 0][:, None] - p[cols, 0][None, :],
                     p[rows, 1][:, None] - p[cols, 1][None, :])
        same = rows[:, None] == cols[None, :]
        with np.errstate(invalid="ignore"):
            K = _helmholtz(self.k, np.where(same, 1.0, r)) * self.area
        K[same] = self.diag
        out = self.scale[rows][:, None] * K * self.scale[cols][None, :]
        out[same] += 1.0
        return out

    def proxy_targets(self, cols, proxy):
        cols = np.asarray(cols, dtype=np.intp)
        p = self.disc.points
        r = np.hypot(proxy[:, 0][:, None] - p[cols, 0][None, :],
                     proxy[:, 1][:, None] - p[cols, 1][None, :])
        return _helmholtz(self.k, r) * self.area * self.scale[cols][None, :]

    def proxy_sources(self, rows, proxy):
        rows = np.asarray(rows, dtype=np.intp)
        p = self.disc.points
        r = np.hypot(p[rows, 0][:, None] - proxy[:, 0][None, :],
                     p[rows, 1][:, None] - proxy[:, 1][None, :])
        return self.scale[rows][:, None] * _helmholtz(self.k, r) * self.area

    def params(self):
        return {"k": self.k}


def helmholtz_ls(disc: Discretization, k: float) -> HelmholtzLS:
    return HelmholtzLS(disc, k)


# ---------------------------------------------------------------------------
# problem generators


def bump_radius(t, t_m, t_M):
    """Radius, and its first two t-derivatives, of the bumped circle."""
    t = np.asarray(t, dtype=float)
    a = 2.0 / (t_M - t_m)
    s = (2 * t - (t_M + t_m)) / (t_M - t_m)
    inside = (t > t_m) & (t < t_M) & (np.abs(s) < 1)
    r = np.ones_like(t)
    dr = np.zeros_like(t)
    ddr = np.zeros_like(t)
    si = s[inside]
    q = 1.0 - si * si
    g = np.exp(-1.0 / q)
    g1 = g * (-2 * si / q ** 2)
    g2 = g * ((2 * si / q ** 2) ** 2 - 2 / q ** 2 - 8 * si * si / q ** 3)
    r[inside] = 1.0 + 0.25 * g
    dr[inside] = 0.25 * a * g1
    ddr[inside] = 0.25 * a * a * g2
    return r, dr, ddr


def bump_circle(N: int, t_m: float = 0.0, t_M: float = 0.0) -> Discretization:
    """Trapezoid-rule nodes on the circle with a smooth bump on (t_m, t_M).

    ``t_m == t_M`` gives the plain unit circle.
    """
    if N < 1:
        raise ValueError("N must be positive")
    if not (0 <= t_m <= t_M <= TWO_PI):
        raise ValueError("need 0 <= t_m <= t_M <= 2 pi")
    t = TWO_PI * np.arange(N) / N
    if t_M > t_m:
        r, dr, ddr = bump_radius(t, t_m, t_M)
    else:
        r, dr, ddr = np.ones(N), np.zeros(N), np.zeros(N)
    c, s = np.cos(t), np.sin(t)
    pts = np.column_stack([r * c, r * s])
    tx, ty = dr * c - r * s, dr * s + r * c
    speed = np.hypot(tx, ty)
    normals = np.column_stack([ty / speed, -tx / speed])
    curv = (r * r + 2 * dr * dr - r * ddr) / speed ** 3
    return Discretization(pts, speed * TWO_PI / N, normals=normals, params=t, curvature=curv)


def ls_grid(side: int, field=None) -> Discretization:
    """Cell centers of a uniform side x side grid on (0, 1)^2."""
    if side < 1:
        raise ValueError("side must be positive")
    g = (np.arange(side) + 0.5) / side
    X, Y = np.meshgrid(g, g)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    coef = None if field is None else field(pts)
    return Discretization(pts, np.full(side * side, 1.0 / side ** 2), coef=coef,
                          bounds=(0.5, 0.5, 0.5))


LS_CENTER = np.array([0.5, 0.5])
LS_BUMP = np.array([0.8, 0.8])


def scatterer_w0(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-16.0 * np.sum((x - LS_CENTER) ** 2, axis=-1))


def perturbation_scale(points: np.ndarray, target: int = 340, center=LS_BUMP) -> float:
    """Width s so exp(-s |x-d|^2) exceeds 2^-52 at about ``target`` grid points."""
    d = np.sort(np.hypot(*(points - center).T))
    target = min(target, len(d))
    rho_in = d[target - 1]
    larger = d[d > rho_in]
    rho = 0.5 * (rho_in + larger[0]) if len(larger) else rho_in * (1 + 1e-9)
    return 52.0 * np.log(2.0) / rho ** 2


def scatterer_w1(x, s: float, center=LS_BUMP):
    x = np.asarray(x, dtype=float)
    bump = np.exp(-s * np.sum((x - center) ** 2, axis=-1))
    bump = np.where(bump > MACHINE_EPS, bump, 0.0)
    return scatterer_w0(x) + bump


# ---------------------------------------------------------------------------
# perturbations


@dataclass
class Perturbation:
    modified_dofs: np.ndarray
    description: str = ""
    old: Optional[Discretization] = field(default=None, repr=False)
    new: Optional[Discretization] = field(default=None, repr=False)

    def __post_init__(self):
        self.modified_dofs = np.unique(np.asarray(self.modified_dofs, dtype=np.intp))

    @property
    def m(self) -> int:
        return len(self.modified_dofs)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, dtype=np.intp), "empty")


def _rows_differ(a, b):
    if a is None and b is None:
        return None
    if (a is None) != (b is None):
        return slice(None)
    a = np.asarray(a).reshape(len(a), -1)
    b = np.asarray(b).reshape(len(b), -1)
    return np.any(a != b, axis=1)


def diff(old: KernelMatrix, new: KernelMatrix) -> Perturbation:
    """DOFs whose row or column may differ between two kernel matrices."""
    if old.N != new.N:
        raise ValueError("size mismatch: perturbations must keep the point count")
    n = old.N
    if type(old) is not type(new) or old.params() != new.params():
        return Perturbation(np.arange(n), "kernel parameters changed", old.disc, new.disc)
    if isinstance(old, DenseKernel):
        A, B = old.A, new.A
        bad = np.any(A != B, axis=1) | np.any(A != B, axis=0)
        return Perturbation(np.nonzero(bad)[0], "entrywise", old.disc, new.disc)
    mask = np.zeros(n, dtype=bool)
    changed = []
    for name in ("points", "weights", "normals", "curvature", "coef"):
        d = _rows_differ(getattr(old.disc, name), getattr(new.disc, name))
        if d is None:
            continue
        if isinstance(d, slice) or d.any():
            changed.append(name)
        mask[d] = True
    return Perturbation(np.nonzero(mask)[0], ",".join(changed) or "none", old.disc, new.disc)
