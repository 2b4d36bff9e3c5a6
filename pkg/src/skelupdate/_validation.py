"""Input checks shared by the estimator, the bench harness and the CLI.

sklearn's ``check_array`` rejects complex input, which the
Lippmann-Schwinger operator needs, so these are kept local.
"""

from __future__ import annotations

import numbers

import numpy as np

from .kernels import KernelMatrix


def check_eps(eps) -> float:
    if not isinstance(eps, numbers.Real) or not np.isfinite(eps) or not 0 < eps < 1:
        raise ValueError(f"eps must be a real number in (0, 1), got {eps!r}")
    return float(eps)


def check_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be at least {minimum}, got {value}")
    return int(value)


def check_kind(kind: str) -> str:
    if kind not in ("rskelf", "hif"):
        raise ValueError(f"kind must be 'rskelf' or 'hif', got {kind!r}")
    return kind


def check_kernel(kernel) -> KernelMatrix:
    if not isinstance(kernel, KernelMatrix):
        raise TypeError("expected a KernelMatrix; wrap explicit matrices in DenseKernel")
    return kernel


def check_vector(x, n: int, name: str = "x") -> np.ndarray:
    """1D or 2D array with ``n`` finite rows; real or complex."""
    x = np.asarray(x)
    if x.dtype.kind not in "biufc":
        raise TypeError(f"{name} must be numeric")
    if x.ndim not in (1, 2) or x.shape[0] != n:
        raise ValueError(f"{name} must have {n} rows, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains NaN or inf")
    return x
