"""Principal submatrices of factorized DPP kernels and their determinants.

A kernel is stored in factored form ``V diag(R)^2 V^T + diag(D)^2``; the
single-task kernel is the special case ``R = 1``.  Only the small ``k x k``
submatrices indexed by a basket are ever materialized.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InputError, SingularKernelError

JITTER = 1e-10
SINGULAR_RTOL = 1e-12


def _frozen(a, ndim, name):
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise InputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FactorizedKernel:
    """Low-rank kernel ``V diag(R)^2 V^T + diag(D)^2`` over ``p`` items.

    ``R`` is a length-``r`` vector (one task slice) or ``None`` for the
    single-task kernel ``V V^T + diag(D)^2``.
    """

    V: np.ndarray
    D: np.ndarray
    R: np.ndarray | None = None

    def __post_init__(self):
        V = _frozen(self.V, 2, "V")
        D = _frozen(self.D, 1, "D")
        if V.shape[0] < 1 or V.shape[1] < 1:
            raise InputError(f"V must be at least 1x1, got {V.shape}")
        if D.shape[0] != V.shape[0]:
            raise InputError(f"D has length {D.shape[0]}, expected {V.shape[0]}")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "D", D)
        if self.R is not None:
            R = _frozen(self.R, 1, "R")
            if R.shape[0] != V.shape[1]:
                raise InputError(f"R has length {R.shape[0]}, expected {V.shape[1]}")
            object.__setattr__(self, "R", R)

    @property
    def p(self) -> int:
        return self.V.shape[0]

    @property
    def r(self) -> int:
        return self.V.shape[1]


@dataclass(frozen=True)
class SubmatrixResult:
    matrix: np.ndarray
    det: float
    inverse: np.ndarray
    jittered: bool = False


def check_items(items, p: int) -> np.ndarray:
    """Validate an index set and return it as an int array (order kept)."""
    idx = np.asarray(list(items) if not isinstance(items, np.ndarray) else items)
    if idx.ndim != 1:
        raise InputError("item set must be one-dimensional")
    if idx.size == 0:
        return idx.astype(np.intp)
    if not np.issubdtype(idx.dtype, np.integer):
        raise InputError(f"item indices must be integers, got dtype {idx.dtype}")
    idx = idx.astype(np.intp)
    if idx.min() < 0 or idx.max() >= p:
        raise InputError(f"item index out of range [0, {p}): {idx.tolist()}")
    if np.unique(idx).size != idx.size:
        raise InputError(f"duplicate item index in {idx.tolist()}")
    return idx


def build_submatrix(kernel: FactorizedKernel, items) -> np.ndarray:
    """Dense ``k x k`` principal submatrix of the kernel restricted to ``items``."""
    idx = check_items(items, kernel.p)
    if idx.size == 0:
        raise InputError("item set must be nonempty")
    Vi = kernel.V[idx]
    if kernel.R is not None:
        Vi_weighted = Vi * kernel.R**2
    else:
        Vi_weighted = Vi
    L = Vi_weighted @ Vi.T
    L = 0.5 * (L + L.T)
    L[np.diag_indices_from(L)] += kernel.D[idx] ** 2
    return L


def _singular_threshold(matrix):
    k = matrix.shape[-1]
    scale = max(1.0, float(np.trace(matrix)))
    with np.errstate(over="ignore"):
        return SINGULAR_RTOL * np.power(scale, k)


def _lu_det_inverse(matrix):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(matrix, check_finite=False)
    diag = np.diag(lu)
    swaps = np.count_nonzero(piv != np.arange(piv.size))
    det = float(np.prod(diag)) * (-1.0 if swaps % 2 else 1.0)
    if np.any(diag == 0.0):
        return det, None
    with np.errstate(all="ignore"):
        inv = scipy.linalg.lu_solve((lu, piv), np.eye(matrix.shape[0]), check_finite=False)
    if not np.all(np.isfinite(inv)):
        return det, None
    return det, inv


def det_and_inverse(matrix) -> SubmatrixResult:
    """Determinant and inverse of a symmetric matrix from one pivoted LU.

    Near-singular input (``|det|`` below ``1e-12 * max(1, trace)^k``) gets a
    single ``1e-10 * I`` jitter before refactoring.  Raises
    :class:`SingularKernelError` if the jittered matrix still has no inverse.
    """
    A = np.array(matrix, dtype=np.float64, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError("matrix has non-finite entries")
    k = A.shape[0]
    if k == 0:
        return SubmatrixResult(A, 1.0, A.copy(), False)

    det, inv = _lu_det_inverse(A)
    if inv is not None and abs(det) >= _singular_threshold(A):
        return SubmatrixResult(A, det, inv, False)

    J = A + JITTER * np.eye(k)
    det, inv = _lu_det_inverse(J)
    if inv is None:
        raise SingularKernelError(f"{k}x{k} submatrix is singular even after jitter")
    return SubmatrixResult(J, det, inv, True)


def determinant(matrix) -> float:
    """Plain LU determinant, no jitter; singular matrices give (near) zero."""
    A = np.asarray(matrix, dtype=np.float64)
    if A.shape[0] == 0:
        return 1.0
    return float(np.linalg.det(A))


def batch_det_and_inverse(stack):
    """Vectorized :func:`det_and_inverse` over a ``(n, k, k)`` stack.

    Returns ``(dets, inverses, jittered, ok)``; rows with ``ok`` false are
    singular after jitter and have undefined inverses (zeros).
    """
    A = np.array(stack, dtype=np.float64, copy=True)
    n, k, _ = A.shape
    if k == 0:
        return np.ones(n), np.zeros_like(A), np.zeros(n, bool), np.ones(n, bool)
    with np.errstate(over="ignore"):
        dets = np.linalg.det(A)
        traces = np.maximum(1.0, np.trace(A, axis1=1, axis2=2))
        jittered = ~(np.abs(dets) >= SINGULAR_RTOL * traces**k)
    if jittered.any():
        A[jittered] += JITTER * np.eye(k)
        dets[jittered] = np.linalg.det(A[jittered])
    ok = np.ones(n, dtype=bool)
    try:
        inv = np.linalg.inv(A)
        ok &= np.all(np.isfinite(inv), axis=(1, 2))
    except np.linalg.LinAlgError:
        inv = np.zeros_like(A)
        for j in range(n):
            try:
                inv[j] = np.linalg.inv(A[j])
            except np.linalg.LinAlgError:
                ok[j] = False
        ok &= np.all(np.isfinite(inv), axis=(1, 2))
    inv[~ok] = 0.0
    return dets, inv, jittered, ok
