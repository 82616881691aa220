"""Small linear-algebra helpers shared across the package.

Conventions: matrices are dense numpy arrays of float64. Half-vectorization
stacks the lower triangle column by column, so for a symmetric 2x2 matrix
[[a, c], [c, b]] the result is [a, c, b].
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

# Relative tolerance for "symmetric enough" and floor for "PSD enough":
# smallest eigenvalue may be as low as -PSD_REL_TOL * largest eigenvalue
# before a matrix is rejected.
SYM_REL_TOL = 1e-12
PSD_REL_TOL = 1e-10


def symmetrize(mat: np.ndarray) -> np.ndarray:
    """Return the symmetric part (M + M^T) / 2."""
    return 0.5 * (mat + mat.T)


def is_symmetric(mat: np.ndarray, rel_tol: float = SYM_REL_TOL) -> bool:
    """Check symmetry to a relative tolerance scaled by the largest entry."""
    scale = np.max(np.abs(mat)) if mat.size else 0.0
    if scale == 0.0:
        return True
    return bool(np.max(np.abs(mat - mat.T)) <= rel_tol * scale)


def min_max_eigenvalues(mat: np.ndarray) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix.

    Closed forms handle n <= 3 (these checks sit in the filter's per-step
    hot path); larger matrices fall back to numpy.
    """
    n = mat.shape[0]
    if n == 1:
        v = float(mat[0, 0])
        return v, v
    if n == 2:
        a, b = float(mat[0, 0]), float(mat[1, 1])
        c = 0.5 * float(mat[0, 1] + mat[1, 0])
        mid = 0.5 * (a + b)
        half = np.hypot(0.5 * (a - b), c)
        return mid - half, mid + half
    if n == 3:
        m = symmetrize(mat)
        off = m[0, 1] ** 2 + m[0, 2] ** 2 + m[1, 2] ** 2
        if off == 0.0:
            d = np.diag(m)
            return float(d.min()), float(d.max())
        q = float(np.trace(m)) / 3.0
        p2 = float(((m[0, 0] - q) ** 2 + (m[1, 1] - q) ** 2 + (m[2, 2] - q) ** 2)
                   + 2.0 * off)
        p = np.sqrt(p2 / 6.0)
        b = (m - q * np.eye(3)) / p
        r = np.clip(0.5 * float(np.linalg.det(b)), -1.0, 1.0)
        phi = np.arccos(r) / 3.0
        hi = q + 2.0 * p * np.cos(phi)
        lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
        return float(lo), float(hi)
    eigs = np.linalg.eigvalsh(symmetrize(mat))
    return float(eigs[0]), float(eigs[-1])


def check_psd(mat: np.ndarray, rel_tol: float = PSD_REL_TOL) -> tuple[bool, float]:
    """Test positive semi-definiteness to a relative eigenvalue tolerance.

    Returns:
        (ok, worst) where worst is the smallest eigenvalue. ok is True when
        worst >= -rel_tol * largest eigenvalue (with an absolute floor for
        matrices that are numerically zero).
    """
    lo, hi = min_max_eigenvalues(mat)
    floor = -rel_tol * max(hi, 1.0e-30)
    return lo >= floor, lo


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD matrix square root via eigendecomposition.

    Negative eigenvalues, which can only arise from roundoff on a PSD input,
    are clipped to zero.
    """
    vals, vecs = np.linalg.eigh(symmetrize(mat))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


@lru_cache(maxsize=None)
def vech_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column index arrays of the column-stacked lower triangle.

    Cached per dimension; the returned arrays are marked read-only.
    """
    rows = []
    cols = []
    for j in range(n):
        for i in range(j, n):
            rows.append(i)
            cols.append(j)
    out = (np.asarray(rows), np.asarray(cols))
    out[0].flags.writeable = False
    out[1].flags.writeable = False
    return out


def vech(mat: np.ndarray) -> np.ndarray:
    """Half-vectorization: stack the lower triangle column-wise."""
    n = mat.shape[0]
    rows, cols = vech_indices(n)
    return mat[rows, cols]


def unvech(vec: np.ndarray) -> np.ndarray:
    """Inverse of vech: rebuild the full symmetric matrix."""
    m = vec.shape[0]
    n = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if n * (n + 1) // 2 != m:
        raise ValueError(f"length {m} is not a triangular number")
    out = np.zeros((n, n))
    rows, cols = vech_indices(n)
    out[rows, cols] = vec
    out[cols, rows] = vec
    return out
