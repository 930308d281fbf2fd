"""Shared dense/banded linear-algebra helpers.

Internal module: thin wrappers around LAPACK factorizations that expose
exactly what the rest of the package needs (determinant signs from pivots,
smallest singular pairs, orthonormal complements, polar orthonormalization).
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import NumericallySingular, SingularJacobian

# Relative pivot threshold below which a factorization is reported singular.
PIVOT_RTOL = 1e-12


def spectral_norm(a: np.ndarray) -> float:
    """2-norm of a matrix (largest singular value)."""
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def det_sign_dense(j: np.ndarray, *, norm: float | None = None) -> int:
    """Sign of det(j) from a dense LU with partial pivoting.

    Product of the U-diagonal signs times the parity of the row permutation.
    Raises NumericallySingular instead of returning 0 when a pivot falls
    below PIVOT_RTOL * ||j||.
    """
    j = np.asarray(j, dtype=float)
    n = j.shape[0]
    if j.shape != (n, n):
        raise ValueError("det_sign requires a square matrix")
    if n == 0:
        return 1
    if norm is None:
        norm = spectral_norm(j)
    lu, piv = sla.lu_factor(j, check_finite=False)
    diag = np.diag(lu)
    if np.min(np.abs(diag)) < PIVOT_RTOL * norm:
        raise NumericallySingular(
            f"pivot {np.min(np.abs(diag)):.3e} below {PIVOT_RTOL:.0e} * ||J|| = "
            f"{PIVOT_RTOL * norm:.3e}"
        )
    swaps = int(np.sum(piv != np.arange(n)))
    sign = 1 if swaps % 2 == 0 else -1
    sign *= int(np.prod(np.sign(diag)))
    return sign


def smallest_singular_pair(j: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Return (smin, right singular vector of smin, smax) of a dense matrix."""
    _, s, vt = np.linalg.svd(np.asarray(j, dtype=float))
    return float(s[-1]), vt[-1].copy(), float(s[0])


def orth_complement(q: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(q).

    q is d x k with orthonormal columns; returns d x (d-k).
    """
    q = np.asarray(q, dtype=float)
    d, k = q.shape
    if k == 0:
        return np.eye(d)
    if k == d:
        return np.zeros((d, 0))
    # Full SVD of q: the trailing left singular vectors span the complement.
    u, _, _ = np.linalg.svd(q, full_matrices=True)
    return u[:, k:].copy()


def polar_orthonormalize(b: np.ndarray) -> np.ndarray:
    """Closest orthonormal frame to b (polar factor via SVD).

    Unlike QR this is continuous in b and does not introduce arbitrary
    column sign flips, which the frame-transport determinant bookkeeping
    relies on.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[1] == 0:
        return b.copy()
    u, s, vt = np.linalg.svd(b, full_matrices=False)
    if s[-1] <= 1e-13 * max(1.0, s[0]):
        raise NumericallySingular("frame lost rank during orthonormalization")
    return u @ vt


class BandedLU:
    """LU factorization of a banded matrix via LAPACK gbtrf/gbtrs.

    The matrix is supplied in the LAPACK band layout with kl extra rows of
    workspace on top: ab[kl + ku + i - j, j] = A[i, j].
    """

    def __init__(self, ab: np.ndarray, kl: int, ku: int, n: int):
        lu, ipiv, info = lapack.dgbtrf(ab, kl=kl, ku=ku)
        if info < 0:
            raise ValueError(f"dgbtrf: illegal argument {-info}")
        self._lu = lu
        self._ipiv = ipiv
        self.kl = kl
        self.ku = ku
        self.n = n
        self.exact_singular = info > 0
        # U diagonal lives in row kl + ku of the factored band storage.
        self._udiag = lu[kl + ku, :n]

    def min_pivot(self) -> float:
        if self.exact_singular:
            return 0.0
        return float(np.min(np.abs(self._udiag)))

    def det_sign(self, *, norm: float) -> int:
        if self.exact_singular or self.min_pivot() < PIVOT_RTOL * norm:
            raise NumericallySingular("banded LU pivot below threshold")
        swaps = int(np.sum(self._ipiv != np.arange(1, self.n + 1)))
        sign = 1 if swaps % 2 == 0 else -1
        sign *= int(np.prod(np.sign(self._udiag)))
        return sign

    def solve(self, b: np.ndarray, trans: bool = False) -> np.ndarray:
        if self.exact_singular:
            raise SingularJacobian("banded LU is exactly singular")
        x, info = lapack.dgbtrs(
            self._lu, self.kl, self.ku, b, self._ipiv, trans=1 if trans else 0
        )
        if info != 0:
            raise SingularJacobian(f"dgbtrs failed with info={info}")
        return x
