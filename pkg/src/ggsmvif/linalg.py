"""Small dense linear-algebra helpers.

Cholesky is the single factorization used for determinants, quadratic forms
and whitening; a failed Cholesky is what "not SPD" means here.
"""
from __future__ import annotations

import numpy as np
from scipy import linalg

from .errors import DimensionError, NotSPDError

SYMMETRY_TOL = 1e-10


def as_square(mat, name: str = "matrix") -> np.ndarray:
    arr = np.atleast_2d(np.asarray(mat, dtype=float))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def cholesky_spd(mat, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises
    ------
    NotSPDError
        If the matrix is asymmetric beyond ``SYMMETRY_TOL`` or the
        factorization hits a non-positive pivot.
    """
    arr = as_square(mat, name)
    if not np.all(np.isfinite(arr)):
        raise NotSPDError(f"{name} has non-finite entries")
    if np.max(np.abs(arr - arr.T), initial=0.0) > SYMMETRY_TOL:
        raise NotSPDError(f"{name} is not symmetric")
    try:
        chol = linalg.cholesky(arr, lower=True)
    except linalg.LinAlgError as exc:
        raise NotSPDError(f"{name} is not positive definite") from exc
    if np.any(np.diag(chol) <= 0):
        raise NotSPDError(f"{name} is not positive definite")
    return chol


def logdet_from_cholesky(chol: np.ndarray) -> float:
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def mahalanobis_sq(chol: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Row-wise ``x^T (L L^T)^{-1} x`` for an (n, M) array."""
    white = linalg.solve_triangular(chol, points.T, lower=True)
    return np.einsum("ij,ij->j", white, white)


def spd_sqrt(mat, name: str = "matrix") -> np.ndarray:
    """Symmetric square root through the eigendecomposition."""
    arr = as_square(mat, name)
    cholesky_spd(arr, name)
    vals, vecs = np.linalg.eigh(0.5 * (arr + arr.T))
    return (vecs * np.sqrt(vals)) @ vecs.T
