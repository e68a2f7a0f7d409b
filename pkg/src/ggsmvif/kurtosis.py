"""Covariance and Mardia-kurtosis algebra for sums of independent vectors.

For zero-mean ``X`` and ``Y`` with ``Z = X + Y`` the quantities used here are

* ``delta(A, B) = S_A^{1/2} S_B^{-1} S_A^{1/2}`` (symmetric square roots), and
* ``rho(A, B) = 2 ||delta||_F^2 + tr(delta)^2``, which is exactly
  ``E[(X^T S_B^{-1} X)^2]`` when ``X ~ N(0, S_A)``.

The sum's kurtosis is then the non-Gaussian excess of each summand's fourth
moment, measured in the metric of ``S_Z``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import DegenerateInputError, DimensionError, NotSPDError
from .linalg import as_square, cholesky_spd, mahalanobis_sq, spd_sqrt
from .mggd import (
    MggdParams,
    covariance_to_scatter,
    mardia_kurtosis_closed_form,
    scatter_to_covariance,
    shape_from_kurtosis,
)

# Sum covariances closer to singular than this are rejected, not regularized.
MIN_EIG_RATIO = 1e-12


@dataclass(frozen=True, eq=False)
class MomentSummary:
    """Covariance and Mardia excess kurtosis of a zero-mean random vector."""

    covariance: np.ndarray
    kurtosis: float

    def __post_init__(self):
        cov = as_square(self.covariance, "covariance")
        cholesky_spd(cov, "covariance")
        kurt = float(self.kurtosis)
        m = cov.shape[0]
        if not kurt >= -m * (m + 2):
            raise ValueError(f"kurtosis {kurt} is below the floor -M(M+2) = {-m * (m + 2)}")
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "kurtosis", kurt)

    @property
    def dim(self) -> int:
        return self.covariance.shape[0]

    @classmethod
    def of_mggd(cls, params: MggdParams) -> "MomentSummary":
        return cls(scatter_to_covariance(params), mardia_kurtosis_closed_form(params.dim, params.shape))

    @classmethod
    def gaussian(cls, covariance) -> "MomentSummary":
        return cls(covariance, 0.0)


@dataclass(frozen=True, eq=False)
class EllipticalSummary:
    """Moments plus the fourth-moment ratio offset ``lam``.

    ``lam = E[V1^4] / E[V1^2 V2^2] - 3`` for the standardized spherical
    generator; it is zero for every MGGD, the Gaussian included.
    """

    moments: MomentSummary
    lam: float = 0.0

    @property
    def dim(self) -> int:
        return self.moments.dim


def _check_sum_covariance(sigma: np.ndarray) -> None:
    vals = np.linalg.eigvalsh(sigma)
    if vals[-1] <= 0 or vals[0] <= MIN_EIG_RATIO * vals[-1]:
        raise DegenerateInputError("covariance of the sum is numerically singular")


def delta(sigma_a, sigma_b) -> np.ndarray:
    """``S_A^{1/2} S_B^{-1} S_A^{1/2}`` with the symmetric square root of ``S_A``."""
    a = as_square(sigma_a, "sigma_a")
    b = as_square(sigma_b, "sigma_b")
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    root = spd_sqrt(a, "sigma_a")
    chol = cholesky_spd(b, "sigma_b")
    out = root @ cho_solve((chol, True), root)
    return 0.5 * (out + out.T)


def rho(sigma_a, sigma_b) -> float:
    d = delta(sigma_a, sigma_b)
    return float(2.0 * np.sum(d * d) + np.trace(d) ** 2)


def kurtosis_of_sum_general(cov_x, cov_y, fourth_x: float, fourth_y: float) -> float:
    """Kurtosis of ``Z = X + Y`` from caller-supplied fourth moments.

    Distribution-free. ``fourth_x`` is ``E[(X^T S_Z^{-1} X)^2]`` with
    ``S_Z = cov_x + cov_y``, and likewise ``fourth_y``.
    """
    cx = as_square(cov_x, "cov_x")
    cy = as_square(cov_y, "cov_y")
    if cx.shape != cy.shape:
        raise DimensionError(f"shape mismatch {cx.shape} vs {cy.shape}")
    sigma_z = cx + cy
    _check_sum_covariance(sigma_z)
    return float(fourth_x - rho(cx, sigma_z) + fourth_y - rho(cy, sigma_z))


def elliptical_fourth_moment(x: EllipticalSummary, sigma_z) -> float:
    """``E[(X^T S_Z^{-1} X)^2]`` for elliptical ``X``.

    Written out over the entries of ``delta`` rather than through ``rho`` so it
    can serve as an independent check of the closed form for the sum.
    """
    m = x.dim
    d = delta(x.moments.covariance, sigma_z)
    cross = (x.moments.kurtosis + m * (m + 2)) / (m * (m + 2 + x.lam))  # E[V1^2 V2^2]
    fourth = (x.lam + 3.0) * cross  # E[V1^4]
    diag = np.diag(d)
    off = 0.0
    for i in range(m):
        for j in range(m):
            if i != j:
                off += 2.0 * d[i, j] ** 2 + diag[i] * diag[j]
    return float(cross * off + fourth * np.sum(diag**2))


def _elliptical_term(x: EllipticalSummary, sigma_z: np.ndarray) -> tuple[float, float]:
    m = x.dim
    if m + 2 + x.lam <= 0:
        raise ValueError(f"M + 2 + lam must be positive, got lam={x.lam}")
    d = delta(x.moments.covariance, sigma_z)
    r = float(2.0 * np.sum(d * d) + np.trace(d) ** 2)
    numer = (r + x.lam * float(np.sum(np.diag(d) ** 2))) * (x.moments.kurtosis + m * (m + 2))
    return numer / (m * (m + 2 + x.lam)), r


def kurtosis_of_sum_elliptical(x: EllipticalSummary, y: EllipticalSummary) -> float:
    """Mardia kurtosis of the sum of independent zero-mean elliptical vectors."""
    if x.dim != y.dim:
        raise DimensionError(f"dimension mismatch {x.dim} vs {y.dim}")
    sigma_z = x.moments.covariance + y.moments.covariance
    _check_sum_covariance(sigma_z)
    tx, rx = _elliptical_term(x, sigma_z)
    ty, ry = _elliptical_term(y, sigma_z)
    return float(tx + ty - rx - ry)


def kurtosis_mggd_plus_white_gaussian(x_params: MggdParams, z_scale: float, noise_var: float) -> float:
    """Kurtosis of ``z_scale * U + N`` with ``U`` MGGD and ``N ~ N(0, noise_var I)``."""
    if noise_var < 0 or z_scale < 0:
        raise ValueError("z_scale and noise_var must be non-negative")
    if z_scale == 0 and noise_var == 0:
        raise DegenerateInputError("z_scale and noise_var are both zero")
    m = x_params.dim
    gamma_x = mardia_kurtosis_closed_form(m, x_params.shape)
    if z_scale == 0:
        return 0.0
    # With white noise, S_X and S_Z share eigenvectors, so delta is diagonal
    # there; this avoids factorizing S_X when z_scale^2 underflows it.
    lam = z_scale**2 * np.linalg.eigvalsh(scatter_to_covariance(x_params))
    _check_sum_covariance(np.diag(lam + noise_var))
    d = lam / (lam + noise_var)
    rho_xz = 2.0 * np.sum(d * d) + np.sum(d) ** 2
    return float(gamma_x * rho_xz / (m * (m + 2)))


def fit_mggd_by_moments(target: MomentSummary) -> MggdParams:
    """MGGD sharing the target's covariance and Mardia kurtosis.

    Emits ``KurtosisClampWarning`` when the kurtosis had to be clamped to the
    shape bracket; the fit is then the closest reachable shape.
    """
    estimate = shape_from_kurtosis(target.dim, target.kurtosis)
    return MggdParams(estimate.shape, covariance_to_scatter(target.covariance, estimate.shape))


def sample_mardia_kurtosis(samples) -> float:
    """Plug-in Mardia excess kurtosis (sample mean and ``1/n`` covariance)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / len(x)
    try:
        chol = cholesky_spd(0.5 * (cov + cov.T), "sample covariance")
    except NotSPDError as exc:
        raise DegenerateInputError("sample covariance is singular") from exc
    q = mahalanobis_sq(chol, centered)
    m = x.shape[1]
    return float(np.mean(q**2) - m * (m + 2))


def moment_summary(samples) -> MomentSummary:
    """Sample covariance and Mardia kurtosis of an ``(n, M)`` data matrix."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / len(x)
    return MomentSummary(0.5 * (cov + cov.T), sample_mardia_kurtosis(x))
