"""Zero-mean multivariate generalized Gaussian distribution (MGGD).

The density of ``U ~ MGGD(0, alpha, C)`` in dimension ``M`` is

.. math::

    f(u) = \\frac{\\alpha\\,\\Gamma(M/2)\\,\\det(C)^{-1/2}}
                {\\pi^{M/2}\\,\\Gamma(M/(2\\alpha))\\,2^{M/(2\\alpha)}}
           \\exp\\left(-\\tfrac{1}{2}(u^T C^{-1} u)^{\\alpha}\\right).

``alpha = 1`` is the Gaussian ``N(0, C)``. Everything below works in nats and
uses ``gammaln`` for the normalizing constants so that dimensions up to a few
dozen never overflow.

A useful fact used throughout: with ``t = u^T C^{-1} u`` the variable
``s = t**alpha`` is ``Gamma(M / (2 alpha), scale=2)`` and the direction
``u / |u|`` (after whitening) is uniform on the sphere. Every moment below is a
Gamma moment of ``s``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import gammaln

from .errors import DimensionError
from .linalg import as_square, cholesky_spd, logdet_from_cholesky, mahalanobis_sq

LOG_2PI_E = float(np.log(2.0 * np.pi * np.e))

# Bracket for inverting the kurtosis curve.
SHAPE_MIN = 0.05
SHAPE_MAX = 10.0


class KurtosisClampWarning(RuntimeWarning):
    """Target kurtosis was outside the range reachable on the shape bracket."""


@dataclass(frozen=True, eq=False)
class MggdParams:
    """Shape and scatter of a zero-mean MGGD.

    Parameters
    ----------
    shape : float
        Shape parameter ``alpha > 0``.
    scatter : array_like, shape (M, M)
        Symmetric positive-definite scatter matrix ``C``.
    """

    shape: float
    scatter: np.ndarray

    def __post_init__(self):
        shape = float(self.shape)
        if not np.isfinite(shape) or shape <= 0:
            raise ValueError(f"shape must be positive, got {self.shape}")
        scatter = as_square(self.scatter, "scatter")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "scatter", scatter)
        # validates symmetry and positive definiteness up front
        self.cholesky  # noqa: B018

    @classmethod
    def isotropic(cls, dim: int, shape: float, scale: float = 1.0) -> "MggdParams":
        return cls(shape, scale * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.scatter.shape[0]

    @cached_property
    def cholesky(self) -> np.ndarray:
        return cholesky_spd(self.scatter, "scatter")

    @cached_property
    def logdet(self) -> float:
        return logdet_from_cholesky(self.cholesky)

    def scaled(self, factor: float) -> "MggdParams":
        """Parameters of ``factor * U``."""
        return MggdParams(self.shape, factor**2 * self.scatter)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "shape": self.shape, "scatter": self.scatter.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "MggdParams":
        params = cls(data["shape"], np.asarray(data["scatter"], dtype=float))
        if "dim" in data and int(data["dim"]) != params.dim:
            raise DimensionError(f"dim={data['dim']} disagrees with scatter of size {params.dim}")
        return params


@dataclass(frozen=True, eq=False)
class FisherInfo:
    """Translation Fisher information matrix; ``matrix`` is None when infinite."""

    finite: bool
    matrix: Optional[np.ndarray] = None

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix)) if self.finite else float("inf")


class ShapeEstimate(NamedTuple):
    shape: float
    clamped: bool


def log_normalizer(dim: int, shape) -> np.ndarray:
    """Log of the constant in front of ``det(C)^{-1/2} exp(...)``."""
    shape = np.asarray(shape, dtype=float)
    k = dim / (2.0 * shape)
    return (
        np.log(shape)
        + gammaln(dim / 2.0)
        - 0.5 * dim * np.log(np.pi)
        - gammaln(k)
        - k * np.log(2.0)
    )


def log_pdf(params: MggdParams, points) -> np.ndarray | float:
    """Log density at one point (shape ``(M,)``) or at rows of an ``(n, M)`` array."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != params.dim:
        raise DimensionError(f"points have dimension {pts.shape[-1]}, expected {params.dim}")
    t = mahalanobis_sq(params.cholesky, pts)
    out = log_normalizer(params.dim, params.shape) - 0.5 * params.logdet - 0.5 * t**params.shape
    return float(out[0]) if single else out


def score(params: MggdParams, points) -> np.ndarray:
    """Gradient of the log density, ``-alpha t^(alpha-1) C^{-1} u``, row-wise."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    prec_u = cho_solve((params.cholesky, True), pts.T).T
    t = np.einsum("ij,ij->i", pts, prec_u)
    with np.errstate(divide="ignore"):
        weight = params.shape * t ** (params.shape - 1.0)
    return -weight[:, None] * prec_u


def sample(params: MggdParams, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` vectors via the radius/direction decomposition.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``; equal seeds
    give identical arrays.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    dim, alpha = params.dim, params.shape
    direction = rng.standard_normal((n, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    s = rng.gamma(dim / (2.0 * alpha), 2.0, size=n)
    radius = s ** (1.0 / (2.0 * alpha))
    return (direction * radius[:, None]) @ params.cholesky.T


def entropy(params: MggdParams) -> float:
    """Differential entropy in nats."""
    dim, alpha = params.dim, params.shape
    return float(dim / (2.0 * alpha) - log_normalizer(dim, alpha) + 0.5 * params.logdet)


def log_fisher_coefficient(dim: int, shape) -> np.ndarray:
    """Log of ``kappa`` in ``J(U) = kappa * C^{-1}``; ``inf`` where J is not finite."""
    shape = np.asarray(shape, dtype=float)
    arg = 2.0 + (dim - 2.0) / (2.0 * shape)
    with np.errstate(invalid="ignore"):
        val = (
            (2.0 - 1.0 / shape) * np.log(2.0)
            + 2.0 * np.log(shape)
            - np.log(dim)
            - gammaln(dim / (2.0 * shape))
            + gammaln(np.where(arg > 0, arg, 1.0))
        )
    return np.where(arg > 0, val, np.inf)


def fisher_is_finite(dim: int, shape: float) -> bool:
    return shape > 0.5 - dim / 4.0


def fisher_information(params: MggdParams) -> FisherInfo:
    """Fisher information matrix under translation.

    Finite iff ``alpha > 1/2 - M/4``; otherwise ``finite=False`` and no matrix.
    """
    dim, alpha = params.dim, params.shape
    if not fisher_is_finite(dim, alpha):
        return FisherInfo(finite=False)
    precision = cho_solve((params.cholesky, True), np.eye(dim))
    precision = 0.5 * (precision + precision.T)
    coef = 1.0 if alpha == 1.0 else float(np.exp(log_fisher_coefficient(dim, alpha)))
    return FisherInfo(finite=True, matrix=coef * precision)


def log_covariance_factor(dim: int, shape) -> np.ndarray:
    """Log of ``c`` with ``Cov(U) = c * C``."""
    shape = np.asarray(shape, dtype=float)
    return (
        np.log(2.0) / shape
        + gammaln((dim + 2.0) / (2.0 * shape))
        - np.log(dim)
        - gammaln(dim / (2.0 * shape))
    )


def covariance_factor(dim: int, shape: float) -> float:
    if shape == 1.0:
        return 1.0
    return float(np.exp(log_covariance_factor(dim, shape)))


def scatter_to_covariance(params: MggdParams) -> np.ndarray:
    return covariance_factor(params.dim, params.shape) * params.scatter


def covariance_to_scatter(covariance, shape: float) -> np.ndarray:
    cov = as_square(covariance, "covariance")
    return cov / covariance_factor(cov.shape[0], shape)


def mardia_kurtosis_closed_form(dim: int, shape):
    """Mardia excess kurtosis of an MGGD; depends on dimension and shape only.

    ``M^2 G((M+4)/2a) G(M/2a) / G((M+2)/2a)^2 - M(M+2)``, from the second and
    fourth Gamma moments of the radial variable. Accepts array ``shape``.
    """
    a = np.asarray(shape, dtype=float)
    log_ratio = (
        gammaln((dim + 4.0) / (2.0 * a))
        + gammaln(dim / (2.0 * a))
        - 2.0 * gammaln((dim + 2.0) / (2.0 * a))
    )
    out = dim**2 * np.exp(log_ratio) - dim * (dim + 2.0)
    out = np.where(a == 1.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def kurtosis_infimum(dim: int) -> float:
    """Limit of the kurtosis as the shape goes to infinity (uniform-shell limit)."""
    return -2.0 * dim * (dim + 2.0) / (dim + 4.0)


def invert_kurtosis(dim: int, targets: np.ndarray):
    """Vectorized inverse of ``mardia_kurtosis_closed_form`` in the shape.

    Returns ``(shapes, clamped)``; no warning is emitted here.
    """
    targets = np.asarray(targets, dtype=float)
    if np.any(~np.isfinite(targets)) or np.any(targets <= -dim * (dim + 2.0)):
        raise ValueError("target kurtosis must be finite and above -M(M+2)")
    k_hi = mardia_kurtosis_closed_form(dim, SHAPE_MIN)
    k_lo = mardia_kurtosis_closed_form(dim, SHAPE_MAX)
    too_peaked = targets > k_hi
    too_flat = targets < k_lo
    lo = np.full(targets.shape, SHAPE_MIN)
    hi = np.full(targets.shape, SHAPE_MAX)
    # kurtosis is strictly decreasing in shape; bisect to machine resolution
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        above = mardia_kurtosis_closed_form(dim, mid) > targets
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all((hi - lo) <= 4.0 * np.finfo(float).eps * hi):
            break
    shapes = 0.5 * (lo + hi)
    shapes = np.where(targets == 0.0, 1.0, shapes)
    shapes = np.where(too_peaked, SHAPE_MIN, np.where(too_flat, SHAPE_MAX, shapes))
    return shapes, too_peaked | too_flat


def shape_from_kurtosis(dim: int, target_kurtosis: float) -> ShapeEstimate:
    """Shape whose MGGD has the given Mardia excess kurtosis.

    Bisection on ``[SHAPE_MIN, SHAPE_MAX]``. Targets outside the attainable
    range are clamped to the nearest endpoint and flagged with ``clamped=True``
    (and a ``KurtosisClampWarning``).

    Raises
    ------
    ValueError
        If the target is not above ``-M(M+2)``, which no distribution reaches.
    """
    shapes, clamped = invert_kurtosis(dim, np.array([target_kurtosis]))
    if clamped[0]:
        warnings.warn(
            f"kurtosis {target_kurtosis:.6g} unreachable in dimension {dim} for shape in "
            f"[{SHAPE_MIN}, {SHAPE_MAX}]; clamped to {shapes[0]}",
            KurtosisClampWarning,
            stacklevel=2,
        )
    return ShapeEstimate(float(shapes[0]), bool(clamped[0]))


def entropy_deficit(dim: int, shape) -> np.ndarray:
    """Entropy of an MGGD minus that of the Gaussian with the same covariance.

    Non-positive, zero at ``shape == 1``. Lets entropies be formed as
    "Gaussian part + shape correction" without cancelling large terms.
    """
    a = np.asarray(shape, dtype=float)
    out = (
        dim / (2.0 * a)
        - log_normalizer(dim, a)
        - 0.5 * dim * log_covariance_factor(dim, a)
        - 0.5 * dim * LOG_2PI_E
    )
    return np.where(a == 1.0, 0.0, out)
