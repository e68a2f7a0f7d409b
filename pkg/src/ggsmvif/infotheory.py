"""Mutual-information bounds and approximations for the GGSM channel model.

Per block ``i`` the reference and distorted observations are

    E = z U + N,        F = g z U + V + N',

with ``U`` MGGD, ``N, N' ~ N(0, s_n I)`` and ``V ~ N(0, s_v I)``. Conditioned
on ``z`` both channels are "scaled MGGD plus white Gaussian noise", so a single
pair of formulas covers them: the entropy power inequality gives the lower
bound, the Fisher-information bound on adding Gaussian noise gives the upper
bound, and the moment-matched MGGD gives a point approximation.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Hashable, Optional, Sequence

import numpy as np

from .errors import DegenerateInputError, InfiniteFisherInformation
from .kurtosis import MomentSummary, fit_mggd_by_moments, kurtosis_mggd_plus_white_gaussian
from .mggd import (
    LOG_2PI_E,
    KurtosisClampWarning,
    MggdParams,
    invert_kurtosis,
    entropy,
    entropy_deficit,
    fisher_information,
    mardia_kurtosis_closed_form,
    scatter_to_covariance,
)

if TYPE_CHECKING:
    from .pipeline import SubbandModel

logger = logging.getLogger(__name__)

TWO_PI_E = 2.0 * np.pi * np.e


@dataclass(frozen=True)
class ChannelParams:
    """Distortion channel for one block, or for all blocks of a subband at once.

    ``gain`` and ``distortion_noise_var`` may be scalars or per-block arrays.
    """

    gain: float | np.ndarray
    distortion_noise_var: float | np.ndarray
    neural_noise_var: float

    def __post_init__(self):
        if not self.neural_noise_var > 0:
            raise ValueError("neural noise variance must be strictly positive")
        if not np.all(np.isfinite(self.gain)):
            raise ValueError("gain must be finite")
        if np.any(np.asarray(self.distortion_noise_var) < 0):
            raise ValueError("distortion noise variance must be non-negative")

    @property
    def distorted_noise_var(self):
        return self.distortion_noise_var + self.neural_noise_var


@dataclass(frozen=True)
class MiBound:
    """Mutual information in nats; ``upper`` is None when the Fisher information is infinite."""

    lower: float
    upper: Optional[float]
    approx: Optional[float] = None

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "approx": self.approx}


@dataclass(frozen=True)
class SubbandReport:
    subband_id: Hashable
    n_blocks: int
    alpha: float
    neural_noise_var: float
    numerator: MiBound
    denominator: MiBound
    bound_violations: int = 0


@dataclass(frozen=True)
class QualityReport:
    """VIF lower bound, upper bound and moment-matched approximation.

    ``vif_lower`` and ``vif_upper`` are None when some subband has infinite
    Fisher information, since both ratios need an MI upper bound.
    """

    per_subband: list[SubbandReport]
    vif_lower: Optional[float]
    vif_upper: Optional[float]
    vif_approx: float
    notes: list[str] = field(default_factory=list)


def epi_lower_bound(h_x: float, h_y: float, dim: int) -> float:
    """Entropy-power lower bound on ``h(X + Y)`` for independent ``X, Y``."""
    return float(0.5 * dim * np.logaddexp(2.0 * h_x / dim, 2.0 * h_y / dim))


def gaussian_noise_upper_bound(h_x: float, fim_trace: float, noise_var: float, dim: int) -> float:
    """Upper bound on ``h(X + N)`` with ``N ~ N(mu, noise_var I)``.

    Raises
    ------
    InfiniteFisherInformation
        If ``fim_trace`` is not finite; no upper bound is available then.
    """
    if fim_trace is None or not np.isfinite(fim_trace):
        raise InfiniteFisherInformation("upper bound needs a finite Fisher information")
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    return float(h_x + 0.5 * dim * np.log1p(noise_var * fim_trace / dim))


def gaussian_entropy(noise_var: float, dim: int) -> float:
    return 0.5 * dim * (LOG_2PI_E + np.log(noise_var))


def _bounds(h_u, fim_trace, signal_sq, noise_var, dim):
    """Vectorized lower/upper MI for ``sqrt(signal_sq) * U + N(0, noise_var I)``."""
    x = np.asarray(signal_sq, dtype=float) / (TWO_PI_E * noise_var)
    lower = 0.5 * dim * np.log1p(x * np.exp(2.0 * h_u / dim))
    if fim_trace is None or not np.isfinite(fim_trace):
        return lower, None
    upper = h_u + 0.5 * dim * np.log(x + fim_trace / (TWO_PI_E * dim))
    return lower, upper


def _as_bound(lower, upper) -> MiBound:
    return MiBound(float(lower), None if upper is None else float(upper))


def mi_reference_bounds(u_entropy: float, fim_trace: float, z: float, channel: ChannelParams, dim: int) -> MiBound:
    """Bounds on ``I(C; E | z)`` given ``h(U)`` and ``tr J(U)``."""
    if z < 0:
        raise ValueError("z must be non-negative")
    return _as_bound(*_bounds(u_entropy, fim_trace, z**2, channel.neural_noise_var, dim))


def mi_distorted_bounds(u_entropy: float, fim_trace: float, z: float, channel: ChannelParams, dim: int) -> MiBound:
    """Bounds on ``I(C; F | z)``: signal scale ``g z``, noise ``s_v + s_n``."""
    if z < 0:
        raise ValueError("z must be non-negative")
    signal = (float(channel.gain) * z) ** 2
    return _as_bound(*_bounds(u_entropy, fim_trace, signal, float(channel.distorted_noise_var), dim))


def gaussian_channel_mi(cov_eigenvalues, signal_sq, noise_var) -> np.ndarray:
    """``0.5 * sum_k log(1 + signal_sq * lambda_k / noise_var)`` for each signal level."""
    lam = np.asarray(cov_eigenvalues, dtype=float)
    a = np.asarray(signal_sq, dtype=float)[..., None]
    s = np.asarray(noise_var, dtype=float)[..., None]
    return 0.5 * np.sum(np.log1p(a * lam / s), axis=-1)


def mi_approx_moment_matched(u_params: MggdParams, z: float, gain: float, total_noise_var: float) -> float:
    """Moment-matched approximation of ``I(C; g z U + noise)``.

    The sum is replaced by the MGGD with the same covariance and Mardia
    kurtosis; its entropy minus the exact Gaussian noise entropy is returned.
    """
    if not total_noise_var > 0:
        raise ValueError("total_noise_var must be positive")
    scale = abs(gain) * z
    if scale == 0:
        return 0.0
    m = u_params.dim
    cov = scale**2 * scatter_to_covariance(u_params) + total_noise_var * np.eye(m)
    kurt = kurtosis_mggd_plus_white_gaussian(u_params, scale, total_noise_var)
    fit = fit_mggd_by_moments(MomentSummary(cov, kurt))
    return entropy(fit) - gaussian_entropy(total_noise_var, m)


def _approx(cov_eigenvalues, kurt_u, signal_sq, noise_var, dim):
    """Vectorized moment-matched MI; returns (mi, number of clamped blocks).

    ``Cov(U)`` and ``Cov(U) * a + s I`` share eigenvectors, so ``delta`` is
    diagonal in that basis with entries ``a lam / (a lam + s)``.
    """
    a = np.asarray(signal_sq, dtype=float)
    s = np.broadcast_to(np.asarray(noise_var, dtype=float), a.shape)
    gauss = gaussian_channel_mi(cov_eigenvalues, a, s)
    if kurt_u == 0.0:
        return gauss, 0
    signal = a[:, None] * cov_eigenvalues
    d = signal / (signal + s[:, None])
    rho = 2.0 * np.sum(d**2, axis=1) + np.sum(d, axis=1) ** 2
    kurt_sum = kurt_u * rho / (dim * (dim + 2.0))
    shapes, clamped = invert_kurtosis(dim, kurt_sum)
    return gauss + entropy_deficit(dim, shapes), int(np.count_nonzero(clamped))


def _sum_bound(lower, upper, approx) -> MiBound:
    return MiBound(
        float(np.sum(lower)),
        None if upper is None else float(np.sum(upper)),
        float(np.sum(approx)),
    )


def subband_information(model: "SubbandModel", channel: ChannelParams) -> SubbandReport:
    """Per-subband MI sums for the distorted (numerator) and reference (denominator) channels."""
    params = MggdParams(model.alpha, model.scatter_estimate)
    dim = params.dim
    h_u = entropy(params)
    fim = fisher_information(params)
    fim_trace = fim.trace if fim.finite else None
    cov_eigs = np.linalg.eigvalsh(scatter_to_covariance(params))
    kurt_u = mardia_kurtosis_closed_form(dim, params.shape)

    z_sq = np.asarray(model.z_sq, dtype=float)
    n = z_sq.shape[0]
    gain = np.broadcast_to(np.asarray(channel.gain, dtype=float), (n,))
    s_n = float(channel.neural_noise_var)
    s_f = np.broadcast_to(np.asarray(channel.distorted_noise_var, dtype=float), (n,))

    ref_l, ref_u = _bounds(h_u, fim_trace, z_sq, s_n, dim)
    ref_a, clamp_r = _approx(cov_eigs, kurt_u, z_sq, s_n, dim)

    sig_f = gain**2 * z_sq
    dist_l, dist_u = _bounds(h_u, fim_trace, sig_f, s_f, dim)
    dist_a, clamp_d = _approx(cov_eigs, kurt_u, sig_f, s_f, dim)

    if clamp_r or clamp_d:
        warnings.warn(
            f"subband {model.subband_id}: {clamp_r + clamp_d} moment-matched shapes clamped",
            KurtosisClampWarning,
            stacklevel=2,
        )

    violations = 0
    if fim_trace is not None:
        for lo, ap, up in ((ref_l, ref_a, ref_u), (dist_l, dist_a, dist_u)):
            tol = 1e-9 * (1.0 + np.abs(ap))
            violations += int(np.count_nonzero((ap < lo - tol) | (ap > up + tol)))
        if violations:
            logger.warning(
                "subband %s: %d block approximations fall outside their bounds",
                model.subband_id,
                violations,
            )

    return SubbandReport(
        subband_id=model.subband_id,
        n_blocks=n,
        alpha=params.shape,
        neural_noise_var=s_n,
        numerator=_sum_bound(dist_l, dist_u, dist_a),
        denominator=_sum_bound(ref_l, ref_u, ref_a),
        bound_violations=violations,
    )


def vif_aggregate(subbands: Sequence[tuple["SubbandModel", ChannelParams]]) -> QualityReport:
    """Sum per-block information over subbands and form the three VIF ratios.

    Subbands are processed in sorted ``subband_id`` order and blocks in raster
    order, so the sums are bit-stable.

    Raises
    ------
    DegenerateInputError
        If the reference information sums are not positive.
    """
    if not subbands:
        raise DegenerateInputError("no subbands to aggregate")
    ordered = sorted(subbands, key=lambda pair: pair[0].subband_id)
    reports = [subband_information(model, channel) for model, channel in ordered]

    den_l = sum(r.denominator.lower for r in reports)
    den_a = sum(r.denominator.approx for r in reports)
    num_l = sum(r.numerator.lower for r in reports)
    num_a = sum(r.numerator.approx for r in reports)
    if not (den_a > 0 and den_l > 0):
        raise DegenerateInputError("reference mutual information is zero")

    notes = []
    if any(r.denominator.upper is None for r in reports):
        notes.append("Fisher information infinite in some subband; VIF bounds unavailable")
        vif_lower = vif_upper = None
    else:
        den_u = sum(r.denominator.upper for r in reports)
        num_u = sum(r.numerator.upper for r in reports)
        vif_lower = num_l / den_u
        vif_upper = num_u / den_l
    vif_approx = num_a / den_a
    if vif_lower is not None and not (vif_lower <= vif_approx <= vif_upper):
        logger.warning("VIF approximation %.6g outside [%.6g, %.6g]", vif_approx, vif_lower, vif_upper)
    return QualityReport(reports, vif_lower, vif_upper, vif_approx, notes)
