"""From an image pair to per-block model parameters and a quality report.

Stages: luma image -> Laplacian pyramid (binomial 5-tap kernel) -> 3x3 block
vectors per bandpass level -> GSM fit of the reference (covariance of ``U``
and per-block ``z^2``) -> local gain/noise fit of the distorted subband ->
information sums.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Hashable, NamedTuple, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image
from scipy.ndimage import convolve1d

from .errors import DegenerateInputError, DimensionError
from .infotheory import ChannelParams, QualityReport, vif_aggregate
from .linalg import cholesky_spd, mahalanobis_sq
from .mggd import covariance_to_scatter, shape_from_kurtosis

logger = logging.getLogger(__name__)

BINOMIAL_5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
LUMA_601 = np.array([0.299, 0.587, 0.114])
MAX_CONDITION = 1e12


def load_image(path) -> np.ndarray:
    """Read PNG/PGM/PPM (8 or 16 bit, gray or RGB) as float luma in [0, 1]."""
    path = Path(path)
    with Image.open(path) as img:
        mode = img.mode
        if mode in ("P", "PA", "CMYK", "YCbCr", "LAB", "HSV"):
            img = img.convert("RGB")
            mode = "RGB"
        arr = np.asarray(img)
    if mode.startswith("I;16") or mode == "I":
        scale = 65535.0
    elif mode == "F":
        scale = 1.0
    elif arr.dtype == np.uint16:
        scale = 65535.0
    else:
        scale = 255.0
    arr = arr.astype(float) / scale
    if arr.ndim == 3:
        if arr.shape[2] in (2,):  # gray + alpha
            arr = arr[..., 0]
        else:
            arr = arr[..., :3] @ LUMA_601
    return np.clip(arr, 0.0, 1.0)


def save_image(path, image: np.ndarray, bits: int = 8) -> None:
    """Write a [0, 1] float image as 8- or 16-bit grayscale."""
    img = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    if bits == 16:
        Image.fromarray(np.round(img * 65535).astype(np.uint16)).save(path)
    else:
        Image.fromarray(np.round(img * 255).astype(np.uint8)).save(path)


def _blur(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # Whole-sample symmetric extension: mirroring about an edge sample keeps the
    # parity of the zero-interleaved grid in pyr_expand, so constants are
    # reproduced at the borders too.
    out = convolve1d(img, kernel, axis=0, mode="mirror")
    return convolve1d(out, kernel, axis=1, mode="mirror")


def pyr_reduce(img: np.ndarray) -> np.ndarray:
    return _blur(img, BINOMIAL_5)[::2, ::2]


def pyr_expand(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    up = np.zeros(shape)
    up[::2, ::2] = img
    return _blur(up, 2.0 * BINOMIAL_5)


@dataclass
class LaplacianPyramid:
    """Bandpass levels, finest first, plus the lowpass residual."""

    bands: list[np.ndarray]
    lowpass: np.ndarray

    def collapse(self) -> np.ndarray:
        img = self.lowpass
        for band in reversed(self.bands):
            img = band + pyr_expand(img, band.shape)
        return img


def decompose(image, levels: int = 4, block_side: int = 3) -> LaplacianPyramid:
    """Laplacian pyramid with ``levels`` bandpass subbands.

    Raises
    ------
    DimensionError
        If the image is not 2-D or smaller than ``2**levels * block_side``.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise DimensionError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if levels < 1:
        raise ValueError("levels must be at least 1")
    need = 2**levels * block_side
    if min(img.shape) < need:
        raise DimensionError(f"image {img.shape} too small for {levels} levels of {block_side}x{block_side} blocks")
    bands = []
    current = img
    for _ in range(levels):
        low = pyr_reduce(current)
        bands.append(current - pyr_expand(low, current.shape))
        current = low
    return LaplacianPyramid(bands, current)


@dataclass(frozen=True, eq=False)
class SubbandField:
    """Block vectors of one subband in raster order, ``blocks`` of shape ``(N, M)``."""

    subband_id: tuple[int, int]
    blocks: np.ndarray
    grid_shape: tuple[int, int]
    block_side: int
    stride: int

    @property
    def dim(self) -> int:
        return self.blocks.shape[1]

    @property
    def n_blocks(self) -> int:
        return self.blocks.shape[0]


def vectorize(band, block_side: int = 3, stride: Optional[int] = None, subband_id=(0, 0)) -> SubbandField:
    """Cut a subband into ``block_side x block_side`` vectors (row-major inside each block).

    The subband mean over the covered area is removed first.
    """
    if block_side < 1:
        raise ValueError("block_side must be at least 1")
    stride = block_side if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be at least 1")
    arr = np.asarray(band, dtype=float)
    rows = (arr.shape[0] - block_side) // stride + 1
    cols = (arr.shape[1] - block_side) // stride + 1
    if rows < 1 or cols < 1:
        raise DimensionError(f"subband {arr.shape} smaller than one block")
    covered = arr[: (rows - 1) * stride + block_side, : (cols - 1) * stride + block_side]
    covered = covered - covered.mean()
    windows = sliding_window_view(covered, (block_side, block_side))[::stride, ::stride]
    blocks = windows.reshape(rows * cols, block_side * block_side).copy()
    return SubbandField(tuple(subband_id), blocks, (rows, cols), block_side, stride)


@dataclass(frozen=True, eq=False)
class SubbandModel:
    """GSM/GGSM fit of one reference subband.

    ``covariance_estimate`` is ``Cov(U)`` under the ``E[z^2] = 1`` convention;
    ``scatter_estimate`` is the MGGD scatter with that covariance at ``alpha``.
    """

    subband_id: Hashable
    covariance_estimate: np.ndarray
    scatter_estimate: np.ndarray
    z_sq: np.ndarray
    alpha: float = 1.0
    alpha_estimated: bool = False

    @property
    def dim(self) -> int:
        return self.covariance_estimate.shape[0]

    def with_alpha(self, alpha: float, estimated: bool = False) -> "SubbandModel":
        return replace(
            self,
            alpha=float(alpha),
            scatter_estimate=covariance_to_scatter(self.covariance_estimate, alpha),
            alpha_estimated=estimated,
        )


def fit_gsm(subband: SubbandField) -> SubbandModel:
    """Second-moment estimate of ``Cov(U)`` and per-block ML mixing ``z^2``.

    Raises
    ------
    DegenerateInputError
        If ``N <= M`` or the subband carries no energy.
    """
    blocks = subband.blocks
    n, m = blocks.shape
    if n <= m:
        raise DegenerateInputError(f"need more blocks than dimensions, got N={n}, M={m}")
    cov = blocks.T @ blocks / n
    cov = 0.5 * (cov + cov.T)
    trace = float(np.trace(cov))
    if not trace > 0:
        raise DegenerateInputError(f"subband {subband.subband_id} has zero energy")
    eigs = np.linalg.eigvalsh(cov)
    if eigs[0] <= 0 or eigs[-1] / eigs[0] > MAX_CONDITION:
        cov = cov + 1e-10 * trace / m * np.eye(m)
    chol = cholesky_spd(cov, "subband covariance")
    z_sq = mahalanobis_sq(chol, blocks) / m
    return SubbandModel(subband.subband_id, cov, cov.copy(), z_sq)


class AlphaEstimate(NamedTuple):
    alpha: float
    kurtosis: float
    n_pairs: int
    clamped: bool
    experimental: bool = True


def estimate_alpha(subband: SubbandField, model: SubbandModel) -> AlphaEstimate:
    """Experimental per-subband shape estimate.

    Dividing a block by its own ML scale puts every normalized vector on the
    same ellipsoid, which erases the shape. Instead the mixing variable is
    assumed locally constant: for adjacent blocks ``i, j`` sharing ``z``,
    ``E[t_i^2] / E[t_i t_j] = E[u^2] / E[u]^2`` with ``t = C^T Cov^{-1} C``,
    and that ratio equals ``(kurtosis + M(M+2)) / M^2`` independently of the
    law of ``z``.

    Raises
    ------
    DegenerateInputError
        With fewer than ``10 * M`` usable blocks.
    """
    m = model.dim
    t = np.asarray(model.z_sq, dtype=float) * m
    rows, cols = subband.grid_shape
    grid = t.reshape(rows, cols)
    positive = grid[grid > 0]
    floor = 1e-8 * (np.median(positive) if positive.size else 0.0)
    usable = grid > floor
    if np.count_nonzero(usable) < 10 * m:
        raise DegenerateInputError("too few usable blocks to estimate the shape")
    products = []
    for a, b, ok_a, ok_b in (
        (grid[:, :-1], grid[:, 1:], usable[:, :-1], usable[:, 1:]),
        (grid[:-1, :], grid[1:, :], usable[:-1, :], usable[1:, :]),
    ):
        keep = ok_a & ok_b
        products.append((a * b)[keep])
    pairs = np.concatenate(products)
    if pairs.size == 0:
        raise DegenerateInputError("no adjacent block pairs")
    ratio = np.mean(grid[usable] ** 2) / np.mean(pairs)
    kurt = m * m * ratio - m * (m + 2)
    kurt = max(kurt, -m * (m + 2) + 1e-9)
    est = shape_from_kurtosis(m, kurt)
    return AlphaEstimate(est.shape, float(kurt), int(pairs.size), est.clamped)


def _window_sums(values: np.ndarray, grid_shape, tile: int) -> np.ndarray:
    """Sum per-block values over ``tile x tile`` groups of blocks; returns per-block totals."""
    rows, cols = grid_shape
    grid = values.reshape(rows, cols)
    tr = -(-rows // tile)
    tc = -(-cols // tile)
    padded = np.zeros((tr * tile, tc * tile))
    padded[:rows, :cols] = grid
    sums = padded.reshape(tr, tile, tc, tile).sum(axis=(1, 3))
    return np.repeat(np.repeat(sums, tile, axis=0), tile, axis=1)[:rows, :cols].ravel()


# Channel-estimate floor, relative to the reference subband's coefficient energy.
RELATIVE_FLOOR = 1e-10


def fit_channel(
    ref_subband: SubbandField,
    dist_subband: SubbandField,
    window: int = 16,
    neural_noise_var: float = 1.0,
) -> ChannelParams:
    """Local gain and additive-noise variance of ``D = g C + V``.

    Blocks are grouped into square tiles of ``window`` blocks (``window`` must
    be a perfect square); every block gets its tile's estimates.

    The zero-variance cutoff and the noise floor are ``1e-10`` times the mean
    squared reference coefficient, so scores do not depend on image contrast.
    """
    if ref_subband.blocks.shape != dist_subband.blocks.shape or ref_subband.grid_shape != dist_subband.grid_shape:
        raise DimensionError("reference and distorted subbands are not aligned")
    tile = math.isqrt(window)
    if window < 1 or tile * tile != window:
        raise ValueError(f"window must be a positive perfect square, got {window}")
    c = ref_subband.blocks
    d = dist_subband.blocks
    grid = ref_subband.grid_shape
    count = _window_sums(np.full(c.shape[0], c.shape[1], dtype=float), grid, tile)
    mean_c = _window_sums(c.sum(axis=1), grid, tile) / count
    mean_d = _window_sums(d.sum(axis=1), grid, tile) / count
    var_c = _window_sums((c * c).sum(axis=1), grid, tile) / count - mean_c**2
    var_d = _window_sums((d * d).sum(axis=1), grid, tile) / count - mean_d**2
    cov_cd = _window_sums((c * d).sum(axis=1), grid, tile) / count - mean_c * mean_d
    var_c = np.maximum(var_c, 0.0)
    var_d = np.maximum(var_d, 0.0)
    energy = float(np.mean(c * c))
    floor = RELATIVE_FLOOR * (energy if energy > 0 else 1.0)
    flat = var_c < floor
    gain = np.where(flat, 0.0, cov_cd / np.where(flat, 1.0, var_c))
    gain = np.maximum(gain, 0.0)
    noise = np.maximum(var_d - gain * cov_cd, floor)
    return ChannelParams(gain, noise, neural_noise_var)


@dataclass(frozen=True)
class ScoreOptions:
    levels: int = 4
    block_side: int = 3
    alpha: float = 1.0
    estimate_alpha: bool = False
    sigma_n_mode: str = "rel"
    sigma_n_value: float = 0.1
    window: int = 16

    def __post_init__(self):
        if self.levels < 1 or self.block_side < 1 or self.window < 1:
            raise ValueError("levels, block_side and window must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.sigma_n_mode not in ("rel", "abs"):
            raise ValueError(f"sigma_n_mode must be 'rel' or 'abs', got {self.sigma_n_mode!r}")
        if not self.sigma_n_value > 0:
            raise ValueError("sigma_n value must be positive")

    def neural_noise_var(self, model: SubbandModel) -> float:
        if self.sigma_n_mode == "abs":
            return self.sigma_n_value
        return self.sigma_n_value * float(np.trace(model.covariance_estimate)) / model.dim


@dataclass
class ScoreResult:
    report: QualityReport
    models: list[SubbandModel] = field(default_factory=list)
    alpha_estimates: dict = field(default_factory=dict)


def fit_subbands(reference, distorted, options: ScoreOptions = ScoreOptions()):
    """Decompose both images and fit model plus channel per subband.

    Returns ``(pairs, alpha_estimates, skipped)`` where ``pairs`` is a list of
    ``(SubbandModel, ChannelParams)``.
    """
    ref = np.asarray(reference, dtype=float)
    dist = np.asarray(distorted, dtype=float)
    if ref.shape != dist.shape:
        raise DimensionError(f"image sizes differ: {ref.shape} vs {dist.shape}")
    ref_pyr = decompose(ref, options.levels, options.block_side)
    dist_pyr = decompose(dist, options.levels, options.block_side)
    pairs = []
    alpha_estimates = {}
    skipped = []
    for level, (rb, db) in enumerate(zip(ref_pyr.bands, dist_pyr.bands)):
        sid = (level, 0)
        ref_field = vectorize(rb, options.block_side, subband_id=sid)
        dist_field = vectorize(db, options.block_side, subband_id=sid)
        try:
            model = fit_gsm(ref_field)
        except DegenerateInputError as exc:
            logger.info("skipping subband %s: %s", sid, exc)
            skipped.append(sid)
            continue
        if options.estimate_alpha:
            est = estimate_alpha(ref_field, model)
            alpha_estimates[sid] = est
            model = model.with_alpha(est.alpha, estimated=True)
        elif options.alpha != 1.0:
            model = model.with_alpha(options.alpha)
        channel = fit_channel(ref_field, dist_field, options.window, options.neural_noise_var(model))
        pairs.append((model, channel))
    if not pairs:
        raise DegenerateInputError("reference image has no bandpass energy")
    return pairs, alpha_estimates, skipped


def score_images(reference, distorted, options: ScoreOptions = ScoreOptions()) -> ScoreResult:
    """Full-reference scoring of a pair of [0, 1] grayscale images."""
    pairs, alpha_estimates, skipped = fit_subbands(reference, distorted, options)
    report = vif_aggregate(pairs)
    for sid in skipped:
        report.notes.append(f"subband {sid} skipped: no reference energy")
    for sid, est in alpha_estimates.items():
        if est.clamped:
            report.notes.append(f"subband {sid}: shape estimate clamped to {est.alpha}")
    return ScoreResult(report, [m for m, _ in pairs], alpha_estimates)
