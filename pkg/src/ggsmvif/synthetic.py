"""Synthetic GGSM fields and images for end-to-end checks and simulation."""
from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .mggd import MggdParams, sample


def smooth_mixing_field(grid_shape, log_sigma: float = 0.3, correlation: float = 8.0, seed=None) -> np.ndarray:
    """Positive, spatially smooth mixing field with ``E[z^2]`` close to 1.

    ``log z`` is Gaussian-filtered white noise rescaled to standard deviation
    ``log_sigma``; ``correlation`` is the filter width in blocks.
    """
    rng = np.random.default_rng(seed)
    noise = gaussian_filter(rng.standard_normal(grid_shape), correlation, mode="wrap")
    sd = noise.std()
    log_z = noise / sd * log_sigma if sd > 0 else np.zeros(grid_shape)
    return np.exp(log_z - log_sigma**2)


def ggsm_blocks(params: MggdParams, z, seed=None) -> np.ndarray:
    """Rows ``z_i * U_i`` with ``U_i`` iid MGGD; ``z`` is flattened in raster order."""
    z = np.asarray(z, dtype=float).ravel()
    return z[:, None] * sample(params, z.size, seed)


def tile_blocks(blocks: np.ndarray, grid_shape, block_side: int) -> np.ndarray:
    """Inverse of non-overlapping block vectorization (row-major inside blocks)."""
    rows, cols = grid_shape
    arr = np.asarray(blocks).reshape(rows, cols, block_side, block_side)
    return arr.transpose(0, 2, 1, 3).reshape(rows * block_side, cols * block_side)


def block_scatter(block_side: int, correlation: float = 0.6) -> np.ndarray:
    """Separable exponential-correlation scatter for ``block_side x block_side`` patches."""
    idx = np.arange(block_side)
    one_d = correlation ** np.abs(idx[:, None] - idx[None, :])
    return np.kron(one_d, one_d)


def render_ggsm_image(
    size: int,
    shape: float,
    block_side: int = 3,
    contrast: float = 0.1,
    correlation: float = 0.6,
    log_sigma: float = 0.3,
    seed=None,
) -> np.ndarray:
    """Square image built from GGSM blocks around mid-gray (not clipped).

    ``size`` is rounded down to a multiple of ``block_side``.
    """
    ss = np.random.SeedSequence(seed)
    field_seed, block_seed = ss.spawn(2)
    n = size // block_side
    params = MggdParams(shape, contrast**2 * block_scatter(block_side, correlation))
    z = smooth_mixing_field((n, n), log_sigma, seed=field_seed)
    blocks = ggsm_blocks(params, z, seed=block_seed)
    return 0.5 + tile_blocks(blocks, (n, n), block_side)


def distort(image: np.ndarray, gain: float, noise_sd: float, seed=None) -> np.ndarray:
    """``gain * (image - mean) + mean + N(0, noise_sd^2)``, i.e. attenuation plus white noise."""
    rng = np.random.default_rng(seed)
    mean = image.mean()
    return gain * (image - mean) + mean + noise_sd * rng.standard_normal(image.shape)
