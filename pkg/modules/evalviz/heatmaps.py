"""
Attention Heatmaps

Each step's weights are laid out on the g x g grid, upsampled by
nearest-neighbour repetition, smoothed with a separable truncated Gaussian
(edge-clamped) and divided by their maximum. An all-zero map stays zero.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from PIL import Image
from scipy.ndimage import convolve1d

from modules.attention import AttentionTrace

from utils.config_loader import get_config


class HeatmapShapeError(ValueError):
    """The number of locations is not a perfect square."""


@dataclass
class Heatmap:
    intensities: np.ndarray  # [height, width] in [0, 1]
    word: str
    timestep: int

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]


def gaussian_kernel(sigma: float, truncate: float = 3.0) -> np.ndarray:
    """Normalized 1-D Gaussian of radius ceil(truncate * sigma)."""
    if sigma <= 0:
        return np.ones(1)
    radius = int(math.ceil(truncate * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def grid_side_of(L: int) -> int:
    side = math.isqrt(L)
    if side * side != L:
        raise HeatmapShapeError(f"{L} locations do not form a square grid")
    return side


def smooth_attention(
    alpha: np.ndarray,
    grid_side: Optional[int] = None,
    upscale: int = 16,
    sigma: float = 8.0,
    truncate: float = 3.0
) -> np.ndarray:
    """Upsampled and filtered weights before max normalization."""
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    side = grid_side or grid_side_of(alpha.size)
    if side * side != alpha.size:
        raise HeatmapShapeError(f"{alpha.size} weights do not fill a {side}x{side} grid")
    upsampled = np.kron(alpha.reshape(side, side), np.ones((upscale, upscale)))
    kernel = gaussian_kernel(sigma, truncate)
    smoothed = convolve1d(upsampled, kernel, axis=0, mode="nearest")
    return convolve1d(smoothed, kernel, axis=1, mode="nearest")


def normalize_map(values: np.ndarray) -> np.ndarray:
    peak = float(values.max()) if values.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(values)
    return np.clip(values / peak, 0.0, 1.0)


def render_attention(
    trace: AttentionTrace,
    grid_side: Optional[int] = None,
    sigma: Optional[float] = None,
    words: Optional[Sequence[str]] = None,
    upscale: Optional[int] = None,
    truncate: Optional[float] = None
) -> List[Heatmap]:
    """
    One heatmap per timestep of the trace, each normalized by its own maximum.

    Args:
        trace: Attention trace with L = g^2 weights per step
        grid_side: g; inferred from L when omitted
        sigma: Gaussian standard deviation in pixels (default 8)
        words: Word emitted at each step, used to label the maps
        upscale: Pixels per cell (default 16)
        truncate: Kernel radius in standard deviations (default 3)

    Returns:
        List of Heatmap of size (g * upscale) x (g * upscale)

    Raises:
        HeatmapShapeError: L is not a perfect square or does not match grid_side
    """
    sigma = get_config("visualization.sigma", 8.0) if sigma is None else sigma
    upscale = get_config("visualization.upscale", 16) if upscale is None else upscale
    truncate = get_config("visualization.truncate", 3.0) if truncate is None else truncate
    heatmaps = []
    for t, weights in enumerate(trace.per_step):
        raw = smooth_attention(weights.alpha, grid_side, upscale, sigma, truncate)
        word = words[t] if words is not None and t < len(words) else f"t{t}"
        heatmaps.append(Heatmap(intensities=normalize_map(raw), word=word, timestep=t))
    return heatmaps


def blend_heatmap(heatmap: Heatmap, base_image: np.ndarray, alpha: float = 0.6) -> np.ndarray:
    """
    Alpha-blend a heatmap over an 8-bit grayscale raster.

    The raster is resized to the heatmap size when they differ.

    Returns:
        uint8 array of the heatmap's size
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"Blend alpha must be in [0, 1], got {alpha}")
    base = np.asarray(base_image)
    if base.shape != heatmap.intensities.shape:
        resized = Image.fromarray(base.astype(np.uint8)).resize((heatmap.width, heatmap.height), Image.Resampling.NEAREST)
        base = np.asarray(resized)
    mixed = alpha * heatmap.intensities * 255.0 + (1.0 - alpha) * base.astype(np.float64)
    return np.clip(np.rint(mixed), 0, 255).astype(np.uint8)
