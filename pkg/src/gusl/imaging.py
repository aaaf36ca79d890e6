"""Grayscale image primitives: mean-pool pyramids, bilinear upscaling,
residual composition, and PSNR/SSIM quality metrics.

An image is a plain 2-D float64 array. Intensities are normalized to [0, 1]
at ingestion and ``peak`` defaults to 1 everywhere; residual and difference
maps reuse the same carrier and may leave that range until clipped.

All functions are pure and allocate fresh outputs, so they are safe to call
concurrently.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    IdenticalImagesError,
    InvalidConfigError,
    InvalidDimensionError,
    InvalidInputError,
    ShapeMismatchError,
)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def as_image(data) -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting non-finite values."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise InvalidDimensionError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise InvalidInputError("image contains non-finite values")
    return img


def _require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")


def downsample_mean(img) -> np.ndarray:
    """Halve both dimensions by averaging 2x2 blocks.

    Odd trailing rows/columns form partial blocks that average only the
    pixels present, so output dims are ceil(h/2) x ceil(w/2).
    """
    img = as_image(img)
    h, w = img.shape
    if h < 2 or w < 2:
        raise InvalidDimensionError(f"need at least 2x2 pixels to downsample, got {h}x{w}")
    rsum = np.add.reduceat(img, np.arange(0, h, 2), axis=0)
    bsum = np.add.reduceat(rsum, np.arange(0, w, 2), axis=1)
    ch = np.full(rsum.shape[0], 2.0)
    cw = np.full(bsum.shape[1], 2.0)
    if h % 2:
        ch[-1] = 1.0
    if w % 2:
        cw[-1] = 1.0
    return bsum / np.outer(ch, cw)


def _axis_samples(n_src: int, n_dst: int):
    # half-pixel-centered source coordinates, clamped at the borders
    pos = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    pos = np.clip(pos, 0.0, n_src - 1.0)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, pos - lo


def upscale(img, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear upscaling with half-pixel-centered sampling.

    Written as lerp ``a + (b - a) * t`` so constant inputs reproduce exactly
    and outputs stay within the input value range.
    """
    img = as_image(img)
    h, w = img.shape
    if target_h < h or target_w < w:
        raise InvalidDimensionError(
            f"target {target_h}x{target_w} is smaller than source {h}x{w}"
        )
    ylo, yhi, fy = _axis_samples(h, target_h)
    xlo, xhi, fx = _axis_samples(w, target_w)
    top = img[ylo][:, xlo]
    top = top + (img[ylo][:, xhi] - top) * fx
    bot = img[yhi][:, xlo]
    bot = bot + (img[yhi][:, xhi] - bot) * fx
    return top + (bot - top) * fy[:, None]


def pyramid_level_dims(h: int, w: int, level_count: int) -> list[tuple[int, int]]:
    """Dims per level, index 0 = finest; level i is ceil(h/2^i) x ceil(w/2^i)."""
    return [(-(-h // 2**i), -(-w // 2**i)) for i in range(level_count)]


def build_pyramid(img, level_count: int) -> list[np.ndarray]:
    """Repeated 2x mean-pooling; levels[0] is the source image itself."""
    img = as_image(img)
    if level_count < 2:
        raise InvalidConfigError(f"level_count must be >= 2, got {level_count}")
    dims = pyramid_level_dims(img.shape[0], img.shape[1], level_count)
    if min(dims[-1]) < 8:
        raise InvalidConfigError(
            f"coarsest level {dims[-1]} would fall below 8x8 for input {img.shape}"
        )
    levels = [img]
    for _ in range(level_count - 1):
        levels.append(downsample_mean(levels[-1]))
    return levels


def compose_prediction(p_prev, residual, clip: bool = False) -> np.ndarray:
    """Elementwise p_prev + residual, optionally clamped to [0, 1]."""
    p_prev = as_image(p_prev)
    residual = as_image(residual)
    _require_same_shape(p_prev, residual)
    out = p_prev + residual
    if clip:
        np.clip(out, 0.0, 1.0, out=out)
    return out


def mse(a, b) -> float:
    a = as_image(a)
    b = as_image(b)
    _require_same_shape(a, b)
    d = a - b
    return float(np.mean(d * d))


def psnr(a, b, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE); raises on identical images (zero MSE)."""
    if peak <= 0:
        raise InvalidInputError(f"peak must be positive, got {peak}")
    err = mse(a, b)
    if err == 0.0:
        raise IdenticalImagesError("images are identical; PSNR is unbounded")
    return 10.0 * math.log10(peak * peak / err)


def gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def separable_filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Valid-mode 2-D filtering with a separable 1-D kernel."""
    t = sliding_window_view(img, kernel.size, axis=0) @ kernel
    return sliding_window_view(t, kernel.size, axis=1) @ kernel


def ssim(a, b, peak: float = 1.0) -> float:
    """Mean structural similarity over an 11x11 Gaussian window (sigma 1.5).

    Local weighted statistics, stabilizers C1=(0.01*peak)^2 and
    C2=(0.03*peak)^2, averaged over the valid (fully-covered) region.
    """
    a = as_image(a)
    b = as_image(b)
    _require_same_shape(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise InvalidDimensionError(
            f"image {a.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    k = gaussian_kernel1d(SSIM_WINDOW, SSIM_SIGMA)
    mu1 = separable_filter_valid(a, k)
    mu2 = separable_filter_valid(b, k)
    s11 = separable_filter_valid(a * a, k) - mu1 * mu1
    s22 = separable_filter_valid(b * b, k) - mu2 * mu2
    s12 = separable_filter_valid(a * b, k) - mu1 * mu2
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))
