"""Synthetic degradation: Gaussian blur plus additive Gaussian noise.

Desk-scale surrogate for low-dose acquisition. It does not model CT physics
(no sinogram-domain photon statistics or streaks); it exists so the pipeline
can be trained and benchmarked on procedurally generated corpora.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError
from .imaging import as_image, gaussian_kernel1d, separable_filter_valid


@dataclass(frozen=True)
class DegradeParams:
    blur_sigma: float = 0.0  # pixels
    noise_sigma: float = 0.0  # intensity units in [0, 1]
    seed: int = 0

    def validate(self) -> None:
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise InvalidConfigError("sigmas must be >= 0")


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur truncated at 3 sigma, reflect padding."""
    img = as_image(img)
    if sigma == 0.0:
        return img.copy()
    radius = max(1, int(math.ceil(3.0 * sigma)))
    kernel = gaussian_kernel1d(2 * radius + 1, sigma)
    padded = np.pad(img, radius, mode="reflect")
    return separable_filter_valid(padded, kernel)


def synth_degrade(clean, params: DegradeParams) -> np.ndarray:
    """Blur, add seeded Gaussian noise, clamp to [0, 1]."""
    params.validate()
    out = gaussian_blur(clean, params.blur_sigma)
    if params.noise_sigma > 0.0:
        rng = np.random.default_rng(params.seed)
        out = out + rng.normal(0.0, params.noise_sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0)
