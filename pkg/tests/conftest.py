import numpy as np
import pytest

from gusl.degrade import DegradeParams, synth_degrade


def make_phantom(rng: np.random.Generator, size: int = 128) -> np.ndarray:
    """Random piecewise-constant phantom: ellipses and rectangles of varying
    intensity over a dim background."""
    img = np.full((size, size), 0.1)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(int(rng.integers(3, 9))):
        intensity = rng.uniform(0.2, 0.95)
        if rng.random() < 0.5:
            cy, cx = rng.uniform(0.15 * size, 0.85 * size, size=2)
            a = rng.uniform(0.06 * size, 0.3 * size)
            b = rng.uniform(0.06 * size, 0.3 * size)
            mask = ((yy - cy) / a) ** 2 + ((xx - cx) / b) ** 2 <= 1.0
        else:
            y0, x0 = rng.integers(0, size - 8, size=2)
            y1 = int(y0 + rng.integers(6, max(7, size // 3)))
            x1 = int(x0 + rng.integers(6, max(7, size // 3)))
            mask = np.zeros((size, size), dtype=bool)
            mask[y0 : min(y1, size), x0 : min(x1, size)] = True
        img[mask] = intensity
    return img


def make_corpus(seed: int, count: int, size: int, blur: float, noise: float):
    """(degraded, clean) pairs with per-image degradation seeds."""
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(count):
        clean = make_phantom(rng, size=size)
        params = DegradeParams(blur_sigma=blur, noise_sigma=noise, seed=seed * 1000 + i)
        pairs.append((synth_degrade(clean, params), clean))
    return pairs


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
