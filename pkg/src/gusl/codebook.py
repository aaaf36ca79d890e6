"""Coarsest-level seed: a K-means codebook over non-overlapping 4x4 patches
and nearest-centroid quantization.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidModelError
from .imaging import as_image

PATCH = 4


@dataclass
class Codebook:
    centroids: np.ndarray  # (k, patch*patch), entries in [0, 1]
    patch: int = PATCH

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _pairwise_sq_dist(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # |p - c|^2 = |p|^2 - 2 p.c + |c|^2; the |p|^2 term is constant per row
    # and omitted (argmin/relative comparisons only need the rest)
    d = points @ centroids.T
    d *= -2.0
    d += (centroids * centroids).sum(axis=1)[None, :]
    d += (points * points).sum(axis=1)[:, None]
    return np.maximum(d, 0.0)


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Standard k-means++ seeding; deterministic for a given generator state."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = _pairwise_sq_dist(points, centroids[:1])[:, 0]
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with chosen centroids
            centroids[i] = points[int(rng.integers(n))]
        else:
            idx = int(rng.choice(n, p=d2 / total))
            centroids[i] = points[idx]
        d2 = np.minimum(d2, _pairwise_sq_dist(points, centroids[i : i + 1])[:, 0])
    return centroids


def lloyd(
    points: np.ndarray, centroids: np.ndarray, max_iters: int = 100
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations until the assignment reaches a fixpoint.

    Empty clusters are re-seeded to the point currently farthest from its
    assigned centroid (lowest index on ties). Returns the final centroids,
    assignment, and the per-iteration inertia history.
    """
    centroids = np.array(centroids, dtype=np.float64)
    k = centroids.shape[0]
    prev = None
    history: list[float] = []
    assign = np.zeros(points.shape[0], dtype=np.int64)
    for _ in range(max_iters):
        d2 = _pairwise_sq_dist(points, centroids)
        assign = d2.argmin(axis=1)
        point_d2 = d2[np.arange(points.shape[0]), assign]
        history.append(float(point_d2.sum()))
        counts = np.bincount(assign, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(point_d2))
            assign[far] = j
            point_d2[far] = 0.0
            counts = np.bincount(assign, minlength=k)
        if prev is not None and np.array_equal(assign, prev):
            break
        prev = assign.copy()
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, points)
        centroids = sums / np.bincount(assign, minlength=k)[:, None]
    return centroids, assign, history


def fit_codebook(patches, k: int, seed: int = 0, max_iters: int = 100) -> Codebook:
    """k-means++ initialization followed by Lloyd to a fixpoint.

    If fewer distinct patches than k exist, k is reduced to that count with
    a warning.
    """
    points = np.asarray(patches, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise InvalidInputError(f"expected (n, d) patches, got shape {points.shape}")
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    distinct = np.unique(points, axis=0).shape[0]
    if distinct < k:
        warnings.warn(
            f"only {distinct} distinct patches for k={k}; reducing k to {distinct}",
            stacklevel=2,
        )
        k = distinct
    rng = np.random.default_rng(seed)
    init = kmeans_plus_plus(points, k, rng)
    centroids, _, _ = lloyd(points, init, max_iters=max_iters)
    return Codebook(centroids=centroids, patch=int(round(points.shape[1] ** 0.5)))


def image_patches(img, patch: int = PATCH) -> tuple[np.ndarray, tuple[int, int]]:
    """Non-overlapping patch rows after reflect-padding to a multiple of
    ``patch``; also returns the padded dims."""
    img = as_image(img)
    h, w = img.shape
    ph = (-h) % patch
    pw = (-w) % patch
    if ph or pw:
        img = np.pad(img, ((0, ph), (0, pw)), mode="reflect")
    hh, ww = img.shape
    blocks = img.reshape(hh // patch, patch, ww // patch, patch)
    rows = blocks.transpose(0, 2, 1, 3).reshape(-1, patch * patch)
    return rows, (hh, ww)


def quantize_predict(img, cb: Codebook) -> np.ndarray:
    """Replace each non-overlapping patch with its nearest centroid
    (Euclidean; lowest index on ties); output dims equal input dims."""
    if cb.centroids.size == 0:
        raise InvalidModelError("codebook has no centroids")
    img = as_image(img)
    h, w = img.shape
    p = cb.patch
    rows, (hh, ww) = image_patches(img, patch=p)
    nearest = _pairwise_sq_dist(rows, cb.centroids).argmin(axis=1)
    quant = cb.centroids[nearest].reshape(hh // p, ww // p, p, p)
    out = quant.transpose(0, 2, 1, 3).reshape(hh, ww)
    return np.ascontiguousarray(out[:h, :w])
