"""Data-driven orthonormal filter banks over square pixel windows.

One filter bank per source: a fixed DC kernel (normalized all-ones) plus
PCA kernels learned from the covariance of DC-removed patches. Applying a
bank over every sliding window of an image yields a per-pixel channel
stack; neighborhood construction then concatenates the stacks of all
positions in a surrounding window into one feature row per pixel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InsufficientDataError, InvalidDimensionError, ShapeMismatchError
from .imaging import as_image

NC_WINDOW = 5

# AC spectra whose total energy falls below this (relative to the DC energy,
# floored at 1) are treated as pure-DC data.
_DEGENERATE_EPS = 1e-12


@dataclass
class SaabKernels:
    """Orthonormal DC+PCA bank for one window size.

    kernels: (C, W*W), row 0 = DC; eigenvalues[0] is the DC second moment,
    eigenvalues[1:] the AC covariance spectrum in descending order.
    """

    window: int
    kernels: np.ndarray
    eigenvalues: np.ndarray
    degenerate: bool = False

    @property
    def channels(self) -> int:
        return self.kernels.shape[0]


def dc_kernel(window: int) -> np.ndarray:
    v = np.full(window * window, 1.0 / window)
    return v / np.linalg.norm(v)


def _dc_complement_basis(window: int) -> np.ndarray:
    """Deterministic orthonormal basis of the DC-orthogonal subspace."""
    d = window * window
    m = np.empty((d, d))
    m[:, 0] = dc_kernel(window)
    m[:, 1:] = np.eye(d)[:, : d - 1]
    q, _ = np.linalg.qr(m)
    return q[:, 1:]


def _fix_signs(rows: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each kernel is made positive (first index on ties)
    j = np.argmax(np.abs(rows), axis=1)
    s = np.sign(rows[np.arange(rows.shape[0]), j])
    s[s == 0] = 1.0
    return rows * s[:, None]


def fit_saab(patches, window: int) -> SaabKernels:
    """Fit the DC+PCA bank from row-major flattened W*W patches.

    All W^2-1 AC kernels are retained, sorted by descending eigenvalue. The
    eigenproblem is solved inside the DC-orthogonal subspace so the returned
    rows are orthonormal by construction; when the patches carry no AC
    energy the basis degenerates to an (arbitrary but deterministic)
    orthonormal completion of DC, flagged via ``degenerate``.
    """
    p = np.asarray(patches, dtype=np.float64)
    if p.ndim == 3:
        p = p.reshape(p.shape[0], -1)
    d = window * window
    if p.ndim != 2 or p.shape[1] != d:
        raise ShapeMismatchError(f"expected (n, {d}) patches for window {window}, got {p.shape}")
    n = p.shape[0]
    if n < d:
        raise InsufficientDataError(f"need at least {d} patches, got {n}")

    dc = dc_kernel(window)
    dc_coef = p @ dc
    ac = p - np.outer(dc_coef, dc)

    basis = _dc_complement_basis(window)
    z = ac @ basis
    z -= z.mean(axis=0)
    cov = z.T @ z / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    evals = np.maximum(evals[::-1], 0.0)
    evecs = evecs[:, ::-1]

    ac_kernels = _fix_signs((basis @ evecs).T)
    dc_energy = float(np.mean(dc_coef * dc_coef))
    eigenvalues = np.concatenate(([dc_energy], evals))
    degenerate = bool(evals.sum() <= _DEGENERATE_EPS * max(1.0, dc_energy))
    return SaabKernels(window, np.vstack([dc, ac_kernels]), eigenvalues, degenerate)


def _reflect_pad(img: np.ndarray, radius: int) -> np.ndarray:
    return np.pad(img, radius, mode="reflect")


def apply_saab(img, bank: SaabKernels) -> np.ndarray:
    """Per-pixel transform coefficients, stride 1, reflect padding.

    Returns a (C, h, w) stack; channel c at (y, x) is the inner product of
    kernel c with the W x W patch centered at (y, x).
    """
    img = as_image(img)
    w = bank.window
    if img.shape[0] < w or img.shape[1] < w:
        raise InvalidDimensionError(f"image {img.shape} smaller than window {w}x{w}")
    padded = _reflect_pad(img, w // 2)
    windows = sliding_window_view(padded, (w, w))
    h, ww = img.shape
    coeffs = windows.reshape(h * ww, w * w) @ bank.kernels.T
    return np.ascontiguousarray(coeffs.T.reshape(bank.channels, h, ww))


def extract_patches_at(img, rows, cols, window: int) -> np.ndarray:
    """Row-major flattened W*W patches centered at the given pixels (reflect pad)."""
    img = as_image(img)
    r = window // 2
    padded = _reflect_pad(img, r)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out = np.empty((rows.size, window * window))
    k = 0
    for dy in range(window):
        for dx in range(window):
            out[:, k] = padded[rows + dy, cols + dx]
            k += 1
    return out


@dataclass
class ColumnMeta:
    """Provenance of one feature column."""

    source: str
    kernel: int  # Saab kernel row; -1 marks the raw pixel channel
    offset: tuple[int, int] = (0, 0)  # (dy, dx) within the NC window
    projection: int = -1  # origin projection for generated columns

    @property
    def raw(self) -> bool:
        return self.kernel == -1


@dataclass
class FeatureStack:
    """One source's channel stack (C, h, w) plus the raw-channel marker."""

    source: str
    data: np.ndarray
    raw_channel: int = -1


@dataclass
class FeatureMatrix:
    """Per-pixel feature rows with per-column provenance."""

    values: np.ndarray
    col_meta: list[ColumnMeta] = field(default_factory=list)

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ShapeMismatchError(f"feature matrix must be 2-D, got {self.values.shape}")
        if self.col_meta and len(self.col_meta) != self.values.shape[1]:
            raise ShapeMismatchError(
                f"col_meta length {len(self.col_meta)} != column count {self.values.shape[1]}"
            )

    @property
    def shape(self):
        return self.values.shape


def neighborhood_meta(specs, window: int = NC_WINDOW) -> list[ColumnMeta]:
    """Column metadata for ``neighborhood_construct``.

    specs: iterable of (source_name, channel_count, raw_channel_index).
    Column order is (stack, neighborhood offset row-major, channel).
    """
    r = window // 2
    meta = []
    for source, channels, raw_channel in specs:
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                for c in range(channels):
                    kernel = -1 if c == raw_channel else c
                    meta.append(ColumnMeta(source=source, kernel=kernel, offset=(dy, dx)))
    return meta


def _as_stacks(stacks) -> list[FeatureStack]:
    out = []
    for i, s in enumerate(stacks):
        if isinstance(s, FeatureStack):
            out.append(s)
        else:
            arr = np.asarray(s, dtype=np.float64)
            out.append(FeatureStack(source=f"stack{i}", data=arr))
    if not out:
        raise ShapeMismatchError("need at least one feature stack")
    shape = out[0].data.shape[1:]
    for s in out:
        if s.data.ndim != 3:
            raise ShapeMismatchError(f"stack {s.source} must be (C, h, w), got {s.data.shape}")
        if s.data.shape[1:] != shape:
            raise ShapeMismatchError(
                f"stack {s.source} dims {s.data.shape[1:]} differ from {shape}"
            )
    return out


def neighborhood_features(
    stacks, rows, cols, window: int = NC_WINDOW, dtype=np.float64
) -> np.ndarray:
    """Gather NC feature rows for the given pixel positions.

    Same values, column order and padding as ``neighborhood_construct``,
    restricted to (rows, cols); this is the primitive both training-row
    sampling and chunked inference go through.
    """
    stacks = _as_stacks(stacks)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    n = rows.size
    r = window // 2
    parts = []
    for s in stacks:
        c = s.data.shape[0]
        padded = np.pad(s.data, ((0, 0), (r, r), (r, r)), mode="reflect")
        block = np.empty((n, window * window, c), dtype=dtype)
        k = 0
        for dy in range(window):
            for dx in range(window):
                block[:, k, :] = padded[:, rows + dy, cols + dx].T
                k += 1
        parts.append(block.reshape(n, window * window * c))
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)


def neighborhood_construct(stacks, window: int = NC_WINDOW, dtype=np.float64) -> FeatureMatrix:
    """NC feature matrix over every pixel, row-major.

    One row per pixel; columns concatenate the coefficient vectors of all
    window^2 neighborhood positions for every stack. Allocates
    h*w x (window^2 * sum(C)) — at large resolutions prefer
    ``neighborhood_features`` on pixel chunks.
    """
    stacks = _as_stacks(stacks)
    h, w = stacks[0].data.shape[1:]
    ys, xs = np.divmod(np.arange(h * w, dtype=np.intp), w)
    values = neighborhood_features(stacks, ys, xs, window=window, dtype=dtype)
    meta = neighborhood_meta(
        [(s.source, s.data.shape[0], s.raw_channel) for s in stacks], window=window
    )
    return FeatureMatrix(values=values, col_meta=meta)
