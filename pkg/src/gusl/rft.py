"""Relevant Feature Test: per-dimension relevance scores for a regression
target, elbow-point cutoffs, and joint train/validation selection.

The score of a feature column is the best weighted two-sided MSE over a set
of binned threshold candidates: the column range is split into B equal bins,
each bin center is tried as a threshold, and the loss of a threshold is the
size-weighted MSE of the target around each side's own mean. Lower is more
discriminative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientDataError,
    InvalidConfigError,
    InvalidInputError,
    ShapeMismatchError,
)

DEFAULT_BINS = 16

_CHUNK = 256


@dataclass
class RftReport:
    losses: np.ndarray  # per-column loss, target-MSE units
    order: np.ndarray  # column indices sorted ascending by loss (stable)
    elbow: int  # selected count from the elbow rule


@dataclass
class JointSelection:
    rank_train: np.ndarray
    rank_val: np.ndarray
    joint_score: np.ndarray  # max of the two ranks per column
    threshold: int  # elbow count K over the sorted joint scores
    selected: np.ndarray  # column indices with joint_score < K
    losses_train: np.ndarray
    losses_val: np.ndarray


def _as_matrix(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x))


def rft_losses(X, y, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Per-column RFT loss. Columns are scored independently; the scan is
    chunked so the per-column sorted views stay cache-friendly."""
    xm = _as_matrix(X)
    if xm.ndim != 2:
        raise InvalidInputError(f"expected a 2-D feature matrix, got shape {xm.shape}")
    if xm.shape[1] == 0 or xm.shape[0] == 0:
        raise InvalidInputError("empty feature matrix")
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != xm.shape[0]:
        raise ShapeMismatchError(f"{xm.shape[0]} feature rows but {y.size} targets")
    if bins < 2:
        raise InvalidConfigError(f"bins must be >= 2, got {bins}")
    n = y.size
    if n < 2:
        raise InvalidInputError("need at least 2 rows")

    yc = y - y.mean()  # translation-invariant; stabilizes the prefix sums
    losses = np.empty(xm.shape[1])
    offsets = np.arange(bins, dtype=np.float64) + 0.5
    for start in range(0, xm.shape[1], _CHUNK):
        cols = np.asarray(xm[:, start : start + _CHUNK], dtype=np.float64)
        order = np.argsort(cols, axis=0, kind="stable")
        sx = np.take_along_axis(cols, order, axis=0)
        sy = yc[order]
        c1 = np.cumsum(sy, axis=0)
        c2 = np.cumsum(sy * sy, axis=0)
        tot1 = c1[-1]
        tot2 = c2[-1]
        for j in range(cols.shape[1]):
            base = tot2[j] / n - (tot1[j] / n) ** 2
            lo = sx[0, j]
            hi = sx[-1, j]
            if hi == lo:
                losses[start + j] = base
                continue
            thresholds = lo + offsets * ((hi - lo) / bins)
            k = np.searchsorted(sx[:, j], thresholds, side="right")
            k = k[(k > 0) & (k < n)]
            if k.size == 0:
                losses[start + j] = base
                continue
            l1 = c1[k - 1, j]
            l2 = c2[k - 1, j]
            sse_l = l2 - l1 * l1 / k
            sse_r = (tot2[j] - l2) - (tot1[j] - l1) ** 2 / (n - k)
            losses[start + j] = np.min(sse_l + sse_r) / n
    return losses


def rft_loss(x, y, bins: int = DEFAULT_BINS) -> float:
    """RFT loss of a single feature column against the target.

    Constant columns admit no valid threshold and fall back to the no-split
    baseline Var(y).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    return float(rft_losses(x[:, None], y, bins)[0])


def elbow_index(sorted_losses) -> int:
    """Count of entries up to the elbow of a monotone loss curve.

    Maximum-chord-distance rule: both axes are min-max normalized and the
    returned count is 1 + the index farthest from the endpoint-to-endpoint
    line. Flat or collinear curves yield 1.
    """
    v = np.asarray(sorted_losses, dtype=np.float64).ravel()
    if v.size == 0:
        raise InvalidInputError("empty loss curve")
    if v.size == 1 or v.max() == v.min():
        return 1
    x = np.arange(v.size) / (v.size - 1)
    y = (v - v.min()) / (v.max() - v.min())
    dy = y[-1] - y[0]
    dist = np.abs(dy * x - (y - y[0])) / np.hypot(1.0, dy)
    return int(np.argmax(dist)) + 1


def rank_features(X, y, bins: int = DEFAULT_BINS) -> RftReport:
    """Score every column, sort ascending (stable, ties keep column order),
    and place the elbow cutoff."""
    losses = rft_losses(X, y, bins)
    order = np.argsort(losses, kind="stable")
    elbow = elbow_index(losses[order])
    return RftReport(losses=losses, order=order, elbow=elbow)


def _ranks_from_order(order: np.ndarray) -> np.ndarray:
    ranks = np.empty(order.size, dtype=np.int64)
    ranks[order] = np.arange(order.size)
    return ranks


def select_from_joint(joint_score: np.ndarray) -> tuple[np.ndarray, int]:
    """Columns whose joint score falls inside the elbow radius K.

    If no score is strictly below K (possible when no column ranks well in
    both subsets), the minimum-score columns are returned so selection is
    never empty.
    """
    joint_score = np.asarray(joint_score)
    k = elbow_index(np.sort(joint_score))
    selected = np.flatnonzero(joint_score < k)
    if selected.size == 0:
        selected = np.flatnonzero(joint_score == joint_score.min())
    return selected, k


def joint_rft(X, y, bins: int = DEFAULT_BINS, split: float = 0.8, seed: int = 0) -> JointSelection:
    """Two independent RFT rankings on a seeded row split, combined by
    worst-of-two rank; columns inside the elbow radius of the sorted joint
    scores are selected."""
    xm = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if xm.ndim != 2 or xm.shape[0] != y.size:
        raise ShapeMismatchError(f"feature matrix {xm.shape} does not match {y.size} targets")
    if not 0.0 < split < 1.0:
        raise InvalidConfigError(f"split must be in (0,1), got {split}")
    n = y.size
    if n < 10:
        raise InsufficientDataError(f"need at least 10 rows for a joint split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = min(max(int(split * n), 1), n - 1)
    tr = perm[:n_train]
    va = perm[n_train:]
    rep_t = rank_features(xm[tr], y[tr], bins)
    rep_v = rank_features(xm[va], y[va], bins)
    rank_t = _ranks_from_order(rep_t.order)
    rank_v = _ranks_from_order(rep_v.order)
    joint = np.maximum(rank_t, rank_v)
    selected, k = select_from_joint(joint)
    return JointSelection(
        rank_train=rank_t,
        rank_val=rank_v,
        joint_score=joint,
        threshold=k,
        selected=selected,
        losses_train=rep_t.losses,
        losses_val=rep_v.losses,
    )


def joint_select(X, y, bins: int = DEFAULT_BINS, split: float = 0.8, seed: int = 0) -> np.ndarray:
    """Selected column indices from the joint train/validation RFT."""
    return joint_rft(X, y, bins=bins, split=split, seed=seed).selected
