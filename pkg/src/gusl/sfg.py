"""Statistics-based feature generation: tree-path representation subsets
projected onto the regression target by least squares.

A shallow auxiliary boosted ensemble partitions the target space; the
distinct split features along each root-to-leaf path form a subset, and
each subset gets a ridge-stabilized least-squares projection (the
normal-transform weights) whose output is a new supervised feature.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import gbrt
from .errors import InsufficientDataError, NumericalFailureError, ShapeMismatchError
from .saab import ColumnMeta, FeatureMatrix

RIDGE_SCALE = 1e-8


@dataclass
class LntProjection:
    subset: np.ndarray  # ordered column indices
    weights: np.ndarray
    intercept: float


@dataclass
class SfgModel:
    projections: list[LntProjection] = field(default_factory=list)
    source_dims: int = 0

    @property
    def degenerate(self) -> bool:
        return not self.projections


def _as_matrix(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def subsets_from_model(model: gbrt.GbrtModel) -> list[tuple[int, ...]]:
    """Distinct split-feature paths of every tree, first-encounter order,
    deduplicated across the ensemble."""
    seen: dict[tuple[int, ...], None] = {}
    for tree in model.trees:
        for path, _leaf in tree.leaf_paths():
            if path:
                seen.setdefault(path, None)
    return list(seen)


def extract_subsets(
    X,
    y,
    depth: int = 3,
    trees: int = 20,
    seed: int = 0,
    params: gbrt.GbrtParams | None = None,
) -> list[tuple[int, ...]]:
    """Fit the shallow auxiliary ensemble and collect its path subsets.

    A constant target admits no splits, so the result is empty (degenerate);
    callers fall back to the selected features alone.
    """
    if params is None:
        params = replace(gbrt.AUXILIARY_DEFAULTS, max_depth=depth, rounds=trees)
    model = gbrt.fit(X, y, params=params, seed=seed)
    return subsets_from_model(model)


def fit_lnt(X, y, subset, ridge: float | None = None) -> LntProjection:
    """Least-squares weights and intercept from X[:, subset] to y.

    Solved via centered normal equations with ``ridge`` added to the Gram
    diagonal; the default is 1e-8 * trace(Gram)/|subset|. The intercept
    absorbs the means, so residuals stay orthogonal to the constant column.
    """
    xm = _as_matrix(X)
    subset = np.atleast_1d(np.asarray(subset, dtype=np.int64))
    if subset.size == 0:
        raise ShapeMismatchError("subset must be non-empty")
    if subset.min() < 0 or subset.max() >= xm.shape[1]:
        raise ShapeMismatchError(f"subset indices out of range for {xm.shape[1]} columns")
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != xm.shape[0]:
        raise ShapeMismatchError(f"{xm.shape[0]} feature rows but {y.size} targets")
    if xm.shape[0] <= subset.size:
        raise InsufficientDataError(
            f"need more rows ({xm.shape[0]}) than subset columns ({subset.size})"
        )
    a = xm[:, subset]
    a_mean = a.mean(axis=0)
    y_mean = y.mean()
    ac = a - a_mean
    gram = ac.T @ ac
    if ridge is None:
        ridge = RIDGE_SCALE * np.trace(gram) / subset.size
    gram[np.diag_indices_from(gram)] += ridge
    try:
        w = np.linalg.solve(gram, ac.T @ (y - y_mean))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"normal equations are singular: {exc}") from exc
    if not np.isfinite(w).all():
        raise NumericalFailureError("normal equations produced non-finite weights")
    intercept = float(y_mean - a_mean @ w)
    return LntProjection(subset=subset, weights=w, intercept=intercept)


def fit_sfg(
    X,
    y,
    depth: int = 3,
    trees: int = 20,
    seed: int = 0,
    params: gbrt.GbrtParams | None = None,
    ridge: float | None = None,
    fit_on_leaf_rows: bool = False,
) -> SfgModel:
    """Subset extraction plus one LNT projection per subset.

    With ``fit_on_leaf_rows`` each projection is fitted only on the rows
    reaching its leaf (no cross-path deduplication in that case); default is
    a single fit on all rows per deduplicated subset.
    """
    xm = _as_matrix(X)
    if params is None:
        params = replace(gbrt.AUXILIARY_DEFAULTS, max_depth=depth, rounds=trees)
    if not fit_on_leaf_rows:
        subsets = extract_subsets(X, y, seed=seed, params=params)
        projections = [fit_lnt(xm, y, s, ridge=ridge) for s in subsets]
        return SfgModel(projections=projections, source_dims=xm.shape[1])

    model = gbrt.fit(X, y, params=params, seed=seed)
    yv = np.asarray(y, dtype=np.float64).ravel()
    projections = []
    for tree in model.trees:
        if tree.node_count == 1:
            continue
        leaf_of_row = _leaf_assignment(tree, xm)
        for path, leaf in tree.leaf_paths():
            if not path:
                continue
            rows = np.flatnonzero(leaf_of_row == leaf)
            if rows.size <= len(path):
                continue
            projections.append(fit_lnt(xm[rows], yv[rows], path, ridge=ridge))
    return SfgModel(projections=projections, source_dims=xm.shape[1])


def _leaf_assignment(tree: gbrt.Tree, X: np.ndarray) -> np.ndarray:
    pos = np.zeros(X.shape[0], dtype=np.int64)
    while True:
        feats = tree.feature[pos]
        active = np.flatnonzero(feats >= 0)
        if active.size == 0:
            return pos
        node = pos[active]
        go_left = X[active, feats[active]] <= tree.threshold[node]
        pos[active] = np.where(go_left, tree.left[node], tree.right[node])


def generate(X, model: SfgModel) -> FeatureMatrix:
    """One new column per projection: X[:, subset] @ w + b."""
    xm = _as_matrix(X)
    if xm.shape[1] < model.source_dims:
        raise ShapeMismatchError(
            f"model expects >= {model.source_dims} columns, got {xm.shape[1]}"
        )
    cols = np.empty((xm.shape[0], len(model.projections)))
    meta = []
    for i, proj in enumerate(model.projections):
        if proj.subset.size and proj.subset.max() >= xm.shape[1]:
            raise ShapeMismatchError(f"projection {i} references a missing column")
        cols[:, i] = xm[:, proj.subset] @ proj.weights + proj.intercept
        meta.append(ColumnMeta(source="lnt", kernel=-1, projection=i))
    return FeatureMatrix(values=cols, col_meta=meta)
