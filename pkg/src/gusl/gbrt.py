"""Gradient-boosted regression trees with the second-order (XGBoost-style)
split objective under squared loss.

Squared loss makes every hessian 1, so H terms reduce to row counts, but
gain, leaf weights and the lambda/gamma/min_child_weight semantics keep the
standard form:

    gain = 1/2 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)) - gamma
    leaf weight = -G / (H + lambda)

Split candidates are exact midpoints of consecutive distinct values present
at the node while the training set has at most ``exact_row_limit`` rows;
above that, per-feature quantile histogram bins are used. Both paths share
one integer-coded accumulation: a feature is coded once per fit, per-node
statistics are bin sums, and a split is a cut on the code.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, ShapeMismatchError


@dataclass(frozen=True)
class GbrtParams:
    max_depth: int = 6
    rounds: int = 300
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    subsample: float = 0.8
    hist_bins: int = 256
    exact_row_limit: int = 50_000

    def validate(self) -> None:
        if self.max_depth < 0:
            raise InvalidConfigError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.rounds < 1:
            raise InvalidConfigError(f"rounds must be >= 1, got {self.rounds}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise InvalidConfigError(f"learning_rate must be in (0,1], got {self.learning_rate}")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise InvalidConfigError("lambda, gamma and min_child_weight must be >= 0")
        if not 0.0 < self.subsample <= 1.0:
            raise InvalidConfigError(f"subsample must be in (0,1], got {self.subsample}")
        if self.hist_bins < 2:
            raise InvalidConfigError(f"hist_bins must be >= 2, got {self.hist_bins}")


# Defaults for the two roles the engine plays in the pipeline.
RESIDUAL_DEFAULTS = GbrtParams()
AUXILIARY_DEFAULTS = GbrtParams(max_depth=3, rounds=20, learning_rate=0.3)


@dataclass
class Tree:
    """Flat preorder node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray  # int32
    threshold: np.ndarray  # float64 (0 at leaves)
    weight: np.ndarray  # float64 leaf weights (0 at internal nodes)
    left: np.ndarray  # int32 child index (-1 at leaves)
    right: np.ndarray  # int32 child index (-1 at leaves)

    @property
    def node_count(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max(initial=0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        pos = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feats = self.feature[pos]
            active = np.flatnonzero(feats >= 0)
            if active.size == 0:
                break
            node = pos[active]
            go_left = X[active, feats[active]] <= self.threshold[node]
            pos[active] = np.where(go_left, self.left[node], self.right[node])
        return self.weight[pos]

    def leaf_paths(self) -> list[tuple[tuple[int, ...], int]]:
        """(split features in first-encounter order, leaf node index) per leaf."""
        out: list[tuple[tuple[int, ...], int]] = []
        stack: list[tuple[int, tuple[int, ...]]] = [(0, ())]
        while stack:
            node, path = stack.pop()
            f = int(self.feature[node])
            if f < 0:
                out.append((path, node))
                continue
            nxt = path if f in path else path + (f,)
            stack.append((int(self.right[node]), nxt))
            stack.append((int(self.left[node]), nxt))
        return out


@dataclass
class GbrtModel:
    params: GbrtParams
    base_score: float
    trees: list[Tree] = field(default_factory=list)
    max_feature: int = -1  # highest feature index referenced by any tree

    def predict(self, X) -> np.ndarray:
        return predict(self, X)


class _Binned:
    """Per-feature integer codes plus the candidate-threshold recipe."""

    def __init__(self, X: np.ndarray, params: GbrtParams):
        n, f = X.shape
        self.exact = n <= params.exact_row_limit
        self.codes = np.empty((n, f), dtype=np.int32, order="F")
        self.values: list[np.ndarray] = []  # exact: unique values; hist: bin edges
        if self.exact:
            for j in range(f):
                vals, inv = np.unique(X[:, j], return_inverse=True)
                self.codes[:, j] = inv
                self.values.append(vals)
        else:
            qs = np.arange(1, params.hist_bins) / params.hist_bins
            for j in range(f):
                edges = np.unique(np.quantile(X[:, j], qs))
                # drop edges no value can exceed, so every candidate splits
                edges = edges[edges < X[:, j].max()]
                self.codes[:, j] = np.searchsorted(edges, X[:, j], side="left")
                self.values.append(edges)
        self.n_bins = [v.size + 1 for v in self.values]


def _best_split(binned: _Binned, rows: np.ndarray, g: np.ndarray, params: GbrtParams):
    """Greedy scan over features; ties resolve to the lowest feature index,
    then the lowest threshold."""
    lam = params.reg_lambda
    mcw = params.min_child_weight
    sub = binned.codes[rows]
    gs = g[rows]
    g_tot = gs.sum()
    h_tot = float(rows.size)
    parent = g_tot * g_tot / (h_tot + lam)
    best_gain = 0.0
    best = None
    for f in range(sub.shape[1]):
        col = sub[:, f]
        nb = binned.n_bins[f]
        cnt = np.bincount(col, minlength=nb).astype(np.float64)
        gsum = np.bincount(col, weights=gs, minlength=nb)
        if binned.exact:
            occ = np.flatnonzero(cnt)
            if occ.size < 2:
                continue
            hl = np.cumsum(cnt[occ])[:-1]
            gl = np.cumsum(gsum[occ])[:-1]
            vals = binned.values[f][occ]
            thresholds = (vals[:-1] + vals[1:]) / 2.0
            cuts = occ[:-1]
        else:
            k = binned.values[f].size
            if k == 0:
                continue
            hl = np.cumsum(cnt)[:k]
            gl = np.cumsum(gsum)[:k]
            thresholds = binned.values[f]
            cuts = np.arange(k)
        hr = h_tot - hl
        gr = g_tot - gl
        valid = (hl >= mcw) & (hr >= mcw) & (hl > 0) & (hr > 0)
        if not valid.any():
            continue
        gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent) - params.gamma
        gain[~valid] = -np.inf
        j = int(np.argmax(gain))  # first max = lowest threshold
        if gain[j] > best_gain:
            best_gain = float(gain[j])
            best = (f, float(thresholds[j]), int(cuts[j]))
    return best_gain, best


def _grow_tree(binned: _Binned, rows: np.ndarray, g: np.ndarray, params: GbrtParams) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    weight: list[float] = []
    left: list[int] = []
    right: list[int] = []

    def rec(node_rows: np.ndarray, depth: int) -> int:
        idx = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        weight.append(0.0)
        left.append(-1)
        right.append(-1)
        if depth < params.max_depth and node_rows.size >= 2:
            gain, best = _best_split(binned, node_rows, g, params)
            if best is not None and gain > 0.0:
                f, thr, cut = best
                mask = binned.codes[node_rows, f] <= cut
                feature[idx] = f
                threshold[idx] = thr
                left[idx] = rec(node_rows[mask], depth + 1)
                right[idx] = rec(node_rows[~mask], depth + 1)
                return idx
        g_sum = g[node_rows].sum()
        weight[idx] = -g_sum / (node_rows.size + params.reg_lambda)
        return idx

    rec(rows, 0)
    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        weight=np.asarray(weight, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
    )


def fit(X, y, params: GbrtParams | None = None, seed: int = 0) -> GbrtModel:
    """Boost ``params.rounds`` trees against the squared-error objective.

    base_score is 0 (targets are residuals); each round fits the gradients
    g = pred - y of an optionally subsampled row set, then updates every
    row's prediction by learning_rate * tree(x).
    """
    params = params or RESIDUAL_DEFAULTS
    params.validate()
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise InvalidInputError(f"expected 2-D features, got shape {X.shape}")
    if X.shape[0] != y.size:
        raise ShapeMismatchError(f"{X.shape[0]} feature rows but {y.size} targets")
    if X.shape[0] < 2:
        raise InvalidInputError("need at least 2 rows")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise InvalidInputError("features and targets must be finite")

    n = X.shape[0]
    binned = _Binned(X, params)
    rng = np.random.default_rng(seed)
    pred = np.zeros(n)
    trees: list[Tree] = []
    all_rows = np.arange(n)
    for _ in range(params.rounds):
        g = pred - y
        if params.subsample < 1.0:
            m = max(1, int(params.subsample * n))
            rows = np.sort(rng.choice(n, size=m, replace=False))
        else:
            rows = all_rows
        tree = _grow_tree(binned, rows, g, params)
        trees.append(tree)
        pred += params.learning_rate * tree.apply(X)
    max_feature = max((int(t.feature.max(initial=-1)) for t in trees), default=-1)
    return GbrtModel(params=params, base_score=0.0, trees=trees, max_feature=max_feature)


def predict(model: GbrtModel, X) -> np.ndarray:
    """base_score + learning_rate * sum of reached leaf weights."""
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError(f"expected 2-D features, got shape {X.shape}")
    if X.shape[1] <= model.max_feature:
        raise ShapeMismatchError(
            f"model references feature {model.max_feature} but input has {X.shape[1]} columns"
        )
    out = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        out += model.params.learning_rate * tree.apply(X)
    return out


def with_overrides(params: GbrtParams, **kwargs) -> GbrtParams:
    return replace(params, **kwargs)
