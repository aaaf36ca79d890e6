import numpy as np
import pytest

from gusl import gbrt
from gusl.errors import InvalidConfigError, InvalidInputError, ShapeMismatchError


def exact_params(**kw):
    base = dict(
        max_depth=0, rounds=1, learning_rate=1.0, reg_lambda=0.0, gamma=0.0,
        min_child_weight=1.0, subsample=1.0,
    )
    base.update(kw)
    return gbrt.GbrtParams(**base)


# --- independent reference builder ------------------------------------------

def ref_best_split(X, g, rows, lam, gamma, mcw):
    """Plain-loop enumeration of (feature, midpoint-threshold) candidates."""
    h_tot = len(rows)
    g_tot = g[rows].sum()
    parent = g_tot**2 / (h_tot + lam)
    best = None
    best_gain = 0.0
    for f in range(X.shape[1]):
        vals = np.unique(X[rows, f])
        for a, b in zip(vals[:-1], vals[1:]):
            t = (a + b) / 2.0
            left = rows[X[rows, f] <= t]
            right = rows[X[rows, f] > t]
            hl, hr = len(left), len(right)
            if hl < mcw or hr < mcw:
                continue
            gl = g[left].sum()
            gr = g[right].sum()
            gain = 0.5 * (gl**2 / (hl + lam) + gr**2 / (hr + lam) - parent) - gamma
            if gain > best_gain:
                best_gain = gain
                best = (f, t)
    return best_gain, best


def ref_tree(X, g, rows, depth, params):
    """Recursive reference: returns nested (feature, threshold, left, right)
    or ('leaf', weight)."""
    if depth < params.max_depth and len(rows) >= 2:
        gain, best = ref_best_split(
            X, g, rows, params.reg_lambda, params.gamma, params.min_child_weight
        )
        if best is not None and gain > 0:
            f, t = best
            left = rows[X[rows, f] <= t]
            right = rows[X[rows, f] > t]
            return (f, t, ref_tree(X, g, left, depth + 1, params),
                    ref_tree(X, g, right, depth + 1, params))
    return ("leaf", -g[rows].sum() / (len(rows) + params.reg_lambda))


def flatten_ref(node):
    """Preorder (feature, threshold) pairs and leaf weights of the reference."""
    splits, weights = [], []
    def walk(n):
        if n[0] == "leaf":
            weights.append(n[1])
            return
        splits.append((n[0], n[1]))
        walk(n[2])
        walk(n[3])
    walk(node)
    return splits, weights


def flatten_tree(tree):
    splits, weights = [], []
    def walk(i):
        if tree.feature[i] < 0:
            weights.append(float(tree.weight[i]))
            return
        splits.append((int(tree.feature[i]), float(tree.threshold[i])))
        walk(int(tree.left[i]))
        walk(int(tree.right[i]))
    walk(0)
    return splits, weights


class TestLeafCases:
    def test_depth0_mean(self):
        X = np.zeros((3, 1))
        y = np.array([1.0, 2.0, 3.0])
        model = gbrt.fit(X, y, exact_params())
        np.testing.assert_allclose(model.predict(X), 2.0, atol=1e-12)

    def test_depth1_perfect_split(self):
        X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        model = gbrt.fit(X, y, exact_params(max_depth=1))
        np.testing.assert_allclose(model.predict(X), y, atol=1e-15)
        tree = model.trees[0]
        assert tree.feature[0] == 0
        assert -1.0 < tree.threshold[0] < 1.0

    def test_lambda_shrinks_leaf(self):
        X = np.zeros((2, 1))
        y = np.array([2.0, 2.0])
        model = gbrt.fit(X, y, exact_params(reg_lambda=2.0))
        # leaf weight = -G/(H+lambda) with G=-4, H=2
        np.testing.assert_allclose(model.predict(X), 1.0, atol=1e-15)


class TestPredict:
    def test_no_trees_returns_base(self):
        model = gbrt.GbrtModel(params=gbrt.GbrtParams(), base_score=0.25)
        np.testing.assert_array_equal(model.predict(np.zeros((5, 2))), 0.25)

    def test_training_set_reproduction(self):
        X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        model = gbrt.fit(X, y, exact_params(max_depth=1))
        np.testing.assert_allclose(gbrt.predict(model, X), [0, 0, 1, 1], atol=1e-15)

    def test_duplicated_row(self, rng):
        X = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        model = gbrt.fit(X, y, exact_params(max_depth=3, rounds=5, learning_rate=0.5))
        X2 = np.vstack([X[7], X[7]])
        p = model.predict(X2)
        assert p[0] == p[1]

    def test_missing_columns(self, rng):
        X = rng.normal(size=(20, 3))
        y = rng.normal(size=20)
        model = gbrt.fit(X, y, exact_params(max_depth=2))
        with pytest.raises(ShapeMismatchError):
            model.predict(X[:, :1])


class TestTraining:
    def test_mean_recovery_property(self, rng):
        for _ in range(5):
            X = rng.normal(size=(25, 3))
            y = rng.normal(size=25)
            model = gbrt.fit(X, y, exact_params())
            np.testing.assert_allclose(model.predict(X), y.mean(), atol=1e-9)

    def test_mse_non_increasing(self, rng):
        X = rng.normal(size=(120, 6))
        y = rng.normal(size=120)
        params = gbrt.GbrtParams(
            max_depth=3, rounds=50, learning_rate=0.3, reg_lambda=1.0, subsample=1.0
        )
        model = gbrt.fit(X, y, params)
        pred = np.zeros(120)
        prev = np.mean(y**2)
        for tree in model.trees:
            pred += params.learning_rate * tree.apply(X)
            cur = np.mean((pred - y) ** 2)
            assert cur <= prev + 1e-12
            prev = cur

    def test_matches_reference_builder(self, rng):
        for trial in range(15):
            n = int(rng.integers(8, 33))
            f = int(rng.integers(1, 5))
            X = np.round(rng.normal(size=(n, f)), 2)  # duplicates likely
            y = rng.normal(size=n)
            params = exact_params(
                max_depth=int(rng.integers(1, 4)),
                reg_lambda=float(rng.choice([0.0, 1.0])),
                rounds=2,
                learning_rate=0.7,
            )
            model = gbrt.fit(X, y, params)
            pred = np.zeros(n)
            for tree in model.trees:
                ref = ref_tree(X, pred - y, np.arange(n), 0, params)
                ref_splits, ref_weights = flatten_ref(ref)
                got_splits, got_weights = flatten_tree(tree)
                assert got_splits == ref_splits, f"trial {trial}"
                np.testing.assert_allclose(got_weights, ref_weights, atol=1e-12)
                pred += params.learning_rate * tree.apply(X)

    def test_histogram_mode_close_to_exact(self, rng):
        X = rng.normal(size=(300, 4))
        y = X[:, 0] - 0.5 * X[:, 2] + 0.1 * rng.normal(size=300)
        exact = gbrt.fit(X, y, exact_params(max_depth=3, rounds=20, learning_rate=0.3))
        hist = gbrt.fit(
            X, y,
            exact_params(max_depth=3, rounds=20, learning_rate=0.3, exact_row_limit=0),
        )
        mse_exact = np.mean((exact.predict(X) - y) ** 2)
        mse_hist = np.mean((hist.predict(X) - y) ** 2)
        assert mse_hist < 2.5 * mse_exact + 1e-3

    def test_determinism_with_subsample(self, rng):
        X = rng.normal(size=(60, 5))
        y = rng.normal(size=60)
        params = gbrt.GbrtParams(max_depth=3, rounds=10, learning_rate=0.3, subsample=0.7)
        a = gbrt.fit(X, y, params, seed=42)
        b = gbrt.fit(X, y, params, seed=42)
        for ta, tb in zip(a.trees, b.trees):
            assert (ta.feature == tb.feature).all()
            assert (ta.threshold == tb.threshold).all()
            assert (ta.weight == tb.weight).all()

    def test_gamma_blocks_weak_splits(self, rng):
        X = rng.normal(size=(40, 3))
        y = 0.001 * rng.normal(size=40)
        model = gbrt.fit(X, y, exact_params(max_depth=4, gamma=100.0))
        assert model.trees[0].node_count == 1  # no split clears the penalty


class TestValidation:
    def test_bad_params(self):
        with pytest.raises(InvalidConfigError):
            gbrt.GbrtParams(rounds=0).validate()
        with pytest.raises(InvalidConfigError):
            gbrt.GbrtParams(learning_rate=0.0).validate()
        with pytest.raises(InvalidConfigError):
            gbrt.GbrtParams(reg_lambda=-1.0).validate()

    def test_nan_rejected(self):
        X = np.zeros((4, 2))
        X[1, 0] = np.nan
        with pytest.raises(InvalidInputError):
            gbrt.fit(X, np.zeros(4), exact_params())
