import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hosprisk import models
from hosprisk.models import (
    GradientBoostingParams,
    LogRegParams,
    MlpParams,
    RandomForestParams,
    TrainingSet,
    load_model,
    save_model,
    sigmoid,
    train,
    train_gradient_boosting,
    train_logreg,
    train_mlp,
    train_random_forest,
)
from hosprisk.models import logreg as lr_mod
from hosprisk.models import mlp as mlp_mod
from hosprisk.models.base import InvalidTrainingSet, ShapeMismatch, base_log_odds, log_loss
from hosprisk.models.tree import gini, train_tree


def toy(n=200, d=3, seed=0, rule=lambda X: X[:, 0] > 0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    return TrainingSet(X, rule(X), tuple(f"x{i}" for i in range(d)))


def noisy(n=400, seed=1):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    p = sigmoid(1.5 * X[:, 0] - X[:, 1] + 0.5 * X[:, 2] * X[:, 3])
    return TrainingSet(X, rng.random(n) < p, ("a", "b", "c", "d"))


def central_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


class TestSigmoid:
    def test_values(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid(math.log(3)) == pytest.approx(0.75, abs=1e-15)

    def test_extremes_do_not_overflow(self):
        with np.errstate(over="raise"):
            assert sigmoid(1000.0) == 1.0
            assert sigmoid(-1000.0) == pytest.approx(0.0, abs=1e-300)
            out = sigmoid(np.array([-1e308, 1e308]))
        assert out.tolist() == [0.0, 1.0]


class TestTrainingSet:
    def test_rejects_bad_input(self):
        X = np.zeros((4, 2))
        with pytest.raises(InvalidTrainingSet):
            TrainingSet(X, np.array([1, 1, 1, 1], bool), ("a", "b"))
        with pytest.raises(InvalidTrainingSet):
            TrainingSet(np.array([[np.nan, 0], [0, 0]]), np.array([0, 1], bool), ("a", "b"))
        with pytest.raises(InvalidTrainingSet):
            TrainingSet(X[:1], np.array([1], bool), ("a", "b"))
        with pytest.raises(InvalidTrainingSet):
            TrainingSet(X, np.array([0, 1, 0, 1], bool), ("a",))


class TestLogReg:
    def test_separable_toy(self):
        base = toy(n=300)
        keep = np.abs(base.features[:, 0]) > 0.25
        data = TrainingSet(base.features[keep], base.labels[keep], base.feature_names)
        m = train_logreg(data, LogRegParams(c=100.0, max_iter=3000))
        assert np.mean(m.classify(data.features) == data.labels) == 1.0

    def test_constant_features_give_base_rate_intercept(self):
        y = np.array([1, 0, 0, 0, 1, 0, 0, 0, 0, 0], bool)
        data = TrainingSet(np.ones((10, 2)), y, ("a", "b"))
        m = train_logreg(data, LogRegParams(penalty="l2", c=1.0, tol=1e-15, max_iter=20000))
        np.testing.assert_allclose(m.weights, 0.0, atol=1e-12)
        assert m.intercept == pytest.approx(math.log(0.2 / 0.8), abs=1e-6)

    @pytest.mark.parametrize("penalty", ["l1", "l2"])
    def test_gradient_matches_finite_differences(self, penalty):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(5, 3))
        y = np.array([1, 0, 1, 1, 0], float)
        w = rng.normal(size=3)
        b = np.array([0.3])
        lam = 0.17
        _, gw, gb = lr_mod.smooth_loss_and_grad(w, b[0], X, y, lam, penalty)
        fw = central_difference(lambda: lr_mod.smooth_loss_and_grad(w, b[0], X, y, lam, penalty)[0], w)
        fb = central_difference(lambda: lr_mod.smooth_loss_and_grad(w, b[0], X, y, lam, penalty)[0], b)
        assert rel_err(gw, fw) <= 1e-5
        assert rel_err(np.array([gb]), fb) <= 1e-5

    @pytest.mark.parametrize("penalty", ["l1", "l2"])
    def test_objective_nonincreasing(self, penalty):
        m = train_logreg(noisy(), LogRegParams(penalty=penalty, c=0.5))
        h = np.array(m.training_history)
        assert np.all(np.diff(h) <= 1e-12)

    def test_l1_produces_exact_zeros_on_redundant_features(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(300, 1))
        X = np.hstack([x, x + 1e-3 * rng.normal(size=(300, 1)), rng.normal(size=(300, 3))])
        y = rng.random(300) < sigmoid(2 * x[:, 0])
        m = train_logreg(TrainingSet(X, y, tuple("abcde")), LogRegParams(penalty="l1", c=0.01))
        assert np.sum(m.weights == 0.0) >= 1

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self):
        with pytest.raises(models.NonFinite):
            train_logreg(noisy(), LogRegParams(penalty="l2", c=1e-12, learning_rate=1e6, max_iter=50))

    def test_soft_threshold(self):
        np.testing.assert_array_equal(lr_mod.soft_threshold(np.array([-2.0, -0.5, 0.5, 3.0]), 1.0), [-1.0, 0.0, 0.0, 2.0])


class TestTree:
    def test_gini(self):
        assert gini(np.array([1, 1, 1])) == 0.0
        assert gini(np.array([0, 1, 0, 1])) == 0.5

    def test_pure_node_is_leaf(self):
        t = train_tree(np.arange(6.0)[:, None], np.ones(6), max_depth=4)
        assert t.n_nodes == 1 and t.value[0] == 1.0

    def test_one_split_dataset(self):
        x = np.array([0.0, 1, 2, 3, 4, 5, 6])
        t = train_tree(x[:, None], (x > 3).astype(float), max_depth=3)
        assert t.depth == 1
        assert 3.0 <= t.threshold[0] < 4.0
        np.testing.assert_array_equal(t.predict(x[:, None]), (x > 3).astype(float))

    def test_best_split_matches_brute_force(self, rng):
        X = rng.normal(size=(40, 3)).round(1)
        y = (rng.random(40) < 0.5).astype(float)
        t = train_tree(X, y, max_depth=1)
        best = None
        for f in range(3):
            for thr in np.unique(X[:, f])[:-1]:
                left = X[:, f] <= thr
                score = (left.sum() * gini(y[left]) + (~left).sum() * gini(y[~left])) / 40
                if best is None or score < best[0] - 1e-12:
                    best = (score, f, thr)
        assert (t.feature[0], t.threshold[0]) == (best[1], best[2])

    @given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_depth_and_leaf_size(self, depth, leaf, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(60, 3))
        y = (rng.random(60) < 0.4).astype(float)
        t = train_tree(X, y, max_depth=depth, min_samples_leaf=leaf)
        assert t.depth <= depth
        leaves = t.feature < 0
        assert np.all(t.n_node_samples[leaves] >= leaf)

    def test_monotone_transform_invariance(self, rng):
        X = rng.normal(size=(150, 3))
        y = (X[:, 0] + 0.5 * X[:, 2] + rng.normal(scale=0.5, size=150) > 0).astype(float)
        Xt = X.copy()
        Xt[:, 0] = np.exp(3 * Xt[:, 0])
        a = train_tree(X, y, max_depth=5, min_samples_leaf=2)
        b = train_tree(Xt, y, max_depth=5, min_samples_leaf=2)
        Z = rng.normal(size=(500, 3))
        Zt = Z.copy()
        Zt[:, 0] = np.exp(3 * Zt[:, 0])
        np.testing.assert_array_equal(a.predict(Z), b.predict(Zt))


class TestRandomForest:
    def test_single_tree_degenerates_to_tree(self):
        data = noisy()
        hp = RandomForestParams(n_trees=1, max_depth=4, min_samples_leaf=3, features_per_split=4, bootstrap=False)
        m = train_random_forest(data, hp, seed=9)
        t = train_tree(data.features, data.labels.astype(float), max_depth=4, min_samples_leaf=3)
        np.testing.assert_array_equal(m.predict_proba(data.features), t.predict(data.features))

    def test_deterministic_and_thread_independent(self):
        data = noisy()
        hp = RandomForestParams(n_trees=12, max_depth=5)
        a = train_random_forest(data, hp, seed=4)
        b = train_random_forest(data, hp, seed=4, n_jobs=4)
        assert a.to_dict() == b.to_dict()

    def test_probability_is_mean_of_tree_leaves(self):
        data = noisy()
        m = train_random_forest(data, RandomForestParams(n_trees=2, max_depth=3), seed=1)
        x = data.features[:5]
        by_hand = []
        for row in x:
            vals = []
            for t in m.trees:
                node = 0
                while t.feature[node] >= 0:
                    node = t.left[node] if row[t.feature[node]] <= t.threshold[node] else t.right[node]
                vals.append(t.value[node])
            by_hand.append(np.mean(vals))
        np.testing.assert_allclose(m.predict_proba(x), by_hand, rtol=0, atol=1e-15)

    def test_default_features_per_split(self):
        from hosprisk.models.forest import resolve_features_per_split

        assert resolve_features_per_split(RandomForestParams(), 9) == 3
        assert resolve_features_per_split(RandomForestParams(), 10) == 4


class TestGradientBoosting:
    def test_zero_learning_rate_gives_base_rate(self):
        data = noisy()
        m = train_gradient_boosting(data, GradientBoostingParams(learning_rate=0.0, n_trees=5))
        np.testing.assert_allclose(m.predict_proba(data.features), data.labels.mean(), rtol=1e-12)

    def test_single_stump_improves_on_base_rate(self):
        x = np.arange(20.0)[:, None]
        data = TrainingSet(x, x[:, 0] > 12, ("x",))
        m = train_gradient_boosting(data, GradientBoostingParams(learning_rate=0.5, n_trees=1, max_depth=1))
        assert m.training_history[1] < m.training_history[0]
        assert log_loss(data.labels, m.predict_proba(x)) < log_loss(data.labels, np.full(20, data.labels.mean()))

    def test_loss_monotone(self):
        m = train_gradient_boosting(noisy(), GradientBoostingParams(learning_rate=0.1, n_trees=100, max_depth=3))
        assert np.all(np.diff(m.training_history) <= 1e-12)

    def test_init_score(self):
        data = noisy()
        m = train_gradient_boosting(data, GradientBoostingParams(n_trees=1))
        assert m.init_score == pytest.approx(base_log_odds(data.labels))


class TestMlp:
    def test_zero_init_outputs_half(self):
        params = mlp_mod.zero_params((4, 3, 2, 1))
        z, _ = mlp_mod.forward(params, np.random.default_rng(0).normal(size=(7, 4)))
        np.testing.assert_array_equal(sigmoid(z), 0.5)

    def test_backprop_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        params = mlp_mod.init_params((2, 2, 2, 1), rng)
        for k in params:
            params[k] = params[k] + rng.normal(scale=0.3, size=params[k].shape)
        X = rng.normal(size=(6, 2))
        y = np.array([1, 0, 1, 0, 0, 1], float)
        _, grads = mlp_mod.loss_and_grads(params, X, y)
        for k in mlp_mod.LAYER_NAMES:
            num = central_difference(lambda: mlp_mod.loss_and_grads(params, X, y)[0], params[k])
            assert rel_err(grads[k], num) <= 1e-4, k

    def test_learns_signal(self):
        data = noisy(600)
        m = train_mlp(data, MlpParams(units_1=16, units_2=8, epochs=60, learning_rate=0.05))
        majority = max(data.labels.mean(), 1 - data.labels.mean())
        assert np.mean(m.classify(data.features) == data.labels) >= majority + 0.05



KINDS_SMALL = {
    "logreg": {"c": 1.0},
    "gradient_boosting": {"n_trees": 20, "learning_rate": 0.1},
    "random_forest": {"n_trees": 10, "max_depth": 4},
    "mlp": {"units_1": 8, "units_2": 4, "epochs": 10},
}


@pytest.mark.parametrize("kind", models.MODEL_KINDS)
class TestCommonContract:
    def test_shape_mismatch(self, kind):
        m = train(kind, noisy(), KINDS_SMALL[kind])
        with pytest.raises(ShapeMismatch):
            m.predict_proba(np.zeros((3, 5)))

    def test_row_permutation_equivariance(self, kind, rng):
        data = noisy()
        m = train(kind, data, KINDS_SMALL[kind])
        perm = rng.permutation(data.n_rows)
        np.testing.assert_array_equal(m.predict_proba(data.features)[perm], m.predict_proba(data.features[perm]))

    def test_save_load_bit_identical(self, kind, tmp_path):
        data = noisy()
        m = train(kind, data, KINDS_SMALL[kind], seed=3)
        save_model(m, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        assert back.kind == m.kind and back.feature_names == m.feature_names
        np.testing.assert_array_equal(back.predict_proba(data.features), m.predict_proba(data.features))

    def test_deterministic(self, kind):
        data = noisy()
        a = train(kind, data, KINDS_SMALL[kind], seed=5)
        b = train(kind, data, KINDS_SMALL[kind], seed=5)
        assert a.to_dict() == b.to_dict()

    @given(X=hnp.arrays(np.float64, (8, 4), elements=st.floats(-1e6, 1e6)))
    @settings(max_examples=25, deadline=None)
    def test_probabilities_in_unit_interval(self, kind, X):
        m = _fitted(kind)
        p = m.predict_proba(X)
        assert np.all((p >= 0) & (p <= 1))
        np.testing.assert_array_equal(m.classify(X), p >= 0.5)


_CACHE = {}


def _fitted(kind):
    if kind not in _CACHE:
        _CACHE[kind] = train(kind, noisy(), KINDS_SMALL[kind])
    return _CACHE[kind]


def test_aliases():
    assert models.canonical_kind("gb") == "gradient_boosting"
    assert models.canonical_kind("ann") == "mlp"
    with pytest.raises(ValueError):
        models.canonical_kind("svm")


def test_hyperparameter_validation():
    with pytest.raises(ValueError):
        models.make_params("gradient_boosting", max_depth=0)
    with pytest.raises(ValueError):
        models.make_params("logreg", penalty="l3")
    with pytest.raises(ValueError):
        models.make_params("random_forest", mean_sample_leaf=4)
