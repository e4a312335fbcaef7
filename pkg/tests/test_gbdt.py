import numpy as np
import pytest

from droughtcast import gbdt
from droughtcast.gbdt import (BoostedEnsemble, TrainParams, TreeNode,
                              find_best_split, logistic_grad_hess,
                              logistic_loss, sigmoid, tree_predict)
from droughtcast.features import FeatureDescriptor

from conftest import make_matrix


def enumerate_best_split(values, mask, g, h, params):
    """Exhaustive reference: every (feature, midpoint, default side)."""
    best = None
    for j in range(values.shape[1]):
        obs = ~mask[:, j]
        distinct = sorted(set(values[obs, j]))
        for lo, hi in zip(distinct[:-1], distinct[1:]):
            thr = (lo + hi) / 2.0
            for default_left in (True, False):
                gl = hl = gr = hr = 0.0
                for i in range(len(g)):
                    to_left = default_left if mask[i, j] else values[i, j] < thr
                    if to_left:
                        gl += g[i]
                        hl += h[i]
                    else:
                        gr += g[i]
                        hr += h[i]
                if hl < params.min_child_hessian or hr < params.min_child_hessian:
                    continue
                gain = 0.5 * (gl * gl / (hl + params.l2_reg)
                              + gr * gr / (hr + params.l2_reg)
                              - (gl + gr) ** 2 / (hl + hr + params.l2_reg))
                if best is None or gain > best[0]:
                    best = (gain, j, thr, default_left)
    if best is None or best[0] <= params.gamma:
        return None
    return best


def random_node(rng, n_rows, n_features=4, missing=0.2):
    values = rng.normal(size=(n_rows, n_features))
    mask = rng.random((n_rows, n_features)) < missing
    values = np.where(mask, np.nan, values)
    g = rng.uniform(-1.0, 1.0, n_rows)
    h = rng.uniform(0.01, 0.25, n_rows)
    return values, mask, g, h


def separable_matrix(n=200, seed=0):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(n, 2))
    labels = (values[:, 0] > 0.0).astype(int)
    return make_matrix(values, labels)


class TestFindBestSplit:
    def test_hand_worked_gain(self):
        values = np.array([[1.0], [2.0], [3.0], [4.0]])
        mask = np.zeros_like(values, dtype=bool)
        g = np.array([-0.5, -0.5, 0.5, 0.5])
        h = np.full(4, 0.25)
        params = TrainParams(l2_reg=1.0, gamma=0.0, min_child_hessian=0.0)
        cand = find_best_split(values, mask, g, h, params)
        assert cand.feature == 0
        assert cand.threshold == 2.5
        assert cand.gain == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_uniform_labels_no_split(self):
        values = np.arange(8.0).reshape(-1, 1)
        mask = np.zeros_like(values, dtype=bool)
        g = np.full(8, 0.5)               # all rows pull the same way
        h = np.full(8, 0.25)
        params = TrainParams(min_child_hessian=0.0)
        assert find_best_split(values, mask, g, h, params) is None

    def test_matches_enumeration(self):
        rng = np.random.default_rng(12)
        params = TrainParams(l2_reg=1.0, gamma=0.0, min_child_hessian=0.0)
        for trial in range(40):
            values, mask, g, h = random_node(rng, int(rng.integers(4, 33)))
            got = find_best_split(values, mask, g, h, params)
            want = enumerate_best_split(values, mask, g, h, params)
            if want is None:
                assert got is None
                continue
            assert (got.feature, got.threshold, got.default_left) == want[1:]
            assert got.gain == pytest.approx(want[0], rel=1e-9)

    def test_missing_routed_to_pure_side(self):
        # Feature observed only for one class: the winning candidate must
        # route the missing (other-class) rows to their own side.
        values = np.array([[1.0], [2.0], [3.0], [np.nan], [np.nan], [np.nan]])
        mask = np.isnan(values)
        g = np.array([0.5, 0.5, 0.5, -0.5, -0.5, -0.5])
        h = np.full(6, 0.25)
        params = TrainParams(min_child_hessian=0.0)
        got = find_best_split(values, mask, g, h, params)
        want = enumerate_best_split(values, mask, g, h, params)
        assert (got.feature, got.threshold, got.default_left) == want[1:]

    def test_tie_breaks_left_when_no_missing(self):
        values = np.array([[0.0], [1.0]])
        mask = np.zeros_like(values, dtype=bool)
        g = np.array([-0.9, 0.9])
        h = np.array([0.2, 0.2])
        cand = find_best_split(values, mask, g, h, TrainParams(min_child_hessian=0.0))
        assert cand.default_left   # both directions tie; left wins

    def test_min_child_hessian_blocks_thin_children(self):
        values = np.array([[1.0], [2.0], [3.0], [4.0]])
        mask = np.zeros_like(values, dtype=bool)
        g = np.array([-0.5, -0.5, 0.5, 0.5])
        h = np.full(4, 0.25)
        assert find_best_split(values, mask, g, h,
                               TrainParams(min_child_hessian=1.0)) is None


class TestLogisticPieces:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        scores = rng.uniform(-6, 6, 200)
        ys = rng.integers(0, 2, 200).astype(float)
        g, h = logistic_grad_hess(scores, ys)
        eps = 1e-5
        fd = (np.array([logistic_loss([s + eps], [y]) for s, y in zip(scores, ys)])
              - np.array([logistic_loss([s - eps], [y]) for s, y in zip(scores, ys)])) / (2 * eps)
        assert np.max(np.abs(g - fd)) <= 1e-6
        assert np.all(h > 0) and np.all(h <= 0.25)

    def test_sigmoid_stable_at_extremes(self):
        assert sigmoid(np.array([-800.0]))[0] == 0.0
        assert sigmoid(np.array([800.0]))[0] == 1.0


class TestFit:
    def test_separable_data_learned(self):
        from droughtcast.experiments import f1_per_class
        m = separable_matrix()
        ens = gbdt.fit(m, TrainParams(num_rounds=50))
        pred = gbdt.predict_label(ens, m)
        assert f1_per_class(pred, m.labels, 1).f1 >= 0.99

    def test_single_class_rejected(self):
        m = make_matrix(np.random.default_rng(0).normal(size=(10, 2)), [1] * 10)
        with pytest.raises(ValueError):
            gbdt.fit(m, TrainParams(num_rounds=1))

    def test_refit_byte_identical(self):
        m = separable_matrix(seed=5)
        a = gbdt.serialize(gbdt.fit(m, TrainParams(num_rounds=5)))
        b = gbdt.serialize(gbdt.fit(m, TrainParams(num_rounds=5)))
        assert a == b

    def test_training_loss_non_increasing(self):
        rng = np.random.default_rng(21)
        values = rng.normal(size=(150, 4))
        values[rng.random((150, 4)) < 0.15] = np.nan
        labels = ((values[:, 0] > 0) | np.isnan(values[:, 1])).astype(int)
        m = make_matrix(values, labels)
        params = TrainParams(num_rounds=30, gamma=0.0)
        ens = gbdt.fit(m, params)
        raw = np.full(m.n_rows, ens.base_score)
        losses = [logistic_loss(raw, m.labels)]
        for tree in ens.trees:
            raw = raw + params.learning_rate * tree_predict(tree, m.values, m.mask)
            losses.append(logistic_loss(raw, m.labels))
        for prev, cur in zip(losses, losses[1:]):
            assert cur <= prev + 1e-9

    def test_base_score_is_prior_log_odds(self):
        m = make_matrix(np.random.default_rng(1).normal(size=(40, 1)),
                        [1] * 10 + [0] * 30)
        ens = gbdt.fit(m, TrainParams(num_rounds=1))
        assert ens.base_score == pytest.approx(np.log(10 / 30))


class TestPredict:
    def test_zero_trees_gives_prior(self):
        ens = BoostedEnsemble(trees=[], base_score=0.7, params=TrainParams())
        m = make_matrix(np.zeros((5, 2)), [0] * 5)
        np.testing.assert_allclose(gbdt.predict_proba(ens, m), sigmoid(np.array([0.7]))[0])

    def test_balanced_prior_is_half(self):
        ens = BoostedEnsemble(trees=[], base_score=0.0, params=TrainParams())
        m = make_matrix(np.zeros((3, 1)), [0, 1, 0])
        np.testing.assert_allclose(gbdt.predict_proba(ens, m), 0.5)

    def test_training_rows_recovered_on_separable(self):
        m = separable_matrix(seed=2)
        ens = gbdt.fit(m, TrainParams(num_rounds=50))
        np.testing.assert_array_equal(gbdt.predict_label(ens, m), m.labels)

    def test_column_mismatch_rejected(self):
        m = separable_matrix(seed=3)
        ens = gbdt.fit(m, TrainParams(num_rounds=2))
        other = make_matrix(np.zeros((2, 3)), [0, 1])
        with pytest.raises(ValueError, match="layout"):
            gbdt.predict_proba(ens, other)

    def test_missing_follows_trained_default(self):
        rng = np.random.default_rng(4)
        values = rng.normal(size=(300, 2))
        mask = np.zeros_like(values, dtype=bool)
        labels = rng.integers(0, 2, 300)
        mask[:, 0] = (labels == 1) & (rng.random(300) < 0.95)
        values[mask] = np.nan
        m = make_matrix(values, labels, mask)
        ens = gbdt.fit(m, TrainParams(num_rounds=20))
        # score a fresh all-missing row and an observed row: they must land
        # per the learned routing, identical across repeated predictions
        probe = make_matrix(np.array([[np.nan, 0.0]]), [1])
        p1 = gbdt.predict_proba(ens, probe)[0]
        p2 = gbdt.predict_proba(ens, probe)[0]
        assert p1 == p2
        assert p1 > 0.5


class TestImportance:
    def _leaf(self, w):
        return TreeNode(weight=w)

    def _split(self, f, gain):
        return TreeNode(feature=f, threshold=0.0, default_left=True, gain=gain,
                        left=self._leaf(-1.0), right=self._leaf(1.0))

    def _cols(self, n):
        return [FeatureDescriptor("DI", "target", 1, f"x{j}") for j in range(n)]

    def test_single_split_full_weight(self):
        ens = BoostedEnsemble(trees=[self._split(0, 3.0)], base_score=0.0,
                              params=TrainParams(), columns=self._cols(2))
        np.testing.assert_allclose(gbdt.gain_importance(ens), [1.0, 0.0])

    def test_two_equal_splits_half_each(self):
        ens = BoostedEnsemble(trees=[self._split(0, 2.0), self._split(1, 2.0)],
                              base_score=0.0, params=TrainParams(),
                              columns=self._cols(2))
        np.testing.assert_allclose(gbdt.gain_importance(ens), [0.5, 0.5])

    def test_unused_feature_zero_and_sum_one(self):
        m = separable_matrix(seed=6)
        ens = gbdt.fit(m, TrainParams(num_rounds=10))
        imp = gbdt.gain_importance(ens)
        assert imp.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(imp >= 0)
        assert imp[0] > 0.9          # the informative feature dominates

    def test_zero_split_ensemble_all_zero(self):
        ens = BoostedEnsemble(trees=[self._leaf(0.1)], base_score=0.0,
                              params=TrainParams(), columns=self._cols(3))
        np.testing.assert_array_equal(gbdt.gain_importance(ens), [0.0, 0.0, 0.0])


class TestSerialization:
    def test_round_trip_identical_predictions(self):
        rng = np.random.default_rng(8)
        values = rng.normal(size=(120, 3))
        values[rng.random((120, 3)) < 0.2] = np.nan
        labels = (np.nansum(values, axis=1) > 0).astype(int)
        m = make_matrix(values, labels)
        ens = gbdt.fit(m, TrainParams(num_rounds=15))
        back = gbdt.deserialize(gbdt.serialize(ens))
        np.testing.assert_array_equal(gbdt.predict_proba(ens, m),
                                      gbdt.predict_proba(back, m))
        assert gbdt.serialize(back) == gbdt.serialize(ens)

    def test_schema_fields(self):
        import json
        m = separable_matrix(seed=9)
        d = json.loads(gbdt.serialize(gbdt.fit(m, TrainParams(num_rounds=2))))
        assert set(d) == {"params", "base_score", "columns", "trees"}
        node = d["trees"][0]
        assert ("w" in node) or {"f", "t", "d", "gain", "l", "r"} <= set(node)
