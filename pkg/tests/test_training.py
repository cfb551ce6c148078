import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neoscope import regressors, training


def mi_oracle(a, b):
    """Counter-based plug-in mutual information, independent of the
    numpy-histogram implementation."""
    n = len(a)
    pa = Counter(a)
    pb = Counter(b)
    pab = Counter(zip(a, b))
    total = 0.0
    for (x, y), c in pab.items():
        pxy = c / n
        total += pxy * np.log(pxy / (pa[x] / n * pb[y] / n))
    return total


def quantile_bins_oracle(col, bins=8):
    edges = np.quantile(col, np.linspace(0, 1, bins + 1)[1:-1])
    return np.searchsorted(edges, col, side="right")


def mrmr_oracle(X, y, k):
    """Independent greedy relevance-minus-redundancy over binned columns."""
    cols = {f + 1: tuple(quantile_bins_oracle(X[:, f])) for f in range(X.shape[1])}
    yd = tuple(int(v) for v in y)
    relevance = {f: mi_oracle(cols[f], yd) for f in cols}
    selected = []
    remaining = sorted(cols)
    while len(selected) < k:
        best, best_score = None, -np.inf
        for f in remaining:
            score = relevance[f]
            if selected:
                score -= np.mean([mi_oracle(cols[f], cols[s]) for s in selected])
            if score > best_score + 1e-12:
                best, best_score = f, score
        selected.append(best)
        remaining.remove(best)
    return selected


class TestScaler:
    def test_hand_computed_population_std(self):
        p = training.fit_scaler(np.array([[1.0], [2.0], [3.0]]))
        out = training.apply_scaler(p, np.array([[1.0], [2.0], [3.0]]))
        assert np.allclose(out.ravel(), [-1.224744871391589, 0.0, 1.224744871391589])

    def test_unseen_value(self):
        p = training.ScalerParams(np.array([2.0]), np.array([0.8165]))
        out = training.apply_scaler(p, np.array([[4.0]]))
        assert abs(out[0, 0] - 2.4494795) < 1e-4

    def test_constant_column_passthrough_zero(self):
        p = training.fit_scaler(np.array([[5.0, 1.0], [5.0, 2.0]]))
        out = training.apply_scaler(p, np.array([[7.0, 3.0]]))
        assert out[0, 0] == 0.0

    def test_train_columns_standardized(self):
        X = np.random.default_rng(0).normal(3, 2, size=(50, 4))
        p = training.fit_scaler(X)
        out = training.apply_scaler(p, X)
        assert np.all(np.abs(out.mean(axis=0)) < 1e-9)
        assert np.all(np.abs(out.var(axis=0) - 1) < 1e-9)


class TestOversample:
    def test_counts_balanced(self):
        X = np.arange(13)[:, None].astype(float)
        y = np.array([1] * 10 + [5] * 3)
        pid = np.array(["a"] * 13)
        _, yb, _ = training.oversample_balance(X, y, pid, 0)
        assert Counter(yb) == {1: 10, 5: 10}

    def test_already_balanced_unchanged(self):
        X = np.arange(6)[:, None].astype(float)
        y = np.array([1, 1, 1, 2, 2, 2])
        xb, yb, _ = training.oversample_balance(X, y, np.array(["p"] * 6), 3)
        assert sorted(xb.ravel().tolist()) == list(range(6))

    def test_duplicates_are_exact_copies(self):
        X = np.random.default_rng(1).normal(size=(5, 3))
        y = np.array([1, 1, 1, 1, 2])
        xb, yb, _ = training.oversample_balance(X, y, np.array(["p"] * 5), 7)
        for row in xb[yb == 2]:
            assert np.array_equal(row, X[4])

    def test_seed_determinism(self):
        X = np.random.default_rng(2).normal(size=(20, 2))
        y = np.concatenate([np.ones(15), np.full(5, 3)]).astype(int)
        pid = np.array(["p"] * 20)
        a = training.oversample_balance(X, y, pid, 9)
        b = training.oversample_balance(X, y, pid, 9)
        assert np.array_equal(a[0], b[0])


class TestMrmr:
    def test_three_feature_construction_matches_oracle(self):
        rng = np.random.default_rng(4)
        n = 300
        y = rng.integers(1, 6, size=n)
        X = np.column_stack([
            y.astype(float),
            y + rng.normal(0, 0.3, n),
            rng.normal(size=n),
        ])
        assert training.mrmr_mid_rank(X, y, 3) == mrmr_oracle(X, y, 3) == [1, 2, 3]

    def test_first_pick_is_max_marginal_mi(self):
        rng = np.random.default_rng(5)
        n = 200
        y = rng.integers(1, 6, size=n)
        X = rng.normal(size=(n, 6))
        X[:, 4] = y + rng.normal(0, 0.2, n)
        ranked = training.mrmr_mid_rank(X, y, 3)
        assert ranked[0] == 5

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(6)
        n = 250
        y = rng.integers(1, 6, size=n)
        X = np.column_stack([y + rng.normal(0, 0.4, n) for _ in range(4)])
        base = training.mrmr_mid_rank(X, y, 4)
        X2 = X.copy()
        X2[:, 0] = np.exp(X2[:, 0])
        X2[:, 1] = X2[:, 1] ** 3
        X2[:, 2] = 5 * X2[:, 2] - 7
        assert training.mrmr_mid_rank(X2, y, 4) == base

    def test_column_permutation_with_tie_rule(self):
        # identical columns tie; the declared rule keeps the lowest id
        rng = np.random.default_rng(7)
        y = rng.integers(1, 6, size=100)
        col = y + rng.normal(0, 0.5, 100)
        X = np.column_stack([col, col, rng.normal(size=100)])
        ranked = training.mrmr_mid_rank(X, y, 2)
        assert ranked[0] == 1

    def test_k_too_large(self):
        with pytest.raises(training.TrainingError):
            training.mrmr_mid_rank(np.ones((10, 2)), np.ones(10, dtype=int), 5)


class TestFolds:
    def test_even_split(self):
        pids = np.repeat([f"p{i}" for i in range(10)], 3)
        labels = np.tile([1, 2, 3], 10)
        folds = training.patientwise_folds(pids, labels, 5)
        assert np.array_equal(np.bincount(folds), [6, 6, 6, 6, 6])
        for p in set(pids.tolist()):
            assert len(set(folds[pids == p])) == 1

    def test_leave_one_out(self):
        pids = np.array([f"p{i}" for i in range(119)])
        labels = np.ones(119, dtype=int)
        folds = training.patientwise_folds(pids, labels, "loo")
        assert len(set(folds.tolist())) == 119

    def test_patient_recordings_stay_together(self):
        pids = np.array(["a", "a", "a", "b", "c", "d", "e", "f"])
        labels = np.array([1, 2, 3, 1, 2, 3, 4, 5])
        folds = training.patientwise_folds(pids, labels, 3)
        assert len(set(folds[:3])) == 1

    def test_too_few_patients(self):
        with pytest.raises(training.TrainingError):
            training.patientwise_folds(np.array(["a", "b"]), np.array([1, 2]), 5)


class TestOrdinalFit:
    def test_separable_thresholds_and_accuracy(self):
        rng = np.random.default_rng(8)
        X = np.sort(rng.uniform(-2, 2, size=(300, 1)), axis=0)
        y = np.digitize(X[:, 0], [-1.2, -0.4, 0.4, 1.2]) + 1
        for variant in ("all_threshold", "immediate_threshold"):
            m = regressors.OrdinalLogistic(variant, alpha=0.0).fit(X, y)
            assert np.all(np.diff(m.theta_) >= 0)
            assert np.mean(m.predict(X) == y) == 1.0

    def test_label_reversal_symmetry(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(200, 2))
        y = np.clip(np.digitize(X[:, 0], [-1, 0, 1]) + 1, 1, 5)
        m = regressors.OrdinalLogistic("all_threshold", 0.1).fit(X, y)
        m_rev = regressors.OrdinalLogistic("all_threshold", 0.1).fit(-X, y)
        assert np.allclose(m.coef_, -m_rev.coef_, atol=1e-3)

    def test_adjacent_misclassification_on_noisy_corpus(self):
        rng = np.random.default_rng(10)
        n = 600
        latent = rng.uniform(0, 1, n)
        y = np.digitize(latent, [0.2, 0.4, 0.6, 0.8]) + 1
        X = np.column_stack([latent + rng.normal(0, 0.06, n),
                             rng.normal(size=n)])
        m = regressors.OrdinalLogistic("all_threshold", 0.0).fit(X[:400], y[:400])
        preds = m.predict(X[400:])
        wrong = preds != y[400:]
        if wrong.any():
            adjacent = np.abs(preds[wrong] - y[400:][wrong]) == 1
            assert adjacent.mean() >= 0.9

    def test_single_class_rejected(self):
        with pytest.raises(regressors.FitError):
            regressors.OrdinalLogistic().fit(np.ones((5, 2)), np.full(5, 3))

    def test_ordinal_ridge_rounds(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0], [5.0]])
        y = np.array([1, 2, 3, 4, 5])
        m = regressors.OrdinalRidge(0.0).fit(X, y)
        assert np.array_equal(m.predict(X), y.astype(float))


class TestGridSearch:
    def _data(self):
        rng = np.random.default_rng(11)
        n = 100
        pid = np.repeat([f"p{i}" for i in range(20)], 5)
        latent = rng.uniform(0, 1, n)
        y = np.digitize(latent, [0.2, 0.4, 0.6, 0.8]) + 1
        X = np.column_stack([latent + rng.normal(0, 0.05, n),
                             latent * 2 + rng.normal(0, 0.1, n),
                             -latent + rng.normal(0, 0.05, n),
                             rng.normal(size=(n, 17))])
        return X, y, pid

    def test_informative_features_selected(self):
        X, y, pid = self._data()
        scaler = training.fit_scaler(X)
        xs = training.apply_scaler(scaler, X)
        reg, ids, cv_mse, table = training.grid_search_train(
            xs, y, pid, "ridge", feature_range=(3, 6), seed=1)
        assert set(ids[:3]) & {1, 2, 3}
        assert cv_mse < 0.3
        assert len(table) > 0

    def test_single_grid_point_equals_direct_fit(self):
        X, y, pid = self._data()
        scaler = training.fit_scaler(X)
        xs = training.apply_scaler(scaler, X)
        reg, ids, _, _ = training.grid_search_train(
            xs, y, pid, "ridge", grid=[{"alpha": 1.0}], feature_range=(3, 3), seed=2)
        xb, yb, _ = training.oversample_balance(xs, y, pid, 2)
        direct = regressors.RidgeRegressor(1.0).fit(
            xb[:, [i - 1 for i in ids]], yb.astype(float))
        assert np.allclose(direct.coef_, reg.coef_)

    def test_end_to_end_determinism(self):
        X, y, pid = self._data()
        m1, _ = training.train_quality_model(X, y, pid, "heart", families=("ridge",),
                                             seed=7)
        m2, _ = training.train_quality_model(X, y, pid, "heart", families=("ridge",),
                                             seed=7)
        assert json.dumps(m1.to_json(), sort_keys=True) == json.dumps(m2.to_json(), sort_keys=True)

    def test_no_patient_spans_outer_folds(self):
        X, y, pid = self._data()
        model, _ = training.train_quality_model(X, y, pid, "heart", families=("ridge",),
                                                seed=3)
        report, preds = training.crossval_eval(X, y, pid, model, seed=3)
        assert len(preds) == len(y)
        folds = training.patientwise_folds(pid, y, 5)
        for p in set(pid.tolist()):
            assert len(set(folds[pid == p])) == 1


class TestPredictAndEvaluate:
    def _model(self):
        X = np.random.default_rng(12).normal(size=(30, 3))
        y = np.clip(np.round(X[:, 0] * 2 + 3), 1, 5).astype(int)
        model, _ = training.train_quality_model(
            X, y, np.array([f"p{i}" for i in range(30)]), "heart",
            families=("ols",), n_splits=5, seed=0)
        return model

    def test_clamping(self):
        model = self._model()
        # force extreme raw outputs through the linear coefficients
        big = np.full((1, 3), 100.0)
        small = np.full((1, 3), -100.0)
        hi = model.predict(big)[0]
        lo = model.predict(small)[0]
        assert {hi, lo} == {1.0, 5.0}

    def test_rounded_view(self):
        assert training.round_quality(np.array([3.4]))[0] == 3
        assert training.round_quality(np.array([3.5]))[0] == 4
        assert training.round_quality(np.array([0.2]))[0] == 1
        assert training.round_quality(np.array([5.7]))[0] == 5

    def test_catalog_version_guard(self):
        model = self._model()
        doc = model.to_json()
        doc["catalog_version"] = "other"
        with pytest.raises(training.TrainingError):
            training.QualityModel.from_json(doc)

    def test_evaluate_identity(self):
        r = training.evaluate(np.array([1, 2, 3, 4, 5], dtype=float),
                              np.array([1, 2, 3, 4, 5]))
        assert r.mse == 0 and r.accuracy == 1 and r.balanced_accuracy == 1
        assert np.array_equal(r.confusion, np.eye(5))

    def test_evaluate_constant_predictor(self):
        r = training.evaluate(np.full(500, 3.0), np.tile([1, 2, 3, 4, 5], 100))
        assert r.balanced_accuracy == 0.2

    def test_evaluate_shifted_predictions(self):
        labels = np.tile([1, 2, 3, 4], 25)
        preds = np.clip(labels + 1, 1, 5).astype(float)
        r = training.evaluate(preds, labels)
        assert r.mse <= 1.0
        assert np.all(r.confusion[np.arange(4), np.arange(1, 5)] == 25)

    def test_confusion_row_sums(self):
        rng = np.random.default_rng(13)
        labels = rng.integers(1, 6, 200)
        preds = np.clip(labels + rng.normal(0, 1, 200), 1, 5)
        r = training.evaluate(preds, labels)
        for c in range(5):
            assert r.confusion[c].sum() == np.count_nonzero(labels == c + 1)

    def test_no_leakage_scaler_uses_train_params(self):
        train = np.random.default_rng(14).normal(10, 2, size=(40, 2))
        test = np.random.default_rng(15).normal(0, 1, size=(40, 2))
        p = training.fit_scaler(train)
        out = training.apply_scaler(p, test)
        assert abs(out.mean()) > 1.0  # test stats differ, so the shift shows


def test_model_artifact_round_trip(tmp_path):
    X = np.random.default_rng(16).normal(size=(40, 5))
    y = np.clip(np.round(X[:, 1] + 3), 1, 5).astype(int)
    model, _ = training.train_quality_model(
        X, y, np.array([f"p{i}" for i in range(40)]), "lung",
        families=("knn",), seed=2)
    path = tmp_path / "model.json"
    training.save_model(model, path)
    back = training.load_model(path)
    probe = np.random.default_rng(17).normal(size=(6, 5))
    assert np.array_equal(back.predict(probe), model.predict(probe))
    assert path.read_text() == json.dumps(back.to_json(), indent=1, sort_keys=True)
