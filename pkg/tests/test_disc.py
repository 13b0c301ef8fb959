import numpy as np
import pytest
from sklearn.metrics import confusion_matrix, f1_score, precision_score, recall_score

from varqbm.disc import (
    H_DISC_WORDS,
    ConditionedHamiltonian,
    DegenerateFeatureError,
    DiscPreprocessor,
    MetricsReport,
    QBMClassifier,
    TransactionRecord,
    condition,
    conditional_entropy,
    conditional_loss,
    evaluate,
    fit_preprocessor,
    fraud_probabilities,
    generate_synthetic,
    kmeans_bins,
    predict_labels,
    read_transactions,
    records_to_arrays,
    train_discriminative,
    write_transactions,
)
from varqbm.varqite import EvolutionConfig


@pytest.fixture(scope="module")
def synthetic():
    train, test = generate_synthetic(0)
    pre = fit_preprocessor(train)
    x, y = records_to_arrays(train)
    return train, test, pre, pre.transform(x), y


class TestGenerator:
    def test_deterministic(self):
        a = generate_synthetic(3)
        b = generate_synthetic(3)
        assert a == b
        assert generate_synthetic(4)[0] != a[0]

    @pytest.mark.parametrize("seed", range(5))
    def test_rates_and_ranges(self, seed):
        train, test = generate_synthetic(seed)
        assert (len(train), len(test)) == (500, 250)
        _, y = records_to_arrays(train)
        assert abs(y.mean() - 0.15) <= 0.03

    def test_planted_subgroup(self):
        train, _ = generate_synthetic(0)
        x, y = records_to_arrays(train)
        risky = (x[:, 0] >= 18) & (x[:, 1] >= 150)
        assert y[risky].mean() >= 3 * y.mean()

    def test_label_independent(self):
        train, _ = generate_synthetic(0, label_independent=True)
        x, y = records_to_arrays(train)
        risky = (x[:, 0] >= 18) & (x[:, 1] >= 150)
        assert abs(y[risky].mean() - y[~risky].mean()) < 0.1

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            generate_synthetic(0, n_train=0)
        with pytest.raises(ValueError):
            generate_synthetic(0, fraud_train=1.5)


class TestRecordsIO:
    @pytest.mark.parametrize(
        "kw",
        [{"time": 24.0}, {"amount": -1.0}, {"zip": 100000}, {"mcc": 10000}, {"label": "ok"}],
    )
    def test_record_validation(self, kw):
        base = {"time": 1.0, "amount": 2.0, "zip": 12345, "mcc": 5411, "label": "valid"}
        with pytest.raises(ValueError):
            TransactionRecord(**{**base, **kw})

    def test_round_trip(self, tmp_path):
        train, _ = generate_synthetic(1, n_train=20, n_test=1)
        path = tmp_path / "t.csv"
        write_transactions(path, train)
        assert path.read_text().splitlines()[0] == "time,amount,zip,mcc,label"
        assert read_transactions(path) == train

    def test_bad_files(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_transactions(tmp_path / "missing.csv")
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_transactions(bad)
        bad.write_text("time,amount,zip,mcc,label\n1,2,3,4,maybe\n")
        with pytest.raises(ValueError, match=":2:"):
            read_transactions(bad)


class TestPreprocessing:
    def test_amount_bins_follow_clusters(self, synthetic):
        _, _, pre, _, _ = synthetic
        c = pre.centers_[1]
        assert c[0] < 50 < c[1] < 150 < c[2]
        raw = np.array([[12.0, a, 50000, 0] for a in (20.0, 100.0, 300.0)])
        assert list(pre._discretize(raw)[:, 1]) == [0, 1, 2]

    def test_standardized(self, synthetic):
        *_, z, _ = synthetic
        np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-9)
        np.testing.assert_allclose(z.var(axis=0), 1, atol=1e-9)

    def test_mcc_groups(self, synthetic):
        _, _, pre, _, _ = synthetic
        raw = np.array([[12.0, 20.0, 5000, m] for m in (0, 999, 1000, 9999)])
        assert list(pre._discretize(raw)[:, 3]) == [0, 0, 1, 9]

    def test_constant_feature_rejected(self):
        x = np.column_stack([np.full(30, 12.0), np.linspace(1, 300, 30), np.linspace(1000, 90000, 30), np.arange(30) * 300])
        with pytest.raises(DegenerateFeatureError, match="time"):
            DiscPreprocessor().fit(x)

    def test_kmeans_simple(self):
        v = np.r_[np.full(5, 1.0), np.full(5, 10.0), np.full(5, 100.0)]
        np.testing.assert_allclose(kmeans_bins(v), [1, 10, 100])
        with pytest.raises(DegenerateFeatureError):
            kmeans_bins([1.0, 2.0, 2.0])

    def test_bias_column(self, synthetic):
        train, *_ = synthetic
        x, _ = records_to_arrays(train)
        z = fit_preprocessor(train, add_bias=True).transform(x)
        assert z.shape[1] == 5 and np.all(z[:, 4] == 1)


class TestConditioning:
    def test_zero_cases(self, rng):
        h = ConditionedHamiltonian(rng.normal(size=(5, 4)))
        assert np.all(condition(h, np.zeros(4)).coefficients == 0)
        assert np.all(condition(ConditionedHamiltonian(np.zeros((5, 4))), rng.normal(size=4)).coefficients == 0)
        assert [str(w) for w in condition(h, np.ones(4)).words] == list(H_DISC_WORDS)

    def test_bilinear(self, rng):
        t1, t2 = rng.normal(size=(2, 5, 4))
        x1, x2 = rng.normal(size=(2, 4))
        c = lambda t, x: condition(ConditionedHamiltonian(t), x).coefficients
        np.testing.assert_allclose(c(t1, x1 + x2), c(t1, x1) + c(t1, x2), atol=1e-12)
        np.testing.assert_allclose(c(t1 + t2, x1), c(t1, x1) + c(t2, x1), atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            condition(ConditionedHamiltonian(np.zeros((5, 4))), np.zeros(3))
        with pytest.raises(ValueError):
            ConditionedHamiltonian(np.zeros((4, 4)))


class TestLoss:
    def test_zero_theta_log2(self, synthetic):
        *_, z, y = synthetic
        h = ConditionedHamiltonian(np.zeros((5, 4)))
        assert conditional_loss(h, z, y) == pytest.approx(np.log(2), abs=1e-12)
        assert conditional_loss(h, z[:5], y[:5], "varqite", EvolutionConfig(n_steps=2)) == pytest.approx(np.log(2), abs=1e-9)

    def test_point_mass_090(self):
        theta = np.zeros((5, 1))
        theta[2, 0] = 0.5 * np.log(9.0)  # IZ on the visible qubit
        h = ConditionedHamiltonian(theta)
        assert fraud_probabilities(h, [[1.0]])[0] == pytest.approx(0.9, abs=1e-12)
        assert conditional_loss(h, [[1.0]] * 3, [1, 1, 1]) == pytest.approx(-np.log(0.9), abs=1e-12)

    def test_occurrence_weighting(self, rng):
        h = ConditionedHamiltonian(rng.normal(size=(5, 2)))
        x = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        y = np.array([1, 0, 1])
        p1 = fraud_probabilities(h, x[[0, 2]])
        ref = -(2 / 3) * 0.5 * (np.log(p1[0]) + np.log(1 - p1[0])) - (1 / 3) * np.log(p1[1])
        assert conditional_loss(h, x, y) == pytest.approx(ref, abs=1e-12)

    def test_gibbs_inequality(self, synthetic, rng):
        *_, z, y = synthetic
        bound = conditional_entropy(z, y)
        for _ in range(5):
            h = ConditionedHamiltonian(rng.uniform(-2, 2, (5, 4)))
            assert conditional_loss(h, z, y) >= bound - 1e-9

    def test_exact_vs_varqite(self, synthetic):
        *_, z, y = synthetic
        rng = np.random.default_rng(0)
        evo = EvolutionConfig(n_steps=10)
        for _ in range(3):
            h = ConditionedHamiltonian(rng.uniform(-1, 1, (5, 4)))
            idx = rng.choice(len(z), 15, replace=False)
            a = conditional_loss(h, z[idx], y[idx])
            b = conditional_loss(h, z[idx], y[idx], "varqite", evo)
            assert abs(a - b) <= 0.01

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            fraud_probabilities(ConditionedHamiltonian(np.zeros((5, 1))), [[1.0]], mode="sampled")


class TestTraining:
    def test_symmetric_data_flat_start(self):
        x = np.array([[1.0], [1.0], [-1.0], [-1.0]])
        y = np.array([0, 1, 0, 1])
        from varqbm.disc import _central_gradient

        f = lambda th: conditional_loss(ConditionedHamiltonian.from_flat(th, 1), x, y)
        assert np.abs(_central_gradient(f, np.zeros(5), 1e-6)).max() <= 1e-8

    def test_separable_toy(self):
        x = np.array([[1.0], [-1.0]] * 10)
        y = np.array([1, 0] * 10)
        res = train_discriminative(x, y, seed=0, maxiter=50)
        assert res.final_loss < res.initial_loss
        assert res.stopped in ("maxiter", "converged", "stagnation")
        report, _ = evaluate(res.hamiltonian, x, y, EvolutionConfig(n_steps=10))
        assert report.accuracy == 1.0 and report.f1 == 1.0
        assert res.history[0] == res.initial_loss

    def test_label_independent_predicts_majority(self):
        train, test = generate_synthetic(0, label_independent=True)
        # a constant feature is needed to express a feature-independent rate
        pre = fit_preprocessor(train, add_bias=True)
        xtr, ytr = records_to_arrays(train)
        xte, yte = records_to_arrays(test)
        res = train_discriminative(pre.transform(xtr), ytr, seed=0)
        report, _ = evaluate(res.hamiltonian, pre.transform(xte), yte, mode="exact")
        majority = max(yte.mean(), 1 - yte.mean())
        assert report.tp + report.fp == 0
        assert abs(report.accuracy - majority) <= 0.03

    def test_bad_theta0(self):
        with pytest.raises(ValueError):
            train_discriminative(np.ones((4, 2)), [0, 1, 0, 1], theta0=np.zeros(3))


class TestMetrics:
    def test_recount(self, rng):
        for _ in range(20):
            t = rng.integers(0, 2, 50)
            p = rng.integers(0, 2, 50)
            r = MetricsReport.from_predictions(t, p)
            tn, fp, fn, tp = confusion_matrix(t, p, labels=[0, 1]).ravel()
            assert (r.tp, r.fp, r.tn, r.fn) == (tp, fp, tn, fn)
            assert r.accuracy == (tp + tn) / 50
            assert r.precision == precision_score(t, p, zero_division=0)
            assert r.recall == recall_score(t, p, zero_division=0)
            assert r.f1 == pytest.approx(f1_score(t, p, zero_division=0), abs=1e-15)

    def test_all_negative(self):
        r = MetricsReport.from_predictions([1, 0, 0, 1], [0, 0, 0, 0])
        assert (r.precision, r.recall, r.f1, r.accuracy) == (0.0, 0.0, 0.0, 0.5)
        assert r.n == 4 and '"n": 4' in r.to_json()

    def test_ties_go_valid(self):
        assert list(predict_labels([0.5, 0.5000001, 0.2])) == [0, 1, 0]

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            MetricsReport.from_predictions([1, 0], [1])


def test_classifier_estimator():
    x = np.array([[1.0, 0.3], [-1.0, -0.2]] * 6)
    y = np.array([1, 0] * 6)
    clf = QBMClassifier(maxiter=20, n_steps=5).fit(x, y)
    proba = clf.predict_proba(x[:2])
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert list(clf.predict(x[:2])) == [1, 0]
    assert clf.score(x, y) == 1.0
