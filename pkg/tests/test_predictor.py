import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from llmsched.domain import LatencyModel, LLMProfile, Query
from llmsched.embedding import EmbedderConfig, HashedTokenEmbedder
from llmsched.errors import InvalidInputError
from llmsched.predictor import (
    GradientBoostedModel,
    MinMaxScaler,
    ModelBundle,
    ModelConfig,
    TrainingRow,
    classification_accuracy,
    mean_absolute_error,
    raw_features,
    retrain,
    train,
)

DIM = 8
EMB_CFG = EmbedderConfig(dimension=DIM)
EMBED = HashedTokenEmbedder(EMB_CFG)


def make_llms(m=3):
    return tuple(
        LLMProfile(
            id=f"llm{k}",
            price_input=1e-6 * (k + 1),
            price_output=2e-6 * (k + 1),
            latency=LatencyModel(base_ms=100.0),
            success_table={"x": 0.5},
        )
        for k in range(m)
    )


def separable_rows(n=20, m=3, seed=0):
    """Class = 1 iff feature 0 is high; wide margin, cleanly separable."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        label = i % 2
        emb = rng.uniform(0.0, 0.2, size=DIM)
        emb[0] = rng.uniform(0.8, 1.0) if label else rng.uniform(0.0, 0.2)
        k = i % m
        rows.append(TrainingRow(features=raw_features(emb, k, m),
                                success=label, cost=1e-4 * (k + 1)))
    return rows


class TestFeatures:
    def test_concatenation_shape_and_one_hot(self):
        emb = np.arange(4, dtype=float)
        vec = raw_features(emb, llm_index=1, m=3)
        assert vec.shape == (7,)
        assert vec[4:].tolist() == [0.0, 1.0, 0.0]

    def test_same_query_differs_only_in_one_hot(self):
        emb = np.arange(4, dtype=float)
        a = raw_features(emb, 0, 3)
        b = raw_features(emb, 2, 3)
        assert np.array_equal(a[:4], b[:4])
        assert not np.array_equal(a[4:], b[4:])

    def test_out_of_range_index(self):
        with pytest.raises(InvalidInputError):
            raw_features(np.zeros(4), 3, 3)


class TestScaler:
    def test_min_max_arithmetic(self):
        scaler = MinMaxScaler().fit(np.array([[2.0], [4.0]]))
        assert scaler.transform(np.array([[3.0]]))[0, 0] == pytest.approx(0.5)

    def test_out_of_range_clips(self):
        scaler = MinMaxScaler().fit(np.array([[2.0], [4.0]]))
        assert scaler.transform(np.array([[10.0]]))[0, 0] == 1.0
        assert scaler.transform(np.array([[-10.0]]))[0, 0] == 0.0

    def test_constant_column_maps_to_zero(self):
        scaler = MinMaxScaler().fit(np.array([[7.0], [7.0]]))
        assert scaler.transform(np.array([[7.0]]))[0, 0] == 0.0

    def test_refit_on_scaled_data_is_identity(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-5, 5, size=(30, 4))
        scaled = MinMaxScaler().fit(X).transform(X)
        again = MinMaxScaler().fit(scaled).transform(scaled)
        assert np.allclose(again, scaled, atol=1e-12)

    def test_dict_round_trip(self):
        scaler = MinMaxScaler().fit(np.array([[1.0, 2.0], [3.0, 8.0]]))
        other = MinMaxScaler.from_dict(scaler.to_dict())
        X = np.array([[2.0, 5.0]])
        assert np.array_equal(scaler.transform(X), other.transform(X))


class TestTrain:
    def test_separable_fixture_reaches_full_accuracy(self):
        # sklearn confirms the fixture is linearly separable, so a holdout
        # accuracy of 1.0 is the right expectation for any sane learner.
        from sklearn.linear_model import LogisticRegression

        rows = separable_rows()
        X = np.stack([r.features for r in rows])
        y = np.array([r.success for r in rows])
        ref = LogisticRegression(max_iter=2000).fit(X, y)
        assert ref.score(X, y) == 1.0

        bundle = train(rows, make_llms(), EMB_CFG, ModelConfig(), seed=0)
        assert bundle.eval.accuracy == 1.0

    def test_constant_cost_target_gives_zero_mae(self):
        rows = [TrainingRow(r.features, r.success, 0.5) for r in separable_rows()]
        bundle = train(rows, make_llms(), EMB_CFG, ModelConfig(), seed=0)
        assert bundle.eval.mae == pytest.approx(0.0, abs=1e-12)
        q = Query(id="q", payload="anything here", input_tokens=1,
                  arrival_period=0, truth_category="x")
        pair = bundle.predict(q, 0)
        assert pair.cost == pytest.approx(0.5)

    def test_training_is_deterministic(self):
        rows = separable_rows(seed=5)
        a = train(rows, make_llms(), EMB_CFG, ModelConfig(), seed=7)
        b = train(rows, make_llms(), EMB_CFG, ModelConfig(), seed=7)
        assert a.eval == b.eval
        assert a.digest() == b.digest()

    def test_empty_rows_rejected(self):
        with pytest.raises(InvalidInputError):
            train([], make_llms(), EMB_CFG, ModelConfig(), seed=0)

    def test_single_class_degenerates_to_constant(self):
        rows = [TrainingRow(r.features, 1, r.cost) for r in separable_rows()]
        bundle = train(rows, make_llms(), EMB_CFG, ModelConfig(), seed=0)
        assert bundle.eval.constant_classifier
        q = Query(id="q", payload="whatever text", input_tokens=1,
                  arrival_period=0, truth_category="x")
        assert bundle.predict(q, 0).perf == 1.0

    def test_reported_metrics_match_independent_recompute(self):
        rows = separable_rows(n=40, seed=3)
        cfg = ModelConfig()
        bundle = train(rows, make_llms(), EMB_CFG, cfg, seed=11)
        # reproduce the seeded split and shadow fit independently
        X = bundle.scaler.transform(np.stack([r.features for r in rows]))
        y = np.array([r.success for r in rows], dtype=float)
        c = np.array([r.cost for r in rows])
        order = np.random.default_rng(11).permutation(len(rows))
        n_eval = int(round(cfg.eval_fraction * len(rows)))
        ev, tr = order[:n_eval], order[n_eval:]
        clf = GradientBoostedModel("logistic", cfg).fit(X[tr], y[tr])
        reg = GradientBoostedModel("squared", cfg).fit(X[tr], c[tr])
        acc = classification_accuracy(clf.predict_proba(X[ev]), y[ev])
        mae = mean_absolute_error(reg.predict(X[ev]), c[ev])
        assert bundle.eval.accuracy == pytest.approx(acc, abs=1e-12)
        assert bundle.eval.mae == pytest.approx(mae, abs=1e-15)


class TestPredict:
    def build_bundle(self, rows=None):
        return train(rows or separable_rows(), make_llms(), EMB_CFG, ModelConfig(), seed=0)

    def test_predict_is_pure(self):
        bundle = self.build_bundle()
        q = Query(id="q", payload="some payload text", input_tokens=50,
                  arrival_period=0, truth_category="x")
        pairs = [bundle.predict(q, 1) for _ in range(3)]
        assert len({(p.perf, p.cost) for p in pairs}) == 1

    def test_cost_floor_applies(self):
        # regressor trained on tiny costs; the floor is the unavoidable
        # input cost plus one output token
        rows = [TrainingRow(r.features, r.success, 1e-9) for r in separable_rows()]
        bundle = self.build_bundle(rows)
        q = Query(id="q", payload="pay load", input_tokens=1000,
                  arrival_period=0, truth_category="x")
        pair = bundle.predict(q, 2)
        llm = bundle.llms[2]
        floor = 1000 * llm.price_input + llm.price_output
        assert pair.cost == pytest.approx(floor)

    def test_perf_in_unit_interval_and_cost_positive(self):
        bundle = self.build_bundle()
        rng = np.random.default_rng(0)
        for _ in range(50):
            emb = rng.uniform(size=DIM)
            perf, cost = bundle.predict_matrix(emb[None, :], np.array([5.0]))
            assert np.all((perf >= 0) & (perf <= 1))
            assert np.all(cost > 0)

    def test_matrix_matches_reference_tree_walk(self):
        """Vectorized predictions equal a naive re-evaluation of the fitted
        trees on a 5-query / 3-LLM fixture."""
        bundle = self.build_bundle()
        payloads = [f"fixture payload number {i} with words" for i in range(5)]
        embs = np.stack([EMBED(p) for p in payloads])
        tokens = np.array([10.0, 20.0, 30.0, 40.0, 50.0])
        perf, cost = bundle.predict_matrix(embs, tokens)

        def walk(tree_dict, x):
            node = 0
            while tree_dict["feature"][node] >= 0:
                if x[tree_dict["feature"][node]] <= tree_dict["threshold"][node]:
                    node = tree_dict["left"][node]
                else:
                    node = tree_dict["right"][node]
            return tree_dict["value"][node]

        clf = bundle.classifier.to_dict()
        reg = bundle.regressor.to_dict()
        for i in range(5):
            for k in range(3):
                x = bundle.scaler.transform(raw_features(embs[i], k, 3)[None, :])[0]
                raw_clf = clf["base_score"] + sum(
                    clf["learning_rate"] * walk(t, x) for t in clf["trees"])
                p_ref = 1.0 / (1.0 + np.exp(-raw_clf))
                c_ref = reg["base_score"] + sum(
                    reg["learning_rate"] * walk(t, x) for t in reg["trees"])
                llm = bundle.llms[k]
                c_ref = max(c_ref, tokens[i] * llm.price_input + llm.price_output, 1e-9)
                assert perf[i, k] == pytest.approx(p_ref, abs=1e-9)
                assert cost[i, k] == pytest.approx(c_ref, rel=1e-9)

    def test_llm_index_out_of_range(self):
        bundle = self.build_bundle()
        q = Query(id="q", payload="p q", input_tokens=1, arrival_period=0,
                  truth_category="x")
        with pytest.raises(InvalidInputError):
            bundle.predict(q, 9)


class TestSerialization:
    def test_save_load_reproduces_predictions(self, tmp_path):
        bundle = train(separable_rows(n=30, seed=2), make_llms(), EMB_CFG,
                       ModelConfig(), seed=0)
        path = tmp_path / "bundle.json"
        bundle.save(path)
        loaded = ModelBundle.load(path)
        rng = np.random.default_rng(1)
        embs = rng.uniform(size=(10, DIM))
        tokens = rng.integers(1, 100, size=10).astype(float)
        p1, c1 = bundle.predict_matrix(embs, tokens)
        p2, c2 = loaded.predict_matrix(embs, tokens)
        assert np.array_equal(p1, p2)
        assert np.array_equal(c1, c2)
        assert loaded.digest() == bundle.digest()

    def test_version_check(self, tmp_path):
        bundle = train(separable_rows(), make_llms(), EMB_CFG, ModelConfig(), seed=0)
        data = bundle.to_dict()
        data["version"] = 42
        with pytest.raises(InvalidInputError):
            ModelBundle.from_dict(data)


class TestLinearFamily:
    def test_linear_family_satisfies_interface(self):
        cfg = ModelConfig(family="linear")
        bundle = train(separable_rows(n=30, seed=1), make_llms(), EMB_CFG, cfg, seed=0)
        assert bundle.eval.accuracy >= 0.9
        q = Query(id="q", payload="text here", input_tokens=10,
                  arrival_period=0, truth_category="x")
        pair = bundle.predict(q, 0)
        assert 0.0 <= pair.perf <= 1.0 and pair.cost > 0

    def test_linear_family_round_trips(self, tmp_path):
        cfg = ModelConfig(family="linear")
        bundle = train(separable_rows(n=30, seed=1), make_llms(), EMB_CFG, cfg, seed=0)
        path = tmp_path / "linear.json"
        bundle.save(path)
        loaded = ModelBundle.load(path)
        embs = np.random.default_rng(0).uniform(size=(5, DIM))
        p1, _ = bundle.predict_matrix(embs, np.full(5, 10.0))
        p2, _ = loaded.predict_matrix(embs, np.full(5, 10.0))
        assert np.array_equal(p1, p2)


class TestRetrain:
    def test_noop_when_nothing_selected(self):
        bundle = train(separable_rows(), make_llms(), EMB_CFG, ModelConfig(), seed=0)
        assert retrain(bundle, separable_rows(), False, False, seed=1) is bundle

    def test_classifier_only_retrain_keeps_regressor_and_scaler(self):
        rows = separable_rows(n=30, seed=4)
        bundle = train(rows, make_llms(), EMB_CFG, ModelConfig(), seed=0)
        flipped = [TrainingRow(r.features, 1 - r.success, r.cost) for r in rows]
        out = retrain(bundle, flipped, True, False, seed=1)
        assert out.regressor is bundle.regressor
        assert out.scaler is bundle.scaler
        assert out.digest() != bundle.digest()

    def test_retrain_is_deterministic(self):
        rows = separable_rows(n=30, seed=4)
        bundle = train(rows, make_llms(), EMB_CFG, ModelConfig(), seed=0)
        a = retrain(bundle, rows[:20], True, True, seed=9)
        b = retrain(bundle, rows[:20], True, True, seed=9)
        assert a.digest() == b.digest()


class TestModelConfig:
    def test_rejects_unknown_family(self):
        with pytest.raises(InvalidInputError):
            ModelConfig(family="mystery")

    def test_dict_round_trip(self):
        cfg = ModelConfig(n_trees=12, max_depth=2)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    @given(st.integers(min_value=0, max_value=200))
    @settings(max_examples=20)
    def test_accuracy_helper_range(self, n):
        rng = np.random.default_rng(n)
        probs = rng.uniform(size=n + 1)
        labels = rng.integers(0, 2, size=n + 1)
        assert 0.0 <= classification_accuracy(probs, labels) <= 1.0
