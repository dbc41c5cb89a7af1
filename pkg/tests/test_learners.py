import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acsel.learners import (
    LearnerSpec,
    SpecError,
    TrainingExample,
    fit,
    fit_xy,
    parse_learner,
    roc_auc,
    score,
)


def examples_from(X, t):
    return [TrainingExample(x, float(v)) for x, v in zip(X, t)]


class TestGrammar:
    def test_parse_defaults(self):
        spec = parse_learner("logistic")
        assert spec.kind == "logistic" and spec.mode == "classification" and spec.params == {}

    def test_parse_params(self):
        spec = parse_learner("forest[trees=10,depth=3]")
        assert spec.params == {"trees": 10, "depth": 3}

    def test_parse_regression_task(self):
        spec = parse_learner("knn[k=2,task=reg]")
        assert spec.mode == "regression" and spec.params == {"k": 2}

    @pytest.mark.parametrize("bad", ["zap", "knn[q=2]", "forest[trees=x]", "logistic[task=reg]", "knn[k]"])
    def test_parse_errors(self, bad):
        with pytest.raises(SpecError):
            parse_learner(bad)


class TestLogistic:
    @staticmethod
    def _mean_logloss(Xb, t):
        def loss(w):
            z = np.clip(Xb @ w, -30, 30)
            q = 1 / (1 + np.exp(-z))
            eps = 1e-12
            return -np.mean(t * np.log(q + eps) + (1 - t) * np.log(1 - q + eps))

        return loss

    def test_separable_scores_match_oracle_direction(self, rng):
        # reference convex-optimisation oracle on the same mean log-loss
        from scipy.optimize import minimize

        X = rng.uniform(-3, 3, size=(200, 1))
        t = (X[:, 0] > 0).astype(float)
        p = fit_xy(parse_learner("logistic"), X, t)
        assert p.score(np.array([2.0])) > 0.9
        assert p.score(np.array([-2.0])) < 0.1

        Xb = np.hstack([X, np.ones((200, 1))])
        w = minimize(self._mean_logloss(Xb, t), np.zeros(2), method="BFGS").x
        oracle_hi = 1 / (1 + np.exp(-(w[0] * 2.0 + w[1])))
        oracle_lo = 1 / (1 + np.exp(-(w[0] * -2.0 + w[1])))
        assert oracle_hi > 0.9 and oracle_lo < 0.1

    def test_noisy_loss_close_to_oracle_optimum(self, rng):
        from scipy.optimize import minimize

        X = rng.uniform(-3, 3, size=(300, 2))
        t = (X[:, 0] > 0).astype(float)
        flips = rng.random(300) < 0.15
        t[flips] = 1 - t[flips]
        p = fit_xy(parse_learner("logistic"), X, t)
        Xb = np.hstack([X, np.ones((300, 1))])
        oracle = minimize(self._mean_logloss(Xb, t), np.zeros(3), method="BFGS")
        assert p.loss_history[-1] <= oracle.fun + 2e-2

    def test_loss_monotone_nonincreasing(self, rng):
        X = rng.normal(size=(120, 4))
        t = (X[:, 0] + 0.3 * rng.normal(size=120) > 0).astype(float)
        p = fit_xy(parse_learner("logistic"), X, t)
        diffs = np.diff(p.loss_history)
        assert np.all(diffs <= 1e-12)


class TestKnn:
    def test_k1_returns_nearest_target(self):
        X = np.array([[0.0], [1.0], [2.0]])
        t = np.array([0.0, 1.0, 0.0])
        p = fit_xy(parse_learner("knn[k=1]"), X, t)
        assert p.score(np.array([0.9])) == 1.0
        assert p.score(np.array([1.8])) == 0.0

    def test_regression_mean_of_neighbours(self):
        X = np.array([[0.0], [0.2], [5.0]])
        t = np.array([1.0, 3.0, 100.0])
        p = fit_xy(parse_learner("knn[k=2,task=reg]"), X, t)
        assert p.score(np.array([0.1])) == pytest.approx(2.0)

    def test_k_clipped_to_training_size(self):
        p = fit_xy(parse_learner("knn[k=50]"), np.array([[0.0], [1.0]]), np.array([0.0, 1.0]))
        assert p.score(np.array([0.5])) == pytest.approx(0.5)


class TestDegenerateAndErrors:
    def test_single_class_laplace_constant(self):
        X = np.array([[0.0], [1.0], [2.0]])
        p = fit_xy(parse_learner("forest"), X, np.ones(3))
        assert p.score(np.array([9.9])) == pytest.approx(4 / 5)
        p0 = fit_xy(parse_learner("logistic"), X, np.zeros(3))
        assert p0.score(np.array([0.0])) == pytest.approx(1 / 5)

    def test_empty_fit_errors(self):
        with pytest.raises(SpecError):
            fit(parse_learner("knn"), [])

    def test_bad_hyperparameters(self):
        with pytest.raises(SpecError):
            fit_xy(LearnerSpec("forest", {"trees": 0}), np.zeros((2, 1)), np.array([0.0, 1.0]))

    def test_dimension_mismatch(self):
        p = fit_xy(parse_learner("knn[k=1]"), np.zeros((2, 3)), np.array([0.0, 1.0]))
        with pytest.raises(SpecError):
            p.score(np.zeros(2))

    def test_non_binary_classification_targets(self):
        with pytest.raises(SpecError):
            fit_xy(parse_learner("logistic"), np.zeros((2, 1)), np.array([0.0, 0.5]))


@pytest.mark.parametrize("spec_text", ["logistic", "knn[k=3]", "forest[trees=5,depth=3]", "stumps[rounds=10]"])
class TestContracts:
    def test_classification_range_and_purity(self, spec_text, rng):
        X = rng.normal(size=(60, 5))
        t = (X[:, 0] > 0).astype(float)
        p = fit_xy(parse_learner(spec_text), X, t)
        Q = rng.normal(size=(40, 5))
        s = p.score_batch(Q)
        assert np.all((s >= 0) & (s <= 1))
        assert np.array_equal(s, p.score_batch(Q))
        x = Q[3]
        assert score(p, x) == score(p, x)

    def test_seeded_determinism(self, spec_text, rng):
        X = rng.normal(size=(50, 4))
        t = (X[:, 1] > 0).astype(float)
        spec = parse_learner(spec_text).with_seed(77)
        Q = rng.normal(size=(20, 4))
        a = fit_xy(spec, X, t).score_batch(Q)
        b = fit_xy(spec, X, t).score_batch(Q)
        assert np.array_equal(a, b)


class TestForest:
    def test_ensemble_average_is_order_independent(self, rng):
        X = rng.normal(size=(80, 3))
        t = (X[:, 0] * X[:, 1] > 0).astype(float)
        p = fit_xy(parse_learner("forest[trees=8,depth=3]").with_seed(5), X, t)
        Q = rng.normal(size=(30, 3))
        from acsel import _split

        per_tree = []
        for tree in p.trees:
            out = np.zeros(30)
            _split.predict_tree(*tree, np.ascontiguousarray(Q), out)
            per_tree.append(out)
        forward = np.mean(per_tree, axis=0)
        backward = np.mean(per_tree[::-1], axis=0)
        assert np.allclose(forward, backward, atol=1e-12)
        assert np.allclose(np.clip(forward, 0, 1), p.score_batch(Q), atol=1e-12)

    def test_learns_interaction(self, rng):
        X = rng.uniform(-1, 1, size=(400, 6))
        t = (X[:, 0] * X[:, 1] > 0).astype(float)
        p = fit_xy(parse_learner("forest[trees=30,depth=6]").with_seed(1), X, t)
        Q = rng.uniform(-1, 1, size=(500, 6))
        truth = (Q[:, 0] * Q[:, 1] > 0).astype(float)
        auc = roc_auc(p, examples_from(Q, truth))
        assert auc > 0.8


class TestRocAuc:
    def test_perfect_and_antiperfect(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        t = np.array([0.0, 0.0, 1.0, 1.0])
        p = fit_xy(parse_learner("knn[k=1]"), X, t)
        holdout = examples_from(X, t)
        assert roc_auc(p, holdout) == 1.0
        flipped = examples_from(X, 1 - t)
        assert roc_auc(p, flipped) == 0.0

    def test_ties_count_half(self):
        class Flat:
            dim = 1

            def score_batch(self, X):
                return np.zeros(X.shape[0])

        holdout = examples_from(np.zeros((10, 1)), np.array([0, 1] * 5, dtype=float))
        assert roc_auc(Flat(), holdout) == pytest.approx(0.5)

    def test_single_class_errors(self):
        p = fit_xy(parse_learner("knn[k=1]"), np.zeros((2, 1)), np.array([0.0, 1.0]))
        with pytest.raises(SpecError):
            roc_auc(p, examples_from(np.zeros((3, 1)), np.ones(3)))

    @pytest.mark.slow
    def test_random_scores_near_half(self, rng):
        # permutation oracle: with scores independent of labels the AUC
        # concentrates at 1/2 with variance (npos+nneg+1)/(12*npos*nneg)
        n = 2000
        labels = np.array([0, 1] * (n // 2), dtype=float)

        class Noise:
            dim = 1

            def __init__(self, rng):
                self._scores = rng.normal(size=n)

            def score_batch(self, X):
                return self._scores[: X.shape[0]]

        auc = roc_auc(Noise(rng), examples_from(np.zeros((n, 1)), labels))
        npos = nneg = n // 2
        se = np.sqrt((npos + nneg + 1) / (12 * npos * nneg))
        assert abs(auc - 0.5) <= 3 * se

    def test_invariant_under_increasing_transform(self, rng):
        X = rng.normal(size=(50, 2))
        t = (rng.random(50) > 0.5).astype(float)
        t[0], t[1] = 0.0, 1.0
        p = fit_xy(parse_learner("logistic"), X, t)
        holdout = examples_from(X, t)
        base = roc_auc(p, holdout)

        class Warped:
            dim = 2

            def score_batch(self_inner, Q):
                return np.exp(3.0 * p.score_batch(Q)) + 7.0

        assert roc_auc(Warped(), holdout) == pytest.approx(base, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_stumps_deterministic_any_seed(seed):
    rng = np.random.default_rng(7)
    X = rng.normal(size=(30, 2))
    t = (X[:, 0] > 0).astype(float)
    spec = parse_learner("stumps[rounds=5]").with_seed(seed)
    a = fit_xy(spec, X, t).score_batch(X)
    b = fit_xy(spec, X, t).score_batch(X)
    assert np.array_equal(a, b)
