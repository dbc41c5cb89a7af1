import numpy as np
import pytest

from acsel.data import SimilarityKernel
from acsel.engine import init, run, screen_next, visible
from acsel.learners import parse_learner
from acsel.policies import (
    PolicyConfig,
    PolicyError,
    RandomSwitchPolicy,
    make_policy,
    naive_select,
    parse_policy,
)

from conftest import make_dataset


class TestGrammar:
    def test_static(self):
        cfg = parse_policy("static:logistic")
        assert cfg.kind == "static" and cfg.learners[0].kind == "logistic"

    def test_refit_with_period(self):
        cfg = parse_policy("refit:forest[trees=10,L=7]")
        assert cfg.kind == "refit" and cfg.period == 7
        assert cfg.learners[0].params == {"trees": 10}

    def test_select_candidates(self):
        cfg = parse_policy("select:(logistic,knn[k=9])[L=20,K=3]")
        assert cfg.kind == "model_select" and len(cfg.learners) == 2
        assert cfg.K == 3 and cfg.period == 20
        assert cfg.learners[1].params == {"k": 9}

    def test_diversity_full(self):
        cfg = parse_policy("div:forest[trees=5,lambda=0.4,kernel=rbf(2),mode=qp,L=6]")
        assert cfg.kind == "diversity" and cfg.lam == 0.4
        assert cfg.kernel == SimilarityKernel("rbf", 2.0)
        assert cfg.mode == "qp" and cfg.period == 6
        assert cfg.learners[0].params == {"trees": 5}

    def test_aug(self):
        cfg = parse_policy("aug:knn[k=3,L=4]")
        assert cfg.kind == "augmented_refit" and cfg.period == 4

    def test_default_periods(self):
        assert parse_policy("refit:logistic").period == 10
        assert parse_policy("select:(logistic,knn)").period == 20

    @pytest.mark.parametrize("bad", [
        "zap:logistic",
        "select:(logistic)",
        "refit:logistic[L=0]",
        "div:logistic[lambda=1.2]",
        "refit",
        "refit:logistic[mode=xx]",
    ])
    def test_errors(self, bad):
        with pytest.raises((PolicyError, Exception)):
            parse_policy(bad)


class TestChooseNext:
    def test_argmin_and_stable_ties(self):
        ds = make_dataset([1.0, -1.0, 2.0, -2.0], [0.5, -0.5], seed=1)
        st = init(ds, k=1, alpha=0.01, seed=2)
        view = visible(st)
        policy = make_policy(parse_policy("refit:logistic[L=100]"))
        policy.update(view)
        policy._last_update = view.step
        # forge scores: tie between the first two pool handles
        handles = view.pool_handles
        policy._scores = {h: 0.5 for h in handles}
        policy._scores[handles[2]] = 0.9
        assert policy.choose(view) == handles[0]

    def test_empty_pool_errors(self):
        ds = make_dataset([1.0, -1.0], [0.5], seed=1)
        st = init(ds, k=0, alpha=0.01, seed=2)
        for e in list(visible(st).anonymous_pool):
            screen_next(st, e.handle)
        policy = make_policy(parse_policy("refit:logistic"))
        with pytest.raises(PolicyError, match="empty pool"):
            policy.choose(visible(st))

    def test_update_cadence(self):
        ds = make_dataset(list(np.linspace(-2, 2, 30)), [0.5, -0.5, 1.0], seed=3)
        policy = make_policy(parse_policy("refit:logistic[L=5]"))
        res = run(ds, 4, 0.001, 5, policy)
        refit_steps = [e.step for e in res.audit if e.event == "refit"]
        assert refit_steps[0] == 4  # first choose happens at step k
        gaps = np.diff(refit_steps)
        assert np.all(gaps >= 5)

    def test_choice_always_in_pool(self, rng):
        ds = make_dataset(list(rng.normal(size=12)), list(rng.normal(size=6)), seed=4)
        st = init(ds, k=3, alpha=0.001, seed=6)
        policy = make_policy(parse_policy("refit:knn[k=3,L=2]"))
        while st.pool_size > 0:
            view = visible(st)
            choice = policy.choose(view)
            assert choice in view.pool_handles
            screen_next(st, choice)


class TestRefit:
    def test_training_set_grows_with_screenings(self):
        ds = make_dataset(list(np.linspace(-2, 2, 24)), [0.5, -0.5], seed=7)
        policy = make_policy(parse_policy("refit:logistic[L=3]"))
        res = run(ds, 5, 0.001, 8, policy)
        rows = [e.payload["rows"] for e in res.audit if e.event == "refit"]
        assert rows[0] == 5
        assert all(b >= a for a, b in zip(rows, rows[1:]))

    def test_consecutive_updates_same_data_same_predictor(self):
        ds = make_dataset([1.0, -1.0, 2.0, -2.0, 0.3], [0.5, -0.5], seed=9)
        st = init(ds, k=3, alpha=0.01, seed=10)
        view = visible(st)
        policy = make_policy(parse_policy("refit:forest[trees=4,depth=2]").with_seed(3))
        policy.update(view)
        first = dict(policy._scores)
        policy.update(view)
        assert policy._scores == first

    def test_augmented_includes_revealed_labels(self):
        ds = make_dataset([1.0, -1.0, 2.0, -2.0], [0.5, -0.5], seed=11)
        from acsel.engine import oracle_reveal_hook

        policy = make_policy(parse_policy("aug:logistic[L=2]"))
        res = run(ds, 2, 0.001, 12, policy, reveal_hook=oracle_reveal_hook)
        rows = [e.payload["rows"] for e in res.audit if e.event == "refit"]
        reveals = len([e for e in res.audit if e.event == "reveal"])
        assert reveals > 0
        # final refit sees labeled screenings plus revealed test labels
        assert rows[-1] > 2

    def test_use_revealed_nonnulls_adds_rows(self):
        ds = make_dataset([1.0, -1.0, 2.0, -2.0, 3.0], [0.5], seed=13)
        st = init(ds, k=1, alpha=0.01, seed=14)
        view = visible(st)
        base = make_policy(parse_policy("refit:logistic"))
        base.update(view)
        rich_cfg = parse_policy("refit:logistic")
        rich = make_policy(PolicyConfig("refit", rich_cfg.learners, use_revealed_nonnulls=True))
        rich.update(view)
        base_rows = base.drain_audit()[-1][1]["rows"]
        rich_rows = rich.drain_audit()[-1][1]["rows"]
        assert rich_rows == base_rows + len(view.revealed_nonnull_labeled)


class TestModelSelect:
    def test_argmax_of_mean_sizes(self, monkeypatch):
        # candidate fold sizes (3,4) vs (5,5): mean 3.5 < 5 picks the second
        ds = make_dataset(list(np.linspace(-2, 2, 12)), [0.5, -0.5], seed=14)
        st = init(ds, k=6, alpha=0.1, seed=15)
        planned = iter([3, 4, 5, 5])

        import acsel.policies as pol

        monkeypatch.setattr(pol, "select_with_scores",
                            lambda cal, scores, alpha: set(range(next(planned))))
        policy = make_policy(parse_policy("select:(logistic,knn[k=3])[K=2]"))
        policy.update(visible(st))
        note = [p for e, p in policy.drain_audit() if e == "model_select"][0]
        assert note["chosen"] == "knn[k=3]"
        assert note["mean_sizes"] == [3.5, 5.0]

    def test_winner_refits_on_all_screened_labeled(self):
        ds = make_dataset(list(np.linspace(-2, 2, 12)), [0.5, -0.5], seed=14)
        st = init(ds, k=6, alpha=0.1, seed=15)
        policy = make_policy(parse_policy("select:(logistic,knn[k=3])[K=3]"))
        policy.update(visible(st))
        assert policy.predictor is not None
        note = [p for e, p in policy.drain_audit() if e == "model_select"][0]
        assert note["rows"] == 6

    def test_identical_candidates_tie_breaks_first(self):
        ds = make_dataset(list(np.linspace(-2, 2, 12)), [0.5, -0.5], seed=15)
        st = init(ds, k=6, alpha=0.1, seed=16)
        policy = make_policy(parse_policy("select:(logistic,logistic)[K=3]"))
        policy.update(visible(st))
        note = [p for e, p in policy.drain_audit() if e == "model_select"][0]
        assert note["chosen"] == "logistic"
        assert note["mean_sizes"][0] == note["mean_sizes"][1]

    def test_one_sample_folds_run(self):
        ds = make_dataset([1.0, -1.0], [0.5], seed=17)
        st = init(ds, k=2, alpha=0.1, seed=18)
        policy = make_policy(parse_policy("select:(logistic,knn[k=1])[K=2]"))
        policy.update(visible(st))  # 2 labeled, 1-sample folds: no error

    def test_fewer_samples_than_folds_errors(self):
        ds = make_dataset([1.0, -1.0, 2.0], [0.5], seed=19)
        st = init(ds, k=2, alpha=0.1, seed=20)
        policy = make_policy(parse_policy("select:(logistic,knn)[K=5]"))
        with pytest.raises(PolicyError, match="K=5"):
            policy.update(visible(st))


class TestDiversityPolicy:
    def test_lambda_zero_matches_refit(self):
        ds = make_dataset(list(np.linspace(-2, 2, 16)), [0.5, -0.5, 0.9], seed=21)
        st = init(ds, k=4, alpha=0.01, seed=22)
        view = visible(st)
        refit = make_policy(parse_policy("refit:logistic").with_seed(5))
        div = make_policy(parse_policy("div:logistic[lambda=0]").with_seed(5))
        assert refit.choose(view) == div.choose(view)

    def test_degenerate_xi_falls_back_with_note(self):
        ds = make_dataset([1.0, -1.0, 2.0, -2.0], [0.5, -0.5], seed=23)
        st = init(ds, k=2, alpha=0.01, seed=24)
        view = visible(st)
        div = make_policy(parse_policy("div:knn[k=4,lambda=0.5]"))
        # constant predictor (all screened labeled same class is not forced
        # here, so force degenerate via uniform scores): knn with k=4 on two
        # screened rows clips to k=2; use a crafted constant-score predictor
        class Flat:
            dim = view.pool_x.shape[1]

            def score_batch(self, X):
                return np.full(X.shape[0], 0.5)

        div.predictor = Flat()
        div._fit_on_view = lambda *a, **k: div.predictor
        div.update(view)
        events = [e for e, _ in div.drain_audit()]
        assert "diversity_fallback" in events

    def test_mixture_matches_direct_computation(self):
        from acsel.data import SimilarityKernel as SK
        from acsel.diversity import build_theta, closed_form_xi

        ds = make_dataset(list(np.linspace(-2, 2, 20)), [0.5, -0.5, 0.9, 1.4], seed=3)
        st = init(ds, k=8, alpha=0.2, seed=4)
        view = visible(st)
        lam = 0.4
        div = make_policy(parse_policy(f"div:logistic[lambda={lam},kernel=rbf(2)]").with_seed(7))
        div.update(view)

        ref = make_policy(parse_policy("refit:logistic").with_seed(7))
        ref.update(view)
        delta = np.array([ref._scores[h] for h in view.pool_handles])
        problem = build_theta(delta, view.pool_x, SK("rbf", 2.0), alpha=view.alpha)
        xi = closed_form_xi(problem)
        assert not xi.degenerate
        expected = lam * xi.xi_work + (1 - lam) * delta
        got = np.array([div._scores[h] for h in view.pool_handles])
        assert np.allclose(got, expected, atol=1e-12)

    def test_isolated_high_promise_point_is_kept(self):
        # well-conditioned 3-point pool: two similar candidates, one distant;
        # pure-diversity scoring must keep the isolated one at least as much
        from acsel.data import SimilarityKernel as SK
        from acsel.diversity import build_theta, closed_form_xi

        X = np.array([[0.0, 0.0], [0.5, 0.0], [4.0, 0.0]])
        delta = np.array([0.8, 0.75, 0.8])
        problem = build_theta(delta, X, SK("rbf", 1.0), alpha=0.2)
        xi = closed_form_xi(problem)
        assert not xi.degenerate
        assert xi.xi_work[2] >= xi.xi_work[0]
        assert xi.xi_work[2] >= xi.xi_work[1]

    def test_qp_mode_runs(self):
        ds = make_dataset(list(np.linspace(-2, 2, 14)), [0.5, -0.5], seed=25)
        st = init(ds, k=4, alpha=0.01, seed=26)
        div = make_policy(parse_policy("div:logistic[lambda=0.5,mode=qp]"))
        div.update(visible(st))
        assert div._scores


class TestAdversarial:
    def test_screens_most_promising_first(self):
        ds = make_dataset(list(np.linspace(-2, 2, 16)), [0.5, -0.5], seed=27)
        st = init(ds, k=4, alpha=0.01, seed=28)
        view = visible(st)
        adv = make_policy(parse_policy("adversarial:logistic").with_seed(1))
        ref = make_policy(parse_policy("refit:logistic").with_seed(1))
        adv_choice = adv.choose(view)
        ref.update(view)
        worst = max(view.pool_handles, key=lambda h: ref._scores[h])
        assert adv_choice == worst


class TestReplayPurity:
    def test_view_sequence_replays_to_identical_choices(self):
        ds = make_dataset(list(np.linspace(-2, 2, 20)), [0.5, -0.5, 0.7], seed=29)

        views, choices = [], []

        class Recorder:
            def __init__(self, inner):
                self.inner = inner

            def choose(self, view):
                c = self.inner.choose(view)
                views.append(view)
                choices.append(c)
                return c

            def drain_audit(self):
                return self.inner.drain_audit()

        spec = parse_policy("select:(logistic,knn[k=3])[L=4,K=2]").with_seed(33)
        run(ds, 5, 0.001, 30, Recorder(make_policy(spec)))
        fresh = make_policy(spec)
        replayed = [fresh.choose(v) for v in views]
        assert replayed == choices


class TestNaiveSelect:
    def test_interpolator_wins(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(20, 2))
        t = (X[:, 0] > 0).astype(float)
        specs = [parse_learner("logistic"), parse_learner("knn[k=1]")]
        assert naive_select(X, t, specs).kind == "knn"  # k=1 interpolates: error 0

    def test_tie_prefers_first(self):
        X = np.array([[0.0], [1.0]])
        t = np.array([0.0, 1.0])
        specs = [parse_learner("knn[k=1]"), parse_learner("knn[k=1]")]
        chosen = naive_select(X, t, specs)
        assert chosen is specs[0]

    def test_single_candidate(self):
        X = np.array([[0.0], [1.0]])
        t = np.array([0.0, 1.0])
        spec = parse_learner("logistic")
        assert naive_select(X, t, [spec]) is spec


class TestRandomSwitch:
    def test_runs_and_is_deterministic(self):
        ds = make_dataset(list(np.linspace(-2, 2, 18)), [0.5, -0.5], seed=31)
        configs = [parse_policy("refit:logistic[L=3]").with_seed(1),
                   parse_policy("refit:knn[k=3,L=2]").with_seed(2)]
        a = run(ds, 4, 0.001, 32, RandomSwitchPolicy(configs, seed=9))
        b = run(ds, 4, 0.001, 32, RandomSwitchPolicy(configs, seed=9))
        assert a.to_dict() == b.to_dict()
