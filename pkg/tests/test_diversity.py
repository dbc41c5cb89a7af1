import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acsel.data import SimilarityKernel
from acsel.diversity import (
    DiversityProblem,
    DivoptError,
    build_theta,
    closed_form_xi,
    qp_xi,
    softmax,
    working_rule,
)


def rbf_instance(seed, nn=None, alpha=0.1, ridge=1e-6):
    rng = np.random.default_rng(seed)
    nn = nn or int(rng.integers(3, 21))
    X = rng.normal(size=(nn, 3))
    delta = rng.uniform(0.05, 0.95, nn)
    return build_theta(delta, X, SimilarityKernel("rbf", 2.0), ridge=ridge, alpha=alpha)


def kkt_oracle(theta, delta, alpha):
    """Generic equality-constrained QP oracle: one bordered KKT solve for
    min g'Theta g subject to g'1 = 1/(1-alpha), g'delta = 1."""
    nn = delta.size
    ones = np.ones(nn)
    K = np.zeros((nn + 2, nn + 2))
    K[:nn, :nn] = 2.0 * theta
    K[:nn, nn] = ones
    K[:nn, nn + 1] = delta
    K[nn, :nn] = ones
    K[nn + 1, :nn] = delta
    rhs = np.zeros(nn + 2)
    rhs[nn] = 1.0 / (1.0 - alpha)
    rhs[nn + 1] = 1.0
    return np.linalg.solve(K, rhs)[:nn]


class TestBuildTheta:
    def test_indicator_kernel_is_diagonal(self):
        delta = np.array([0.5, 0.8])
        X = np.array([[0.0, 1.0], [2.0, 3.0]])
        p = build_theta(delta, X, SimilarityKernel("indicator", None), ridge=0.01)
        assert np.allclose(p.theta, np.diag(delta**2) + 0.01 * np.eye(2))

    def test_zero_delta_gives_ridge_only(self):
        p = build_theta(np.zeros(3), np.eye(3), SimilarityKernel("indicator", None), ridge=0.5)
        assert np.allclose(p.theta, 0.5 * np.eye(3))

    def test_rbf_self_entries(self):
        delta = np.array([0.3, 0.9])
        X = np.array([[0.0], [1.0]])
        p = build_theta(delta, X, SimilarityKernel("rbf", 5.0), ridge=1e-4)
        assert p.theta[0, 0] == pytest.approx(0.09 + 1e-4)
        assert p.theta[1, 1] == pytest.approx(0.81 + 1e-4)

    def test_cosine_shifted_into_unit_interval(self):
        delta = np.array([1.0, 1.0])
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])  # cosine = -1 -> shifted 0
        p = build_theta(delta, X, SimilarityKernel("cosine", None), ridge=0.0)
        assert p.theta[0, 1] == pytest.approx(0.0)

    def test_delta_out_of_range_errors(self):
        with pytest.raises(DivoptError):
            build_theta(np.array([0.5, 1.4]), np.eye(2), SimilarityKernel("indicator", None))


class TestClosedForm:
    def test_two_point_indicator_example(self):
        # exact solution worked out by hand: xi0 = (250/729, 0)
        delta = np.array([0.9, 0.6])
        p = build_theta(delta, np.array([[0.0], [1.0]]), SimilarityKernel("indicator", None),
                        ridge=0.0, alpha=0.1)
        scores = closed_form_xi(p)
        assert scores.xi_star[0] == pytest.approx(250 / 729, abs=1e-12)
        assert scores.xi_star[1] == pytest.approx(0.0, abs=1e-12)
        xi = scores.xi_star
        assert (xi * (1 - delta)).sum() == pytest.approx(0.1 * xi.sum(), abs=1e-12)

    def test_uniform_delta_degenerates(self):
        delta = np.full(4, 0.6)
        p = build_theta(delta, np.eye(4), SimilarityKernel("indicator", None), ridge=0.0)
        scores = closed_form_xi(p)
        assert scores.degenerate
        assert np.allclose(scores.xi_work, 0.0)

    def test_constraint_satisfied_when_not_degenerate(self):
        for seed in range(25):
            p = rbf_instance(seed)
            scores = closed_form_xi(p)
            if scores.degenerate:
                continue
            xi = scores.xi_star
            lhs = float((xi * (1 - p.delta)).sum())
            rhs = float(p.alpha * xi.sum())
            assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(rhs))

    def test_kkt_linear_constraints(self):
        for seed in range(25):
            p = rbf_instance(seed + 100)
            scores = closed_form_xi(p)
            ones = np.ones(p.delta.size)
            z1 = np.linalg.solve(p.theta, ones)
            z2 = np.linalg.solve(p.theta, p.delta)
            a, b, c = p.delta @ z1, p.delta @ z2, ones @ z1
            denom = b * c - a * a
            if abs(denom) < 1e-12:
                continue
            gamma = scores.xi_star / denom
            assert abs(gamma.sum() - 1 / (1 - p.alpha)) <= 1e-8
            assert abs(gamma @ p.delta - 1.0) <= 1e-8

    def test_singular_theta_raises(self):
        theta = np.zeros((2, 2))
        with pytest.raises(DivoptError, match="ridge"):
            closed_form_xi(DiversityProblem(np.array([0.5, 0.5]), theta, 0.1, 0.0))

    @pytest.mark.slow
    def test_matches_equality_constrained_solvers(self):
        # two independent oracles for the same equality-constrained program:
        # the generic bordered KKT solve (machine precision) and SLSQP
        from scipy.optimize import minimize

        checked = 0
        for seed in range(40):
            p = rbf_instance(seed + 500)
            scores = closed_form_xi(p)
            if scores.degenerate:
                continue
            nn = p.delta.size
            gamma_kkt = kkt_oracle(p.theta, p.delta, p.alpha)
            u = scores.xi_star / np.linalg.norm(scores.xi_star)
            v = gamma_kkt / np.linalg.norm(gamma_kkt)
            err = min(np.abs(u - v).max(), np.abs(u + v).max())
            assert err <= 1e-6, f"seed {seed}: kkt {err}"

            cons = [
                {"type": "eq", "fun": lambda g: g.sum() - 1 / (1 - p.alpha)},
                {"type": "eq", "fun": lambda g, d=p.delta: g @ d - 1.0},
            ]
            res = minimize(
                lambda g: g @ p.theta @ g, np.ones(nn) / nn,
                jac=lambda g: 2 * p.theta @ g,
                method="SLSQP", constraints=cons,
                options={"maxiter": 1000, "ftol": 1e-14},
            )
            w = res.x / np.linalg.norm(res.x)
            err2 = min(np.abs(u - w).max(), np.abs(u + w).max())
            assert err2 <= 1e-4, f"seed {seed}: slsqp {err2}"
            checked += 1
        assert checked >= 30


class TestWorkingRule:
    def test_clip_and_scale(self):
        xi, degenerate = working_rule(np.array([-1.0, 2.0, 4.0]))
        assert np.allclose(xi, [0.0, 0.5, 1.0])
        assert not degenerate

    def test_nonpositive_max_degenerates(self):
        xi, degenerate = working_rule(np.array([-3.0, -1.0]))
        assert np.allclose(xi, 0.0) and degenerate

    def test_single_element(self):
        xi, degenerate = working_rule(np.array([5.0]))
        assert np.allclose(xi, [1.0]) and not degenerate

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=8), st.floats(0.1, 7.0))
    @settings(max_examples=60, deadline=None)
    def test_scale_invariance(self, values, scale):
        xi = np.array(values)
        a, da = working_rule(xi)
        b, db = working_rule(scale * xi)
        assert da == db
        assert np.allclose(a, b, atol=1e-9)


class TestQp:
    def test_symmetric_instance(self):
        p = DiversityProblem(np.array([1.0, 1.0]), np.eye(2), 0.1, 0.0)
        scores = qp_xi(p)
        assert np.allclose(scores.xi_star, [0.5, 0.5], atol=1e-6)

    def test_diagonal_weights(self):
        # stationarity 2*xi1 = 8*xi2 under xi1 + xi2 = 1 gives (0.8, 0.2)
        p = DiversityProblem(np.array([1.0, 1.0]), np.diag([1.0, 4.0]), 0.1, 0.0)
        scores = qp_xi(p)
        assert np.allclose(scores.xi_star, [0.8, 0.2], atol=1e-3)
        assert float(scores.xi_star @ p.theta @ scores.xi_star) == pytest.approx(0.8, abs=1e-7)

    def test_matches_grid_oracle(self):
        # brute-force oracle over the feasible segment xi = (t, (1-t)/0.01)...
        # parametrise by xi1 = t: xi2 = (1 - t*1.0)/0.01 must be >= 0
        delta = np.array([1.0, 0.01])
        theta = np.eye(2)
        p = DiversityProblem(delta, theta, 0.1, 0.0)
        scores = qp_xi(p)
        ts = np.linspace(0.0, 1.0, 200_001)
        x2 = (1.0 - ts) / 0.01
        objs = ts**2 + x2**2
        best = np.argmin(objs)
        assert abs(float(scores.xi_star @ delta) - 1.0) <= 1e-8
        assert scores.xi_star[0] == pytest.approx(ts[best], abs=1e-3)

    def test_feasibility_and_monotone_objective(self):
        for seed in range(10):
            p = rbf_instance(seed + 900, alpha=0.2)
            scores = qp_xi(p)
            assert np.all(scores.xi_star >= 0)
            assert abs(scores.xi_star @ p.delta - 1.0) <= 1e-8

    def test_zero_delta_infeasible(self):
        p = DiversityProblem(np.zeros(2), np.eye(2), 0.1, 0.0)
        with pytest.raises(DivoptError, match="infeasible"):
            qp_xi(p)

    def test_qp_beats_clipped_closed_form(self):
        for seed in range(15):
            p = rbf_instance(seed + 300)
            cf = closed_form_xi(p)
            if cf.degenerate:
                continue
            mapped = np.maximum(cf.xi_star, 0.0)
            s = mapped @ p.delta
            if s <= 0:
                continue
            mapped = mapped / s
            qp = qp_xi(p)
            obj_qp = float(qp.xi_star @ p.theta @ qp.xi_star)
            obj_cf = float(mapped @ p.theta @ mapped)
            assert obj_qp <= obj_cf + 1e-9


class TestSoftmax:
    def test_symmetry(self):
        assert np.allclose(softmax([0.0, 0.0]), [0.5, 0.5])

    def test_direct_value(self):
        out = softmax([1.0, 0.0])
        assert out[0] == pytest.approx(0.73106, abs=1e-5)
        assert out[1] == pytest.approx(0.26894, abs=1e-5)

    def test_shift_stability(self):
        out = softmax([1000.0, 0.0])
        assert np.isfinite(out).all()
        assert out[0] == pytest.approx(1.0)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=10))
    @settings(max_examples=60, deadline=None)
    def test_simplex_output(self, scores):
        out = softmax(scores)
        assert np.all(out > 0) and np.all(out < 1.0 + 1e-12)
        assert out.sum() == pytest.approx(1.0)
