import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import finite_difference_gradient
from sketchnewton.kkt import delta_trial
from sketchnewton.merit import (
    LineSearchError,
    PenaltyState,
    armijo_backtrack,
    armijo_core,
    descent_ok,
    merit_gradient,
    merit_value,
    update_penalty,
)
from sketchnewton.problems import Iterate


def penalty(eta1=1.0, eta2=0.1, delta=0.1, nu=1.5, beta=0.1):
    return PenaltyState(eta1, eta2, delta, nu, beta)


class TestPenaltyState:
    def test_validation(self):
        with pytest.raises(ValueError):
            penalty(eta1=-1.0)
        with pytest.raises(ValueError):
            penalty(delta=1.0)
        with pytest.raises(ValueError):
            penalty(nu=1.0)
        with pytest.raises(ValueError):
            penalty(beta=0.5)


class TestMeritValue:
    def test_vanishing_penalties_at_kkt_point(self, unit_qp):
        z = Iterate(np.array([0.5, 0.5]), np.array([-0.5]))
        assert merit_value(unit_qp, z, 7.0, 3.0) == pytest.approx(0.25)

    def test_hand_value_at_origin(self, unit_qp, qp_origin):
        assert merit_value(unit_qp, qp_origin, 1.0, 0.1) == pytest.approx(0.5)

    def test_zero_penalties_give_plain_lagrangian(self, unit_qp):
        z = Iterate(np.array([1.0, 2.0]), np.array([3.0]))
        # L = f + lam' c = 2.5 + 3 * 2
        assert merit_value(unit_qp, z, 0.0, 0.0) == pytest.approx(8.5)

    def test_consumes_one_obj_cons_and_one_grad_jac(self, unit_qp, qp_origin):
        before = unit_qp.counters.snapshot()
        merit_value(unit_qp, qp_origin, 1.0, 0.1)
        after = unit_qp.counters.snapshot()
        assert after[0] - before[0] == 1
        assert after[1] - before[1] == 1
        assert after[2] - before[2] == 0


class TestMeritGradient:
    def test_zero_at_kkt_point(self, unit_qp):
        z = Iterate(np.array([0.5, 0.5]), np.array([-0.5]))
        assert np.allclose(merit_gradient(unit_qp, z, 1.0, 0.1), 0.0, atol=1e-14)

    def test_hand_value_at_origin(self, unit_qp, qp_origin):
        g = merit_gradient(unit_qp, qp_origin, 1.0, 0.1)
        assert np.allclose(g, [-1.0, -1.0, -1.0])

    def test_eta2_zero_reduces_to_classical_form(self, unit_qp):
        z = Iterate(np.array([1.0, -2.0]), np.array([0.5]))
        g = merit_gradient(unit_qp, z, 2.0, 0.0)
        grad_x_lag = z.x + np.array([0.5, 0.5])
        c = np.array([1.0 - 2.0 - 1.0])
        assert np.allclose(g[:2], grad_x_lag + 2.0 * np.array([1.0, 1.0]) * c)
        assert np.allclose(g[2:], c)

    @pytest.mark.parametrize("problem_name", ["qp", "logreg", "pde"])
    def test_matches_finite_differences(self, problem_name, unit_qp, logreg_problem, pde_problem):
        problem = {"qp": unit_qp, "logreg": logreg_problem, "pde": pde_problem}[problem_name]
        rng = np.random.default_rng(17)
        eta1, eta2 = 1.0, 0.1
        for _ in range(10):
            v = rng.uniform(-0.5, 0.5, problem.n + problem.m)
            z = Iterate(v[: problem.n], v[problem.n :])
            g = merit_gradient(problem, z, eta1, eta2)

            def phi(w):
                return merit_value(
                    problem, Iterate.from_stacked(w, problem.n, problem.m), eta1, eta2
                )

            fd = finite_difference_gradient(phi, v, h=1e-6)
            assert np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(g)) < 1e-5


class TestDescentOk:
    def test_newton_direction_at_origin(self, unit_qp, qp_origin):
        g = merit_gradient(unit_qp, qp_origin, 1.0, 0.1)
        assert descent_ok(g, np.array([0.5, 0.5, -0.5]), 0.1, kkt_norm=1.0)

    def test_zero_step_fails_when_not_stationary(self):
        assert not descent_ok(np.array([1.0, 1.0]), np.zeros(2), 0.1, kkt_norm=1.0)

    def test_steepest_descent_with_tiny_eta2(self):
        g = np.array([2.0, -1.0])
        assert descent_ok(g, -g, eta2=1e-12, kkt_norm=1.0)

    def test_true_implies_negative_directional_derivative(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            g = rng.standard_normal(4)
            dz = rng.standard_normal(4)
            if descent_ok(g, dz, 0.1, kkt_norm=0.5):
                assert g @ dz < 0


class TestUpdatePenalty:
    def test_worked_example(self):
        p = penalty(eta1=1.0, eta2=0.1, delta=0.01, nu=1.5)
        out = update_penalty(p, lambda e1, e2: 0.5)
        assert out.eta1 == pytest.approx(2.25)
        assert out.eta2 == pytest.approx(0.1 / 1.5)
        assert out.delta == pytest.approx(0.01 / 1.5**4)

    def test_delta_capped_by_trial(self):
        p = penalty(delta=0.4)
        out = update_penalty(p, lambda e1, e2: 1e-5)
        assert out.delta == pytest.approx(1e-5)

    @given(
        st.floats(min_value=1e-3, max_value=1e3),
        st.floats(min_value=1e-3, max_value=1e2),
        st.floats(min_value=1e-6, max_value=0.99),
        st.floats(min_value=1.01, max_value=4.0),
    )
    @settings(max_examples=80, deadline=None)
    def test_exact_arithmetic_invariants(self, eta1, eta2, delta, nu):
        p = PenaltyState(eta1, eta2, delta, nu, 0.1)
        out = update_penalty(p, lambda e1, e2: float("inf"))
        assert out.eta1 > p.eta1
        assert out.eta2 < p.eta2
        assert out.eta1 * out.eta2 == pytest.approx(p.eta1 * p.eta2 * nu)
        before = p.delta * p.eta1 / p.eta2
        after = out.delta * out.eta1 / out.eta2
        assert after <= before / nu * (1 + 1e-12)


class TestArmijo:
    def test_unit_step_accepted_on_qp(self, unit_qp, qp_origin):
        p = penalty()
        g = merit_gradient(unit_qp, qp_origin, p.eta1, p.eta2)
        dz = np.array([0.5, 0.5, -0.5])
        alpha = armijo_backtrack(unit_qp, qp_origin, dz, p, dir_deriv=float(g @ dz))
        assert alpha == 1.0

    def test_worked_inequality(self, unit_qp, qp_origin):
        # phi(1) = 0.25 <= 0.5 + 0.1 * (-0.5) = 0.45
        p = penalty()
        z1 = Iterate(np.array([0.5, 0.5]), np.array([-0.5]))
        assert merit_value(unit_qp, z1, p.eta1, p.eta2) <= 0.5 + p.beta * (-0.5)

    def test_inconsistent_inputs_rejected(self, unit_qp, qp_origin):
        p = penalty()
        with pytest.raises(LineSearchError):
            armijo_backtrack(unit_qp, qp_origin, np.zeros(3), p, dir_deriv=-1.0)

    def test_nonnegative_dir_deriv_rejected(self, unit_qp, qp_origin):
        p = penalty()
        with pytest.raises(LineSearchError):
            armijo_backtrack(unit_qp, qp_origin, np.ones(3), p, dir_deriv=0.0)

    def test_returned_alpha_satisfies_condition(self, unit_qp):
        # a poor direction forces backtracking; re-assert the inequality
        p = penalty(beta=0.4)
        z = Iterate(np.array([4.0, -3.0]), np.array([1.0]))
        g = merit_gradient(unit_qp, z, p.eta1, p.eta2)
        dz = -g * 4.0  # overlong steepest descent step
        dd = float(g @ dz)
        phi0 = merit_value(unit_qp, z, p.eta1, p.eta2)
        alpha = armijo_backtrack(unit_qp, z, dz, p, dir_deriv=dd)
        trial = Iterate.from_stacked(z.stacked() + alpha * dz, 2, 1)
        assert merit_value(unit_qp, trial, p.eta1, p.eta2) <= phi0 + alpha * p.beta * dd
        assert alpha < 1.0

    def test_armijo_core_halves(self):
        calls = []

        def phi(a):
            calls.append(a)
            return 1.0 if a > 0.3 else 0.5

        alpha, value = armijo_core(phi, phi0=1.0, dir_deriv=-1.0, beta=0.4)
        assert alpha == 0.25
        assert value == 0.5
        assert calls == [1.0, 0.5, 0.25]
