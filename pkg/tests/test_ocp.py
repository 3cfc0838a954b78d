import numpy as np
import pytest

from core.errors import ConfigurationError, DimensionMismatchError, SynthesisError
from core.trajectory import PeriodicTrajectory
from models.base import Box
from models.library import double_integrator
from ocp.costs import StageCost, min_stage_cost
from ocp.layout import BlockLayout
from ocp.problem import build_ocp
from ocp.terminal import TerminalIngredients, lqr_terminal_synthesis


class TestBlockLayout:
    def test_sections_are_contiguous(self):
        layout = BlockLayout(horizon=4, period=2, n=2, q=1, p=1, a=3)
        assert layout.u == slice(0, 4)
        assert layout.y == slice(4, 6)
        assert layout.aux == slice(6, 9)
        assert layout.coop == slice(4, 9)
        assert layout.x_ref == slice(9, 13)
        assert layout.u_ref == slice(13, 15)
        assert layout.size == 15

    def test_assemble_checks_size(self):
        layout = BlockLayout(horizon=1, period=1, n=2, q=1, p=1)
        z = layout.assemble([0.5], [1.0], [], [1.0, 0.0], [0.0])
        assert layout.inputs(z).tolist() == [[0.5]]
        assert layout.ref_states(z).tolist() == [[1.0, 0.0]]
        with pytest.raises(DimensionMismatchError):
            layout.assemble([0.5, 0.5], [1.0], [], [1.0, 0.0], [0.0])

    def test_zero_horizon(self):
        layout = BlockLayout(horizon=0, period=1, n=2, q=1, p=1)
        assert layout.inputs(np.zeros(layout.size)).shape == (0, 1)


class TestStageCost:
    def test_value(self):
        cost = StageCost.diagonal([1.0, 2.0], [0.5])
        assert cost([1.0, 1.0], [2.0], [0.0, 0.0], [0.0]) == pytest.approx(5.0)

    def test_r_must_be_positive_definite(self):
        with pytest.raises(ConfigurationError):
            StageCost.diagonal([1.0], [0.0])

    def test_q_must_be_square(self):
        with pytest.raises(DimensionMismatchError):
            StageCost(np.ones((1, 2)), np.eye(1))

    def test_min_stage_cost_clips_reference_input(self):
        cost = StageCost.diagonal([1.0], [1.0])
        box = Box.symmetric([1.0])
        assert min_stage_cost(cost, [2.0], [0.0], [3.0], box) == pytest.approx(4.0 + 4.0)
        assert min_stage_cost(cost, [2.0], [0.0], [0.5], box) == pytest.approx(4.0)


class TestTerminal:
    def test_equality_mode(self):
        terminal = TerminalIngredients.equality()
        assert terminal.is_equality
        assert terminal.cost([1.0], [0.0]) == 0.0
        assert terminal.control([1.0], [0.0], [0.3]).tolist() == [0.3]
        assert terminal.contains([0.0], [0.0])
        assert not terminal.contains([1.0], [0.0])

    def test_quadratic_needs_ingredients(self):
        with pytest.raises(ConfigurationError):
            TerminalIngredients(mode="quadratic", P=np.eye(1), K=None, alpha=1.0)
        with pytest.raises(ConfigurationError):
            TerminalIngredients(mode="ellipse")

    def test_lqr_synthesis_decreases(self):
        model = double_integrator(dim=1, h=0.5)
        cost = StageCost.diagonal([1.0, 0.1], [0.1])
        x_ref, u_ref = np.zeros(2), np.zeros(1)
        terminal = lqr_terminal_synthesis(model, x_ref, u_ref, cost, state_margin=[1.0, 0.5], input_margin=[0.2])
        assert terminal.mode == "quadratic"
        assert terminal.alpha > 0.0
        assert np.all(np.linalg.eigvalsh(terminal.P) > 0.0)
        x = np.array([0.05, -0.02])
        u = terminal.control(x, x_ref, u_ref)
        x_next = model.step(x, u)
        decrease = terminal.cost(x_next, x_ref) - terminal.cost(x, x_ref)
        assert decrease <= -cost(x, u, x_ref, u_ref) + 1e-9

    def test_synthesis_needs_equilibrium(self):
        model = double_integrator(dim=1, h=0.5)
        cost = StageCost.diagonal([1.0, 0.1], [0.1])
        with pytest.raises(SynthesisError):
            lqr_terminal_synthesis(model, np.array([0.0, 1.0]), np.zeros(1), cost)


class TestProblem:
    def test_hold_guess_is_feasible(self, oracle_scenario):
        problem = build_ocp(oracle_scenario, oracle_scenario.x0, None, 0)
        guess = problem.initial_guess()
        assert problem.sizes == [8, 8, 8]
        assert problem.max_violation(guess) <= 1e-9

    def test_objective_of_hold_guess(self, oracle_scenario):
        problem = build_ocp(oracle_scenario, oracle_scenario.x0, None, 0)
        costs = problem.agent_costs(problem.initial_guess())
        assert [c.tracking for c in costs] == pytest.approx([0.0, 0.0, 0.0])
        assert sum(c.cooperation for c in costs) == pytest.approx(4.0)
        assert problem.scaling == pytest.approx(5.0)
        assert problem.objective_value(problem.initial_guess()) == pytest.approx(20.0)

    def test_change_penalty_only_with_previous_outputs(self, oracle_scenario):
        zeros = [PeriodicTrajectory(np.zeros((1, 1))) for _ in range(3)]
        problem = build_ocp(oracle_scenario, oracle_scenario.x0, zeros, 1)
        assert problem.change_active
        costs = problem.agent_costs(problem.initial_guess())
        assert sum(c.change for c in costs) == pytest.approx(2e-4)

    def test_period_must_match_objective(self, oracle_scenario):
        with pytest.raises(ConfigurationError):
            build_ocp(oracle_scenario, oracle_scenario.x0, None, 0, T=2)

    def test_state_size_checked(self, oracle_scenario):
        with pytest.raises(DimensionMismatchError):
            build_ocp(oracle_scenario, [np.zeros(3)] * 3, None, 0)

    def test_completeness_audit(self, oracle_scenario):
        problem = build_ocp(oracle_scenario, oracle_scenario.x0, None, 0)
        counts = problem.completeness_audit()
        assert counts["path"] > 0 and counts["terminal"] > 0
        assert counts["coupling"] == 0
        assert not problem.has_nonconvex_constraints

    def test_split_and_decode(self, oracle_scenario):
        problem = build_ocp(oracle_scenario, oracle_scenario.x0, None, 0)
        guess = problem.initial_guess()
        blocks = problem.split(problem.join(guess))
        assert all(np.array_equal(a, b) for a, b in zip(blocks, guess))
        decoded = problem.decode(guess)
        assert decoded["states"][0].shape == (5, 2)
        assert decoded["outputs"][2].samples.tolist() == [[1.0]]
        with pytest.raises(DimensionMismatchError):
            problem.split(np.zeros(5))

    def test_zero_horizon(self, oracle_scenario):
        problem = build_ocp(oracle_scenario, oracle_scenario.x0, None, 0, N=0)
        assert problem.sizes == [4, 4, 4]
        assert problem.scaling == pytest.approx(1.0)
        problem.completeness_audit(("reference", "admissible"))


class TestReferenceConstraints:
    def test_hold_reference_is_consistent(self):
        from ocp.constraints import reference_consistency_constraints

        model = double_integrator(dim=1, h=0.5)
        x_ref = PeriodicTrajectory(np.array([[0.4, 0.0], [0.4, 0.0]]))
        u_ref = PeriodicTrajectory(np.zeros((2, 1)))
        y_ref = PeriodicTrajectory(np.array([[0.4], [0.4]]))
        residuals = reference_consistency_constraints(model, x_ref, u_ref, y_ref)
        assert np.max(np.abs(residuals["dynamics"])) == pytest.approx(0.0)
        assert np.max(np.abs(residuals["output"])) == pytest.approx(0.0)
        assert np.all(residuals["admissible"] <= 0.0)

    def test_moving_reference_breaks_dynamics(self):
        from ocp.constraints import reference_consistency_constraints

        model = double_integrator(dim=1, h=0.5)
        x_ref = PeriodicTrajectory(np.array([[0.0, 0.5]]))
        residuals = reference_consistency_constraints(
            model, x_ref, PeriodicTrajectory(np.zeros((1, 1))), PeriodicTrajectory(np.zeros((1, 1)))
        )
        assert np.max(np.abs(residuals["dynamics"])) > 0.1

    def test_tightened_coupling(self):
        from core.graph import Graph
        from models.base import min_distance
        from ocp.constraints import tightened_coupling_constraints

        coupling = min_distance(0.8, selector=[0], eta=0.05)
        apart = [PeriodicTrajectory(np.array([[0.0, 0.0]])), PeriodicTrajectory(np.array([[2.0, 0.0]]))]
        rows = tightened_coupling_constraints(coupling, apart, Graph.path(2))
        assert all(np.all(r < 0.0) for r in rows.values())
        close = [PeriodicTrajectory(np.array([[0.0, 0.0]])), PeriodicTrajectory(np.array([[0.8, 0.0]]))]
        rows = tightened_coupling_constraints(coupling, close, Graph.path(2))
        assert rows[0][0] == pytest.approx(0.05)
        with pytest.raises(ConfigurationError):
            tightened_coupling_constraints(coupling, apart, Graph.path(2), eta=0.0)
