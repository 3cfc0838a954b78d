import csv

import numpy as np
import pytest

from core.errors import CoopMpcError
from core.graph import Graph
from core.trajectory import shift_periodic
from ocp.candidate import candidate_blocks
from ocp.problem import build_ocp
from solver.admm import solve_qp_admm, solve_qp_consensus_admm
from solver.guard import suboptimality_guard
from solver.messages import MessageLog
from solver.qp import GraphQp, LocalQp, solve_dense_qp
from solver.settings import AdmmSettings, SqpSettings
from solver.solution import OcpSolution
from solver.sqp import solve, solve_centralized


@pytest.fixture
def problem(oracle_scenario):
    return build_ocp(oracle_scenario, oracle_scenario.x0, None, 0)


@pytest.fixture
def central(problem, oracle_scenario):
    return solve_centralized(problem, None, oracle_scenario.sqp)


class TestQpBackends:
    def test_dense_box_qp(self):
        result = solve_dense_qp(np.eye(2), np.array([-2.0, 0.5]), np.eye(2), -np.ones(2), np.ones(2))
        assert result.converged
        assert result.x == pytest.approx([1.0, -0.5], abs=1e-9)

    def test_dense_equality_row(self):
        c = np.array([[1.0, 1.0]])
        result = solve_dense_qp(np.eye(2), np.zeros(2), c, np.array([1.0]), np.array([1.0]))
        assert result.x == pytest.approx([0.5, 0.5], abs=1e-9)

    def test_admm_box_qp(self):
        result = solve_qp_admm(np.eye(2), np.array([-2.0, 0.5]), np.eye(2), -np.ones(2), np.ones(2))
        assert result.converged
        assert result.x == pytest.approx([1.0, -0.5], abs=1e-5)


def scalar_graph_qp(graph, curvature, linear, bound, coupling):
    """
    One scalar per agent; agent i pays 1/2 h_i x_i^2 + g_i x_i + c (x_i - x_j)^2
    for every neighbour j > i, holding copies of those neighbours' scalars.
    """
    locals_ = []
    for i in range(graph.m):
        later = [j for j in graph.neighbors(i) if j > i]
        size = 1 + len(later)
        H = np.zeros((size, size))
        H[0, 0] = curvature[i]
        for k, _ in enumerate(later, start=1):
            d = np.zeros(size)
            d[0], d[k] = 1.0, -1.0
            H += 2.0 * coupling * np.outer(d, d)
        g = np.zeros(size)
        g[0] = linear[i]
        C = np.zeros((1, size))
        C[0, 0] = 1.0
        links = [(i, np.array([0]), np.array([0]))]
        links += [(j, np.array([k]), np.array([0])) for k, j in enumerate(later, start=1)]
        locals_.append(LocalQp(
            agent=i, H=H, g=g, C=C, l=np.array([-bound[i]]), u=np.array([bound[i]]),
            global_index=np.array([i] + later), own_size=1, links=links,
        ))
    return GraphQp(graph, locals_, [1] * graph.m, graph.m)


class TestConsensusAdmm:
    @pytest.mark.parametrize("a,b", [(1.0, 1.0), (1.0, 3.0)])
    def test_two_agents_agree_on_the_average(self, a, b):
        owner = LocalQp(
            agent=0, H=2.0 * np.eye(1), g=np.array([-2.0 * a]), C=np.eye(1), l=np.array([-10.0]), u=np.array([10.0]),
            global_index=np.array([0]), own_size=1, links=[(0, np.array([0]), np.array([0]))],
        )
        holder = LocalQp(
            agent=1, H=2.0 * np.eye(1), g=np.array([-2.0 * b]), C=np.zeros((0, 1)), l=np.zeros(0), u=np.zeros(0),
            global_index=np.array([0]), own_size=0, links=[(0, np.array([0]), np.array([0]))],
        )
        result = solve_qp_consensus_admm(GraphQp(Graph.path(2), [owner, holder], [1, 0], 1))
        assert result.converged
        assert result.shared[0] == pytest.approx([0.5 * (a + b)], abs=1e-6)
        assert result.w[1] == pytest.approx(result.w[0], abs=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_path_qp_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        graph = Graph.path(4)
        qp_graph = scalar_graph_qp(
            graph,
            curvature=0.5 + 1.5 * rng.random(4),
            linear=2.0 * rng.standard_normal(4),
            bound=0.2 + 0.8 * rng.random(4),
            coupling=0.2 + 0.8 * rng.random(),
        )
        oracle = solve_dense_qp(*qp_graph.to_dense())
        assert oracle.converged

        result = solve_qp_consensus_admm(qp_graph)
        assert result.converged
        assert np.concatenate(result.shared) == pytest.approx(oracle.x, abs=1e-5)
        for qp, state in zip(qp_graph.locals, result.states):
            for owner, positions, indices in qp.links:
                assert state.w[positions] == pytest.approx(result.shared[owner][indices], abs=1e-5)
        assert result.messages.total_bytes > 0


class TestOracle:
    def test_distributed_matches_centralized(self, problem, central, oracle_scenario):
        distributed = solve(problem, None, oracle_scenario.sqp, oracle_scenario.admm)
        assert distributed.feasible and central.feasible
        deviation = np.max(np.abs(problem.join(distributed.blocks) - problem.join(central.blocks)))
        assert deviation <= 1e-5

    def test_solution_improves_on_hold_guess(self, problem, central):
        assert central.status in ("optimal", "suboptimal-feasible")
        assert central.objective <= problem.objective_value(problem.initial_guess()) + 1e-9
        assert central.max_violation <= 1e-6

    def test_first_inputs(self, central):
        inputs = central.first_inputs()
        assert len(inputs) == 3
        assert all(u.shape == (1,) for u in inputs)


class TestCandidate:
    def test_shifted_candidate_is_feasible_and_not_worse(self, oracle_scenario, problem, central):
        x_next = [spec.model.step(x, u) for spec, x, u in zip(oracle_scenario.agents, problem.x0, central.first_inputs())]
        y_pr = [shift_periodic(traj, 1) for traj in central.outputs]
        following = build_ocp(oracle_scenario, x_next, y_pr, 1)
        candidate = candidate_blocks(central, following)
        assert following.max_violation(candidate) <= 1e-6
        assert following.objective_value(candidate) <= central.objective + 1e-9

    def test_candidate_needs_matching_layout(self, oracle_scenario, central):
        longer = build_ocp(oracle_scenario, oracle_scenario.x0, None, 1, N=5)
        with pytest.raises(CoopMpcError):
            candidate_blocks(central, longer)


class TestGuard:
    def test_without_candidate(self, problem, central):
        assert suboptimality_guard(None, central, problem) is central

    def test_keeps_lower_objective(self, problem, central):
        hold = OcpSolution.from_blocks(problem, problem.initial_guess(), status="optimal")
        chosen = suboptimality_guard(central.blocks, hold, problem)
        assert chosen.source == "candidate"
        assert chosen.objective == pytest.approx(central.objective)

    def test_keeps_solver_when_better(self, problem, central):
        chosen = suboptimality_guard(problem.initial_guess(), central, problem)
        assert chosen is central

    def test_infeasible_candidate_ignored(self, problem, central):
        broken = [z.copy() for z in central.blocks]
        broken[0][:] += 100.0
        chosen = suboptimality_guard(broken, central, problem)
        assert chosen is central


class TestMessageLog:
    def test_accounting(self):
        log = MessageLog()
        r = log.next_round()
        log.record(r, 0, 1, 4)
        log.record(r, 1, 1, 100)
        assert len(log) == 1
        assert log.total_bytes == 32
        assert log.rounds == 1

    def test_locality(self):
        log = MessageLog()
        log.record(0, 0, 2, 1)
        with pytest.raises(CoopMpcError):
            log.check_locality(Graph.path(3))
        log.check_locality(Graph.complete(3))

    def test_extend_renumbers_rounds(self):
        first, second = MessageLog(), MessageLog()
        first.next_round()
        second.record(second.next_round(), 1, 0, 2)
        first.extend(second)
        assert first.rounds == 2
        assert first.per_pair_bytes()[(1, 0)] == 16

    def test_csv(self, tmp_path):
        log = MessageLog()
        log.record(0, 0, 1, 3)
        path = tmp_path / "messages.csv"
        log.to_csv(path)
        with open(path, newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows == [["round", "sender", "receiver", "bytes"], ["0", "0", "1", "24"]]

    def test_distributed_solve_stays_on_the_graph(self, problem, oracle_scenario):
        solution = solve(problem, None, oracle_scenario.sqp, oracle_scenario.admm)
        solution.messages.check_locality(problem.graph)
        assert solution.messages.total_bytes > 0


def test_settings_validation():
    with pytest.raises(ValueError):
        SqpSettings(max_iterations=0)
    with pytest.raises(ValueError):
        AdmmSettings(relaxation=2.5)
    assert SqpSettings().qp_solver == "admm"
