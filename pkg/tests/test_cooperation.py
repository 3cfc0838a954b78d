import math

import numpy as np
import pytest

from cooperation.candidates import CooperationSet, estimate_W0, project, projected_gradient_candidate
from cooperation.objectives import (
    OBJECTIVES,
    CooperationObjective,
    assemble_hessian,
    build_objective,
    eval_coop_cost,
    eval_coop_gradient,
    flatten,
    pack,
    pseudo_huber,
    shift_invariance_gap,
    split,
    unpack,
)
from cooperation.penalties import ChangePenalty, Scaling, eval_change_penalty
from core.errors import ConfigurationError, DimensionMismatchError
from core.graph import Graph
from core.trajectory import PeriodicTrajectory
from models.base import Box
from solver.qp import solve_dense_qp


def numeric_gradient(objective, v, h=1e-6):
    flat = flatten(v)
    grad = np.zeros(flat.size)
    for k in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[k] += h
        minus[k] -= h
        grad[k] = (objective.evaluate(split(objective, plus)) - objective.evaluate(split(objective, minus))) / (2 * h)
    return grad


def random_vector(objective, rng):
    return {i: rng.standard_normal(objective.size(i)) for i in range(objective.m)}


class TestConsensus:
    def test_value(self, path3):
        objective = build_objective("consensus", path3, 2, output_dim=1)
        y = [PeriodicTrajectory(np.zeros((2, 1))), PeriodicTrajectory(np.ones((2, 1))), PeriodicTrajectory(np.ones((2, 1)))]
        assert eval_coop_cost(objective, y) == pytest.approx(4.0)
        assert objective.minimum() == 0.0

    def test_gradient(self, path3, rng):
        objective = build_objective("consensus", path3, 3, output_dim=2, weight=0.5)
        v = random_vector(objective, rng)
        assert flatten(objective.gradient(v)) == pytest.approx(numeric_gradient(objective, v), abs=1e-5)

    def test_hessian_is_scaled_laplacian(self, path3):
        objective = build_objective("consensus", path3, 1, output_dim=1)
        laplacian = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
        v = {i: np.zeros(1) for i in range(3)}
        assert assemble_hessian(objective, v) == pytest.approx(4.0 * laplacian)


class TestSatellitePhase:
    def test_spread_configuration_is_optimal(self, path3):
        objective = build_objective("satellite_phase", path3, 1, spacing_deg=45.0)
        v = {i: np.array([math.radians(45.0 * i)]) for i in range(3)}
        assert objective.evaluate(v) == pytest.approx(0.0, abs=1e-20)

    def test_gradient(self, path3, rng):
        objective = build_objective("satellite_phase", path3, 4)
        v = random_vector(objective, rng)
        assert flatten(objective.gradient(v)) == pytest.approx(numeric_gradient(objective, v), abs=1e-5)


class TestPseudoHuber:
    def test_loss_shape(self):
        assert pseudo_huber(1.0, 0.0) == 0.0
        assert pseudo_huber(0.01, 1.0) == pytest.approx(9.9005e-3, rel=1e-4)
        assert pseudo_huber(0.01, 100.0) == pytest.approx(0.01 * 100.0, rel=1e-3)
        with pytest.raises(ValueError):
            pseudo_huber(0.0, 1.0)

    def test_terms_are_local(self):
        objective = build_objective(
            "pseudo_huber_target", Graph.path(2), 1, targets=[[1.0, 0.0], [-1.0, 0.0]], weights=[2.0, 1.0], delta=0.5
        )
        assert objective.scope(0) == (0,)
        v = {0: np.array([1.0, 0.0]), 1: np.array([-1.0, 0.0])}
        assert objective.evaluate(v) == pytest.approx(0.0)

    def test_gradient(self, rng):
        objective = build_objective(
            "pseudo_huber_target", Graph.path(2), 3, targets=[[1.0, 0.0], [-1.0, 0.0]], weights=[2.0, 1.0], delta=0.5
        )
        v = random_vector(objective, rng)
        assert flatten(objective.gradient(v)) == pytest.approx(numeric_gradient(objective, v), abs=1e-5)

    def test_one_target_per_agent(self):
        with pytest.raises(ConfigurationError):
            build_objective("pseudo_huber_target", Graph.path(2), 1, targets=[[0.0, 0.0]], weights=[1.0, 1.0])


class TestCircleFormation:
    def test_gradient(self, rng):
        objective = build_objective("circle_formation", Graph.complete(3), 4).at_time(7)
        v = random_vector(objective, rng)
        assert flatten(objective.gradient(v)) == pytest.approx(numeric_gradient(objective, v), abs=1e-5)

    def test_at_time_leaves_original_untouched(self):
        objective = build_objective("circle_formation", Graph.complete(2), 4)
        shifted = objective.at_time(3)
        assert shifted.time == 3
        assert objective.time == 0

    def test_minimum_on_bounded_radius(self):
        objective = build_objective("circle_formation", Graph.complete(2), 4)
        sets = [
            CooperationSet(4, Box.symmetric([21.0, 21.0, 21.0]), Box([1.0, -20.0, -20.0], [2.0, 20.0, 20.0]))
            for _ in range(2)
        ]
        estimate = estimate_W0(objective, sets)
        assert estimate.value == pytest.approx(-4.0, abs=1e-3)


class TestLeaderFollow:
    def test_followers_need_the_leader(self):
        with pytest.raises(ConfigurationError):
            build_objective("leader_follow", Graph.path(3), 1, leader=0)

    def test_reference_moves_linearly(self):
        objective = build_objective("leader_follow", Graph.complete(2), 1, start_time=0, duration=10, span=20.0, start=-10.0)
        assert objective.reference(0) == pytest.approx([-10.0, -10.0, 0.0])
        assert objective.reference(5) == pytest.approx([0.0, 0.0, 0.0])

    def test_has_no_closed_form_minimum(self):
        assert build_objective("leader_follow", Graph.complete(2), 1).minimum() is None

    def test_W0_when_the_reference_leaves_the_box(self):
        objective = build_objective("leader_follow", Graph.complete(2), 1, start_time=0, duration=10, span=20.0, start=-10.0)
        sets = [CooperationSet(1, Box.symmetric([5.0, 5.0, 5.0]))] * 2
        estimate = estimate_W0(objective, sets)
        assert estimate.value == pytest.approx(50.0, abs=1e-6)
        assert not estimate.lower_bound

    def test_relaxed_W0_is_a_lower_bound(self, path3):
        objective = build_objective("leader_follow", Graph.complete(2), 1, start_time=0, duration=10, span=20.0, start=-10.0)
        sets = [CooperationSet(1, Box.symmetric([5.0, 5.0, 5.0]))] * 2
        estimate = estimate_W0(objective, sets, relaxed=True)
        assert estimate.approximate and estimate.lower_bound
        assert estimate.value == pytest.approx(50.0, abs=1e-6)

        known = estimate_W0(build_objective("consensus", path3, 1, output_dim=1), [CooperationSet(1, Box.symmetric([1.0]))] * 3, relaxed=True)
        assert known.value == 0.0
        assert known.approximate and known.lower_bound

    def test_gradient(self, rng):
        objective = build_objective("leader_follow", Graph.complete(3), 2).at_time(400)
        v = random_vector(objective, rng)
        assert flatten(objective.gradient(v)) == pytest.approx(numeric_gradient(objective, v), abs=1e-4)


class TestShiftInvariance:
    @pytest.mark.parametrize("name,params", [
        ("consensus", {"output_dim": 2}),
        ("satellite_phase", {}),
        ("circle_formation", {}),
        ("pseudo_huber_target", {"targets": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], "weights": [1.0, 2.0, 3.0]}),
    ])
    def test_stationary_and_phase_locked_objectives(self, name, params, rng):
        graph = Graph.complete(3) if name == "circle_formation" else Graph.path(3)
        objective = build_objective(name, graph, 5, **params)
        assert objective.shift_invariant
        assert shift_invariance_gap(objective, rng, trials=200) <= 1e-9

    def test_moving_target_is_not_invariant(self, rng):
        objective = build_objective("leader_follow", Graph.complete(2), 5)
        assert not objective.shift_invariant
        assert shift_invariance_gap(objective, rng, trials=20) > 1e-6


def test_unknown_objective():
    with pytest.raises(ConfigurationError) as info:
        build_objective("flocking", Graph.path(2), 1)
    assert info.value.field == "objective.name"
    assert "consensus" in OBJECTIVES


def test_pack_and_unpack_keep_drift(path3):
    objective = build_objective("satellite_phase", path3, 2)
    y = [PeriodicTrajectory(np.array([[0.1 * i], [0.2 * i]]), drift=[2 * math.pi]) for i in range(3)]
    restored, aux = unpack(objective, pack(y), like=y)
    assert restored == y
    assert all(a.size == 0 for a in aux)


def test_gradient_stacking_matches_objective(path3, rng):
    objective = build_objective("consensus", path3, 2, output_dim=1)
    y = [PeriodicTrajectory(rng.standard_normal((2, 1))) for _ in range(3)]
    assert eval_coop_gradient(objective, y) == pytest.approx(flatten(objective.gradient(pack(y))))
    with pytest.raises(DimensionMismatchError):
        eval_coop_cost(objective, [PeriodicTrajectory(np.zeros((3, 1)))] * 3)


class TestChangePenalty:
    def test_term_and_constant(self):
        penalty = ChangePenalty([0.5, 2.0])
        y = PeriodicTrajectory(np.array([[1.0], [2.0]]))
        y_pr = PeriodicTrajectory(np.zeros((2, 1)))
        assert penalty.term(0, y, y_pr) == pytest.approx(2.5)
        assert penalty.c_delta == pytest.approx(4.0)
        assert eval_change_penalty(penalty, [y, y], [y_pr, y]) == pytest.approx(2.5)

    def test_weights_positive(self):
        with pytest.raises(ConfigurationError):
            ChangePenalty([1.0, 0.0])

    def test_shape_mismatch(self):
        penalty = ChangePenalty([1.0])
        with pytest.raises(DimensionMismatchError):
            penalty.term(0, PeriodicTrajectory(np.zeros((2, 1))), PeriodicTrajectory(np.zeros((3, 1))))


class TestScaling:
    def test_affine(self):
        assert Scaling()(3) == 4.0
        assert Scaling(2.0, 5.0)(0) == 5.0

    def test_must_dominate_horizon(self):
        with pytest.raises(ConfigurationError):
            Scaling(slope=0.5)
        with pytest.raises(ConfigurationError):
            Scaling(offset=0.0)


class TestCooperationSet:
    def test_box_projection(self):
        cset = CooperationSet(2, Box.symmetric([1.0]))
        assert cset.project(np.array([2.0, -0.5])).tolist() == [1.0, -0.5]
        assert cset.contains(np.array([1.0, -1.0]))

    def test_polytope_projection(self):
        cset = CooperationSet(1, Box.symmetric([10.0, 10.0]), polytope_a=np.array([[1.0, 1.0]]), polytope_b=np.array([1.0]))
        projected = cset.project(np.array([2.0, 2.0]))
        assert projected == pytest.approx([0.5, 0.5], abs=1e-6)

    def test_size_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            CooperationSet(2, Box.symmetric([1.0])).residual(np.zeros(3))

    def test_project_many(self):
        sets = [CooperationSet(1, Box.symmetric([1.0]))] * 2
        projected = project(sets, {0: np.array([3.0]), 1: np.array([-3.0])})
        assert projected[0][0] == 1.0 and projected[1][0] == -1.0


class TestCandidateStep:
    def test_guaranteed_decrease(self, path3):
        objective = build_objective("consensus", path3, 2, output_dim=1)
        sets = [CooperationSet(2, Box.symmetric([10.0]))] * 3
        y = [PeriodicTrajectory(np.full((2, 1), float(i))) for i in range(3)]
        step = projected_gradient_candidate(objective, sets, y, theta=0.5, lipschitz=12.0)
        assert step.decrease < 0.0
        assert step.decrease <= step.guaranteed_decrease + 1e-9

    def test_theta_zero_keeps_outputs(self, path3):
        objective = build_objective("consensus", path3, 1, output_dim=1)
        sets = [CooperationSet(1, Box.symmetric([10.0]))] * 3
        y = [PeriodicTrajectory(np.array([[float(i)]])) for i in range(3)]
        step = projected_gradient_candidate(objective, sets, y, theta=0.0, lipschitz=12.0)
        assert step.y == y
        assert step.decrease == pytest.approx(0.0)

    def test_theta_range(self, path3):
        objective = build_objective("consensus", path3, 1, output_dim=1)
        sets = [CooperationSet(1, Box.symmetric([10.0]))] * 3
        with pytest.raises(ValueError):
            projected_gradient_candidate(objective, sets, [PeriodicTrajectory(np.zeros((1, 1)))] * 3, theta=1.5)


def test_known_minimum_is_exact(path3):
    objective = build_objective("consensus", path3, 1, output_dim=1)
    estimate = estimate_W0(objective, [CooperationSet(1, Box.symmetric([1.0]))] * 3)
    assert estimate.value == 0.0
    assert not estimate.approximate


def test_scaling_dominates_horizon(rng):
    for _ in range(100):
        scaling = Scaling(1.0 + 3.0 * rng.random(), 1.0 + 3.0 * rng.random())
        N = int(rng.integers(0, 200))
        assert scaling(N) >= N


def test_default_scaling_over_horizons():
    scaling = Scaling()
    assert scaling(0) >= 1.0
    assert all(scaling(N) >= N for N in range(1001))


def test_change_penalty_growth_bound(rng):
    for _ in range(1000):
        m = int(rng.integers(1, 4))
        period = int(rng.integers(1, 5))
        dim = int(rng.integers(1, 3))
        penalty = ChangePenalty(list(1e-3 + rng.random(m)))
        y_hat, y, y_pr = (
            [PeriodicTrajectory(3.0 * rng.standard_normal((period, dim))) for _ in range(m)] for _ in range(3)
        )
        growth = eval_change_penalty(penalty, y_hat, y_pr) - 2.0 * eval_change_penalty(penalty, y, y_pr)
        moved = sum(float(np.sum((a.samples - b.samples) ** 2)) for a, b in zip(y_hat, y))
        assert growth <= penalty.c_delta * moved + 1e-9


def random_convex_instance(rng):
    """Consensus or Pseudo-Huber objective on random boxes, with an exact gradient Lipschitz bound."""
    m = int(rng.integers(2, 6))
    graph = Graph.path(m) if rng.random() < 0.5 else Graph.complete(m)
    period = int(rng.integers(1, 5))
    dim = int(rng.integers(1, 3))
    sets = [CooperationSet(period, Box.symmetric(0.5 + 2.0 * rng.random(dim))) for _ in range(m)]
    if rng.random() < 0.5:
        objective = build_objective("consensus", graph, period, output_dim=dim, weight=0.1 + 2.0 * rng.random())
        zero = {i: np.zeros(objective.size(i)) for i in range(m)}
        return objective, sets, float(np.linalg.eigvalsh(assemble_hessian(objective, zero)).max())
    weights = [float(w) for w in 0.5 + 2.0 * rng.random(m)]
    objective = build_objective(
        "pseudo_huber_target", graph, period,
        targets=(3.0 * rng.standard_normal((m, dim))).tolist(), weights=weights, delta=0.1 + rng.random(),
    )
    return objective, sets, max(weights)


@pytest.mark.parametrize("seed", range(100))
def test_candidate_decrease_on_random_convex_instances(seed):
    rng = np.random.default_rng(seed)
    objective, sets, lipschitz = random_convex_instance(rng)
    start = project(sets, {i: 3.0 * rng.standard_normal(objective.size(i)) for i in range(objective.m)})
    y, _ = unpack(objective, start)
    theta = float(rng.random())
    step = projected_gradient_candidate(objective, sets, y, theta, lipschitz=lipschitz)
    assert step.step_size == pytest.approx(2.0 / (lipschitz * theta + 2.0))
    assert step.decrease <= step.guaranteed_decrease + 1e-9
    assert all(sets[i].contains(v) for i, v in pack(step.y).items())


@pytest.mark.parametrize("seed", range(10))
def test_W0_matches_dense_qp_on_random_boxes(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 4))
    period = int(rng.integers(1, 3))
    params = {
        "output_dim": 2,
        "gains": [float(g) for g in 0.2 + rng.random(2)],
        "direction": rng.standard_normal(2).tolist(),
        "start": -3.0,
        "span": 6.0,
        "start_time": 0,
        "duration": 20,
    }
    graph = Graph.complete(m)
    unscaled = build_objective("leader_follow", graph, period, **params)
    zero = {i: np.zeros(unscaled.size(i)) for i in range(m)}
    H = assemble_hessian(unscaled, zero)
    objective = build_objective(
        "leader_follow", graph, period, lipschitz=float(np.linalg.eigvalsh(H).max()), **params
    ).at_time(int(rng.integers(1, 20)))
    g = flatten(objective.gradient(zero))

    bounds = [0.5 + 2.0 * rng.random(2) for _ in range(m)]
    sets = [CooperationSet(period, Box.symmetric(b)) for b in bounds]
    upper = np.concatenate([np.tile(b, period) for b in bounds])
    oracle = solve_dense_qp(H, g, np.eye(g.size), -upper, upper)
    assert oracle.converged

    estimate = estimate_W0(objective, sets)
    assert not estimate.approximate
    assert estimate.value == pytest.approx(objective.evaluate(split(objective, oracle.x)), abs=1e-6)


class DoubleWell(CooperationObjective):
    """W_i = sum_tau (y_i(tau)^2 - 1)^2, minimal at y = +-1."""

    name = "double_well"
    convex = False

    def __init__(self, graph, period):
        super().__init__(graph, period, [1] * graph.m)

    def scope(self, i):
        return (i,)

    def term(self, i, v):
        y = self.outputs(i, v)
        return float(np.sum((y ** 2 - 1.0) ** 2))

    def term_gradient(self, i, v):
        y = self.outputs(i, v).ravel()
        return {i: 4.0 * y * (y ** 2 - 1.0)}


class TestNonConvex:
    def test_candidate_backtracks(self):
        objective = DoubleWell(Graph.path(2), 1)
        sets = [CooperationSet(1, Box.symmetric([2.0]))] * 2
        y = [PeriodicTrajectory(np.array([[0.3]]))] * 2
        step = projected_gradient_candidate(objective, sets, y, theta=1.0)
        assert step.guaranteed_decrease is None
        assert step.step_size == 0.5
        assert step.decrease < 0.0
        assert step.y[0].samples[0, 0] == pytest.approx(0.3 + 0.5 * 1.092)

    def test_W0_is_local_and_approximate(self):
        objective = DoubleWell(Graph.path(2), 1)
        sets = [CooperationSet(1, Box.symmetric([2.0]))] * 2
        estimate = estimate_W0(objective, sets, start={0: np.array([0.3]), 1: np.array([-0.3])})
        assert estimate.approximate
        assert estimate.value == pytest.approx(0.0, abs=1e-8)
        assert estimate.point[0] == pytest.approx([1.0], abs=1e-4)
        assert estimate.point[1] == pytest.approx([-1.0], abs=1e-4)
