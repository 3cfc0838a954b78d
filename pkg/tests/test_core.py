import numpy as np
import pytest

from core.errors import ConfigurationError, DimensionMismatchError, InfeasibleProblemError
from core.graph import Graph, neighbor_slice
from core.trajectory import (
    ExtendedState,
    PeriodicTrajectory,
    check_common_period,
    periodic_distance,
    shift_periodic,
)


class TestPeriodicTrajectory:
    def test_indexing_wraps_modulo_period(self):
        traj = PeriodicTrajectory(np.array([[0.0], [1.0], [2.0]]))
        assert traj.period == 3
        assert traj.dim == 1
        assert traj.at(4)[0] == 1.0
        assert traj(5)[0] == 2.0

    def test_drift_is_added_per_lap(self):
        traj = PeriodicTrajectory(np.array([[0.0], [1.0], [2.0]]), drift=[3.0])
        assert traj.at(4)[0] == pytest.approx(4.0)
        assert traj.at(7)[0] == pytest.approx(7.0)

    def test_negative_index_rejected(self):
        traj = PeriodicTrajectory(np.zeros((2, 1)))
        with pytest.raises(ValueError):
            traj.at(-1)

    def test_samples_are_read_only(self):
        traj = PeriodicTrajectory(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            traj.samples[0, 0] = 1.0

    def test_bad_drift_shape(self):
        with pytest.raises(DimensionMismatchError):
            PeriodicTrajectory(np.zeros((2, 2)), drift=[1.0])

    def test_one_dimensional_samples_become_a_column(self):
        traj = PeriodicTrajectory([1.0, 2.0])
        assert traj.samples.shape == (2, 1)

    def test_lifted(self):
        traj = PeriodicTrajectory(np.array([[0.0], [1.0]]), drift=[2.0])
        assert traj.lifted(4).ravel().tolist() == [0.0, 1.0, 2.0, 3.0]


class TestShift:
    def test_shift_by_k(self):
        traj = PeriodicTrajectory(np.array([[0.0], [1.0], [2.0]]))
        shifted = shift_periodic(traj, 1)
        assert shifted.samples.ravel().tolist() == [1.0, 2.0, 0.0]

    def test_shift_with_drift(self):
        traj = PeriodicTrajectory(np.array([[0.0], [1.0], [2.0]]), drift=[3.0])
        shifted = shift_periodic(traj, 2)
        assert shifted.samples.ravel().tolist() == [2.0, 3.0, 4.0]
        assert shifted.at(5)[0] == pytest.approx(traj.at(7)[0])

    def test_shift_by_period_is_identity_without_drift(self, rng):
        traj = PeriodicTrajectory(rng.standard_normal((4, 2)))
        assert shift_periodic(traj, 4) == traj
        assert shift_periodic(traj, 0) == traj

    def test_negative_shift_rejected(self):
        with pytest.raises(ValueError):
            shift_periodic(PeriodicTrajectory(np.zeros((2, 1))), -1)


class TestDistance:
    def test_sum_of_sample_norms(self):
        a = PeriodicTrajectory(np.array([[0.0, 0.0], [0.0, 0.0]]))
        b = PeriodicTrajectory(np.array([[3.0, 4.0], [0.0, 1.0]]))
        assert periodic_distance(a, b) == pytest.approx(6.0)

    def test_drift_counts(self):
        a = PeriodicTrajectory(np.array([[0.5], [1.0]]), drift=[6.0])
        b = PeriodicTrajectory(np.array([[0.5], [1.0]]), drift=[2.0])
        assert periodic_distance(a, b) == pytest.approx(4.0)
        assert periodic_distance(a, a) == 0.0

    def test_period_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            periodic_distance(PeriodicTrajectory(np.zeros((2, 1))), PeriodicTrajectory(np.zeros((3, 1))))

    def test_common_period(self):
        trajs = [PeriodicTrajectory(np.zeros((3, 1))), PeriodicTrajectory(np.zeros((3, 2)))]
        assert check_common_period(trajs) == 3
        with pytest.raises(DimensionMismatchError):
            check_common_period(trajs, period=4)


def test_extended_state_checks_agent_count():
    y = [PeriodicTrajectory(np.zeros((2, 1)))]
    with pytest.raises(DimensionMismatchError):
        ExtendedState(x=[np.zeros(2), np.zeros(2)], y_pr=y)
    state = ExtendedState(x=[np.zeros(2)], y_pr=y)
    assert state.m == 1
    assert state.period == 2


class TestGraph:
    def test_edges_are_normalised(self):
        graph = Graph(3, ((2, 1), (0, 1), (1, 0)))
        assert graph.edges == ((0, 1), (1, 2))
        assert graph.neighbors(1) == (0, 2)
        assert graph.scope(0) == (0, 1)
        assert graph.degree(1) == 2

    def test_self_loop_rejected(self):
        with pytest.raises(ConfigurationError):
            Graph(2, ((1, 1),))

    def test_edge_out_of_range(self):
        with pytest.raises(ConfigurationError):
            Graph(2, ((0, 2),))

    def test_complete_and_empty(self):
        assert len(Graph.complete(4).edges) == 6
        assert Graph.empty(3).neighbors(2) == ()

    def test_remove_agents_keep(self):
        graph = Graph.path(4).remove_agents([1], "keep")
        assert graph.m == 3
        assert graph.edges == ((1, 2),)

    def test_remove_agents_path(self):
        graph = Graph.path(5).remove_agents([1, 3], "path")
        assert graph == Graph.path(3)

    def test_unknown_reconnect_rule(self):
        with pytest.raises(ConfigurationError):
            Graph.path(3).remove_agents([0], "ring")

    def test_neighbor_slice(self):
        graph = Graph.path(3)
        assert neighbor_slice(graph, 1, ["a", "b", "c"]) == ["a", "c"]
        with pytest.raises(IndexError):
            neighbor_slice(graph, 1, ["a"])


def test_error_messages_carry_context():
    error = ConfigurationError("must be positive", "horizon")
    assert str(error) == "horizon: must be positive"
    assert error.field == "horizon"
    infeasible = InfeasibleProblemError("no point", step=3, group="terminal")
    assert infeasible.step == 3
    assert "step 3" in str(infeasible) and "group 'terminal'" in str(infeasible)
