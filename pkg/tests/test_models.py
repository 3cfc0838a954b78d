import math

import numpy as np
import pytest

from core.errors import ConfigurationError, DimensionMismatchError
from core.graph import Graph
from models.base import Box, constraint_residuals, min_distance
from models.library import (
    EARTH_MU,
    build_model,
    circular_orbit_radius,
    corridor_walls,
    double_integrator,
    quadrotor,
    satellite,
)


class TestBox:
    def test_residual_over_finite_bounds(self):
        box = Box([0.0, -np.inf], [1.0, np.inf])
        assert box.residual([2.0, 0.0]).tolist() == [1.0, -2.0]
        assert not box.contains([2.0, 0.0])
        assert box.contains([0.5, 100.0])

    def test_inverted_bounds_rejected(self):
        with pytest.raises(ConfigurationError):
            Box([1.0], [0.0])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            Box([0.0, 0.0], [1.0])

    def test_shrink(self):
        box = Box.symmetric([1.0]).shrink(0.1)
        assert box.lower[0] == pytest.approx(-0.9)
        assert box.upper[0] == pytest.approx(0.9)

    def test_compact_and_inside(self):
        outer = Box.symmetric([1.0, 1.0])
        assert outer.is_compact()
        assert not Box.unbounded(2).is_compact()
        assert outer.shrink(0.1).strictly_inside(outer)
        assert not outer.strictly_inside(outer)

    def test_pinned_components(self):
        box = Box([0.0, 1.0], [0.0, 2.0])
        assert box.pinned.tolist() == [True, False]
        assert box.residual([0.0, 1.5]).tolist() == [0.0, -0.5, 0.0, -0.5]


class TestDoubleIntegrator:
    def test_exact_step(self):
        model = double_integrator(dim=1, h=0.5)
        x_next = model.step([0.0, 1.0], [0.2])
        assert x_next == pytest.approx([0.525, 1.1])
        assert model.is_linear

    def test_output_is_position(self):
        model = double_integrator(dim=2)
        assert model.output(np.array([1.0, 2.0, 3.0, 4.0]), np.zeros(2)).tolist() == [1.0, 2.0]

    def test_dimension_checks(self):
        model = double_integrator(dim=1)
        with pytest.raises(DimensionMismatchError):
            model.step(np.zeros(3), np.zeros(1))

    def test_hold_reference_is_equilibrium(self):
        model = double_integrator(dim=2, h=0.1)
        x_ref, u_ref = model.hold_reference(np.array([1.0, -1.0, 0.5, 0.5]), 3)
        assert x_ref.shape == (3, 4)
        assert model.step(x_ref[0], u_ref[0]) == pytest.approx(x_ref[0])

    def test_corridor_needs_planar_model(self):
        with pytest.raises(ConfigurationError):
            double_integrator(dim=1, corridor={"length": 8.0, "half_width": 0.5})


class TestCorridor:
    def test_open_strip_and_walls(self):
        walls = corridor_walls(length=8.0, half_width=0.5)
        assert walls.residual(np.array([0.0, 0.0])).max() < 0.0
        assert walls.residual(np.array([0.0, 1.5])).max() > 0.0
        assert walls.residual(np.array([10.0, 1.5])).max() < 0.0

    def test_matches_box_walls_inside_the_corridor(self):
        walls = corridor_walls(length=8.0, half_width=0.5)
        for px in np.linspace(-3.0, 3.0, 13):
            for py in (0.55, 1.0, 2.0, -0.55, -2.0):
                assert walls.residual(np.array([px, py])).max() > 0.0
            for py in (0.45, 0.0, -0.45):
                assert walls.residual(np.array([px, py])).max() < 0.0

    def test_jacobian_matches_differences(self):
        walls = corridor_walls(length=8.0, half_width=0.5)
        x = np.array([1.0, 0.3])
        h = 1e-6
        numeric = np.column_stack([
            (walls.residual(x + h * e) - walls.residual(x - h * e)) / (2 * h) for e in np.eye(2)
        ])
        assert walls.jacobian(x) == pytest.approx(numeric, rel=1e-4, abs=1e-6)

    def test_odd_exponent_rejected(self):
        with pytest.raises(ConfigurationError):
            corridor_walls(8.0, 0.5, exponent=3)


class TestSatellite:
    def test_circular_orbit_is_kept(self):
        h = 120.0
        radius = circular_orbit_radius(47, h)
        omega = math.sqrt(EARTH_MU / radius ** 3)
        model = satellite(h=h, omega_nominal=omega)
        x = np.array([radius, 0.0, 0.0, omega])
        x_next = model.step(x, np.zeros(2))
        assert x_next[0] == pytest.approx(radius, rel=1e-6)
        assert x_next[1] == pytest.approx(omega * h, rel=1e-6)
        assert not model.is_linear

    def test_orbit_period_matches_steps(self):
        radius = circular_orbit_radius(47, 120.0)
        omega = math.sqrt(EARTH_MU / radius ** 3)
        assert 2 * math.pi / omega == pytest.approx(47 * 120.0)

    def test_angle_is_unbounded(self):
        model = satellite()
        assert model.angle_states == (1,)
        assert not np.isfinite(model.state_box.upper[1])


class TestQuadrotor:
    def test_hover_is_equilibrium(self):
        model = quadrotor()
        x_ref, u_ref = model.hold_reference(np.array([1.0, 2.0, 3.0] + [0.0] * 7), 1)
        assert model.step(x_ref[0], u_ref[0]) == pytest.approx(x_ref[0], abs=1e-12)

    def test_jacobians_match_differences(self):
        model = quadrotor()
        x = np.full(10, 0.1)
        u = np.array([0.05, -0.05, 9.0])
        a, b = model.jacobians(x, u)
        h = 1e-6
        numeric = np.column_stack([(model.step(x + h * e, u) - model.step(x - h * e, u)) / (2 * h) for e in np.eye(10)])
        assert a == pytest.approx(numeric, rel=1e-4, abs=1e-6)
        assert b.shape == (10, 3)


def test_build_model_unknown_kind():
    with pytest.raises(ConfigurationError) as info:
        build_model("blimp")
    assert info.value.field == "model.kind"


class TestCoupling:
    def test_min_distance_residual(self):
        coupling = min_distance(1.0, selector=[0, 1])
        assert coupling.residual(np.array([0.0, 0.0, 5.0]), [np.array([3.0, 4.0, 0.0])]).tolist() == [-4.0]
        assert coupling.tightened_residual(np.zeros(2), np.array([1.0, 0.0]))[0] == pytest.approx(coupling.eta)

    def test_distance_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            min_distance(0.0, selector=[0])

    def test_constraint_residuals(self):
        model = double_integrator(dim=2)
        coupling = min_distance(1.0, selector=[0, 1])
        x = [np.zeros(4), np.array([0.5, 0.0, 0.0, 0.0])]
        u = [np.zeros(2), np.zeros(2)]
        reports = constraint_residuals([model, model], coupling, x, u, Graph.path(2))
        assert reports[0].worst == pytest.approx(0.5)
        free = constraint_residuals([model, model], coupling, x, u, Graph.empty(2))
        assert free[0].worst == 0.0


class TestIntegrators:
    @staticmethod
    def decay(x, u):
        return -x + u

    @staticmethod
    def decay_jacobian(x, u):
        return -np.eye(x.size), np.eye(x.size)

    def test_rk4_matches_exponential(self):
        from models.integrators import rk4_discretize

        step = rk4_discretize(self.decay, 0.1)
        x = step(np.array([1.0]), np.array([0.0]))
        assert x[0] == pytest.approx(math.exp(-0.1), abs=1e-7)

    def test_rk4_sensitivities_match_differences(self):
        from models.integrators import rk4_discretize

        exact = rk4_discretize(self.decay, 0.1, self.decay_jacobian)
        numeric = rk4_discretize(self.decay, 0.1)
        assert exact.has_analytic_jacobian and not numeric.has_analytic_jacobian
        x, u = np.array([0.3, -0.2]), np.array([0.1, 0.4])
        for a, b in zip(exact.jacobians(x, u), numeric.jacobians(x, u)):
            assert a == pytest.approx(b, abs=1e-6)

    def test_euler(self):
        from models.integrators import euler_discretize

        step = euler_discretize(self.decay, 0.5, self.decay_jacobian)
        assert step(np.array([2.0]), np.array([1.0])).tolist() == [1.5]
        a, b = step.jacobians(np.array([2.0]), np.array([1.0]))
        assert a.tolist() == [[0.5]] and b.tolist() == [[0.5]]

    def test_step_size_positive(self):
        from models.integrators import euler_discretize, rk4_discretize

        with pytest.raises(ValueError):
            rk4_discretize(self.decay, 0.0)
        with pytest.raises(ValueError):
            euler_discretize(self.decay, -1.0)
