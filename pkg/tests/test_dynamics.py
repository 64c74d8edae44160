import numpy as np
import pytest

from incstab.dynamics import (ControlledSystem, ExprSurface, SwitchedController,
                              VectorField, ZeroGradientError,
                              assemble_closed_loop, jacobian, jump_matrix)
from incstab.expr import VectorExpr

from conftest import VARS, make_field, make_surface


def controller(up, um="0", h="x2 - 2"):
    return SwitchedController(
        u_plus=VectorExpr.parse_components([up], VARS),
        u_minus=VectorExpr.parse_components([um], VARS),
        surface=make_surface(h),
    )


class TestAssembly:
    def test_closed_loop_value(self, planar_system):
        loop = assemble_closed_loop(planar_system, controller("-10*x2"))
        assert np.allclose(loop.plus(np.array([0.0, 4.0])), [-40.0, -88.0])

    def test_zero_control_is_open_loop_exactly(self, planar_system, rng):
        loop = assemble_closed_loop(planar_system, controller("0", "0"))
        for _ in range(20):
            x = rng.uniform(-8, 8, 2)
            assert np.array_equal(loop.plus(x), planar_system.open_loop(x))
            assert np.array_equal(loop.minus(x), planar_system.open_loop(x))

    def test_closed_loop_matches_direct_composition(self, planar_system, rng):
        ctl = controller("-10*x2")
        loop = assemble_closed_loop(planar_system, ctl)
        g = make_field("1", "2")
        for _ in range(20):
            x = rng.uniform(-8, 8, 2)
            u = -10.0 * x[1]
            direct = planar_system.open_loop(x) + g(x) * u
            assert np.max(np.abs(loop.plus(x) - direct)) <= 1e-12

    def test_closed_loop_jacobian_structure(self, planar_system, rng):
        loop = assemble_closed_loop(planar_system, controller("-10*x2"))
        for _ in range(10):
            x = rng.uniform(-8, 8, 2)
            expect = np.array([[-4.0, -10.0], [0.0, 2.0 * x[1] - 26.0]])
            assert np.allclose(loop.plus.jacobian(x), expect, atol=1e-12)

    def test_dimension_mismatch_rejected(self, planar_system):
        two_channel = SwitchedController(
            u_plus=VectorExpr.parse_components(["0", "0"], VARS),
            u_minus=VectorExpr.parse_components(["0", "0"], VARS),
            surface=make_surface("x2 - 2"),
        )
        with pytest.raises(ValueError):
            assemble_closed_loop(planar_system, two_channel)


class TestJacobian:
    def test_open_loop_at_point(self, planar_system):
        j = jacobian(planar_system.open_loop, np.array([0.0, 4.0]))
        assert np.array_equal(j, np.array([[-4.0, 0.0], [0.0, 2.0]]))

    def test_linear_field_constant_jacobian(self, rng):
        fld = make_field("2*x1 - x2", "x1 + 3*x2")
        a = np.array([[2.0, -1.0], [1.0, 3.0]])
        for _ in range(10):
            assert np.array_equal(fld.jacobian(rng.uniform(-9, 9, 2)), a)

    def test_finite_difference_cross_check(self, rng):
        fld = make_field("x1^2*x2 - 4*x1", "x2^3 + x1*x2")
        h = 1e-6
        for _ in range(50):
            x = rng.uniform(-3, 3, 2)
            j = fld.jacobian(x)
            for col in range(2):
                e = np.zeros(2)
                e[col] = h
                fd = (fld(x + e) - fld(x - e)) / (2 * h)
                assert np.allclose(j[:, col], fd, rtol=1e-5, atol=1e-6)

    def test_batched_jacobian_matches_pointwise(self, planar_system, rng):
        pts = rng.uniform(-8, 8, (30, 2))
        many = planar_system.open_loop.jacobian_many(pts)
        for i in range(len(pts)):
            assert np.array_equal(many[i],
                                  planar_system.open_loop.jacobian(pts[i]))


class TestJumpMatrix:
    def test_linear_switched_gain(self, planar_system):
        m = jump_matrix(planar_system, controller("-10*x2"),
                        np.array([0.0, 2.0]))
        assert np.allclose(m, np.array([[0.0, -20.0], [0.0, -40.0]]))

    def test_equal_controls_give_zero(self, planar_system):
        m = jump_matrix(planar_system, controller("-3*x2", "-3*x2"),
                        np.array([5.0, 2.0]))
        assert np.array_equal(m, np.zeros((2, 2)))

    def test_quadratic_switched_gain(self, planar_system):
        m = jump_matrix(planar_system, controller("-(x2^2)"),
                        np.array([5.0, 2.0]))
        assert np.allclose(m, np.array([[0.0, -4.0], [0.0, -8.0]]))

    def test_rank_at_most_one(self, planar_system, rng):
        ctl = controller("-(x2^2) + x1")
        for _ in range(20):
            x = np.array([rng.uniform(-9, 9), 2.0])
            s = np.linalg.svd(jump_matrix(planar_system, ctl, x),
                              compute_uv=False)
            assert s[1] <= 1e-10 * max(s[0], 1e-30)

    def test_swapping_controls_negates(self, planar_system):
        x = np.array([1.0, 2.0])
        a = jump_matrix(planar_system, controller("-10*x2", "0"), x)
        b = jump_matrix(planar_system, controller("0", "-10*x2"), x)
        assert np.array_equal(a, -b)

    def test_swap_with_negated_h_is_invariant(self, planar_system):
        x = np.array([1.0, 2.0])
        a = jump_matrix(planar_system, controller("-10*x2", "0", "x2 - 2"), x)
        b = jump_matrix(planar_system, controller("0", "-10*x2", "2 - x2"), x)
        assert np.allclose(a, b)

    def test_point_off_sigma_rejected(self, planar_system):
        with pytest.raises(ValueError):
            jump_matrix(planar_system, controller("-10*x2"),
                        np.array([0.0, 4.0]))

    def test_degenerate_gradient_rejected(self, planar_system):
        ctl = controller("-10*x2", "0", "x1^2")
        with pytest.raises(ZeroGradientError):
            jump_matrix(planar_system, ctl, np.array([0.0, 1.0]))


class TestSurfaces:
    def test_expr_surface_value_and_gradient(self):
        s = make_surface("x1^2 + x2^2 - 1")
        assert s.value([1.0, 0.0]) == 0.0
        assert np.array_equal(s.gradient([1.0, 0.0]), [2.0, 0.0])

    def test_surface_batch_values(self):
        s = make_surface("x2 - 2")
        pts = np.array([[0.0, 0.0], [0.0, 2.0], [0.0, 5.0]])
        assert np.array_equal(s.value_many(pts), [-2.0, 0.0, 3.0])

    def test_system_dimension_validation(self):
        with pytest.raises(ValueError):
            ControlledSystem(variables=VARS,
                             f=VectorExpr.parse_components(["x1"], VARS),
                             g=())
