import numpy as np
import pytest

from incstab import certify, synth
from incstab.certify import RegionSpec
from incstab.dynamics import ControlledSystem, MaxSurface
from incstab.expr import VectorExpr
from incstab.measures import MeasureKind, matrix_measure_many
from incstab.synth import (DesignSpec, GainSearchError, build_H, gain_search,
                           partition_regions)

from conftest import VARS


def region(x2_hi=7.0, res=120, x_lo=-10.0, x_hi=10.0):
    return RegionSpec(bounds=((x_lo, x_hi), (x_lo, x2_hi)),
                      resolution=(res, res))


def linear_system(a11=-3.0, a22=-3.0):
    f = VectorExpr.parse_components([f"{a11}*x1", f"{a22}*x2"], VARS)
    g = (VectorExpr.parse_components(["1", "2"], VARS),)
    return ControlledSystem(variables=VARS, f=f, g=g)


class TestBuildH:
    def test_measure_margin_values(self, planar_system):
        surface = build_H(planar_system, MeasureKind.ONE, 2.0)
        assert isinstance(surface, MaxSurface)
        # max{-4, 2 x2 - 6} + 2
        assert surface.value([0.0, 0.0]) == -2.0
        assert surface.value([0.0, 4.0]) == 4.0
        assert abs(surface.value([0.0, 2.0])) <= 1e-12

    def test_zero_set_is_the_switching_threshold(self, planar_system):
        surface = build_H(planar_system, MeasureKind.ONE, 2.0)
        pts = certify.sample_sigma(surface, region())
        assert np.max(np.abs(pts[:, 1] - 2.0)) <= 1e-9

    def test_active_branch_gradient(self, planar_system):
        surface = build_H(planar_system, MeasureKind.ONE, 2.0)
        assert np.array_equal(surface.gradient([0.0, 2.0]), [0.0, 2.0])
        assert np.array_equal(surface.gradient([0.0, -5.0]), [0.0, 0.0])

    def test_constant_for_linear_field(self):
        surface = build_H(linear_system(), MeasureKind.ONE, 2.0)
        for x2 in (-5.0, 0.0, 5.0):
            assert surface.value([0.0, x2]) == -1.0  # mu = -3, so H = -1 < 0

    def test_euclidean_kind_uses_numeric_surface(self, planar_system):
        surface = build_H(planar_system, MeasureKind.TWO, 2.0)
        # mu_2 of diag(-4, 2 x2 - 6) is max of the entries
        assert surface.value([0.0, 4.0]) == pytest.approx(4.0, abs=1e-9)
        grad = surface.gradient([0.0, 4.0])
        assert grad[1] == pytest.approx(2.0, rel=1e-4)


class TestPartition:
    def test_bounded_design_region(self, planar_system):
        surface = build_H(planar_system, MeasureKind.ONE, 2.0)
        part = partition_regions(surface, region())
        plus_pts = part.splus.points()
        minus_pts = part.sminus.points()
        assert np.all((plus_pts[:, 1] > 2.0) & (plus_pts[:, 1] < 7.0001))
        assert np.all(minus_pts[:, 1] < 2.0)
        assert len(part.sigma) > 0

    def test_region_already_contracting(self, planar_system):
        surface = build_H(planar_system, MeasureKind.ONE, 2.0)
        part = partition_regions(surface, region(x2_hi=1.5, x_lo=-3.0, x_hi=3.0))
        assert len(part.splus.points()) == 0
        assert len(part.sigma) == 0


class TestGainSearch:
    def test_linear_template_recovers_minimal_gain(self, ex1_cfg):
        spec = DesignSpec(system=ex1_cfg.system, c_bar=2.0,
                          kind=MeasureKind.ONE, region=ex1_cfg.region,
                          template=(("x2",),), gain_bounds=(-20.0, 0.0),
                          gain_step=0.5)
        res = gain_search(spec)
        assert res.gains == (-10.0,)
        assert res.certificate.verdict
        assert not res.already_contracting

    def test_smaller_lattice_neighbor_fails(self, ex1_cfg):
        # k = -9.5 violates the S+ condition near the top of the region
        sys = ex1_cfg.system
        surface = build_H(sys, MeasureKind.ONE, 2.0)
        part = partition_regions(surface, ex1_cfg.region)
        u = VectorExpr.parse_components(["-9.5*x2"], VARS)
        from incstab.dynamics import SwitchedController, assemble_closed_loop
        loop = assemble_closed_loop(
            sys, SwitchedController(u_plus=u, u_minus=VectorExpr.zeros(1, VARS),
                                    surface=surface))
        pts = np.vstack([part.splus.points(), part.sigma])
        worst = float(np.max(matrix_measure_many(
            MeasureKind.ONE, loop.plus.jacobian_many(pts))))
        assert worst > -2.0
        assert worst == pytest.approx(-1.5)

    def test_quadratic_template_recovers_unit_gain(self, ex2_cfg):
        spec = DesignSpec(system=ex2_cfg.system, c_bar=2.0,
                          kind=MeasureKind.ONE, region=ex2_cfg.region,
                          template=(("x2^2",),), gain_bounds=(-5.0, 0.0),
                          gain_step=0.5)
        res = gain_search(spec)
        assert res.gains == (-1.0,)
        assert res.certificate.verdict

    def test_two_basis_template_minimizes_max_gain(self, ex1_cfg):
        spec = DesignSpec(system=ex1_cfg.system, c_bar=2.0,
                          kind=MeasureKind.ONE, region=ex1_cfg.region,
                          template=(("x2", "x2^2"),), gain_bounds=(-10.0, 0.0),
                          gain_step=0.5)
        res = gain_search(spec)
        # (-1, -1) is the first lattice point (max-abs then lexicographic)
        # that satisfies both conditions: the derivative -k1 - 2 k2 x2 keeps
        # the S+ column sum at -7 for k1 = k2 = -1
        assert res.gains == (-1.0, -1.0)
        assert res.certificate.verdict

    def test_contracting_open_loop_returns_zero_control(self):
        sys = linear_system()
        spec = DesignSpec(system=sys, c_bar=2.0, kind=MeasureKind.ONE,
                          region=region(x2_hi=5.0, res=40),
                          template=(("x2",),), gain_bounds=(-5.0, 0.0),
                          gain_step=1.0)
        res = gain_search(spec)
        assert res.already_contracting
        assert res.gains == (0.0,)
        assert res.certificate.verdict
        assert str(res.u_plus) == "[0.0]"

    def test_unreachable_rate_reports_best_margin(self, ex1_cfg):
        spec = DesignSpec(system=ex1_cfg.system, c_bar=2.0,
                          kind=MeasureKind.ONE, region=ex1_cfg.region,
                          template=(("x2",),), gain_bounds=(-2.0, 0.0),
                          gain_step=0.5)
        with pytest.raises(GainSearchError) as err:
            gain_search(spec)
        assert err.value.best_margin is not None
        assert err.value.best_margin > -2.0

    def test_u_minus_identically_zero(self, ex1_cfg, rng):
        spec = DesignSpec(system=ex1_cfg.system, c_bar=2.0,
                          kind=MeasureKind.ONE, region=ex1_cfg.region,
                          template=(("x2",),), gain_bounds=(-20.0, 0.0),
                          gain_step=0.5)
        res = gain_search(spec)
        from incstab.dynamics import SwitchedController, assemble_closed_loop
        loop = assemble_closed_loop(
            ex1_cfg.system,
            SwitchedController(u_plus=res.u_plus, u_minus=res.u_minus,
                               surface=res.surface))
        for _ in range(10):
            x = rng.uniform(-6, 6, 2)
            assert np.array_equal(loop.minus(x),
                                  ex1_cfg.system.open_loop(x))

    def test_design_survives_grid_refinement(self, ex1_cfg):
        spec = DesignSpec(system=ex1_cfg.system, c_bar=2.0,
                          kind=MeasureKind.ONE, region=ex1_cfg.region,
                          template=(("x2",),), gain_bounds=(-20.0, 0.0),
                          gain_step=0.5)
        res = gain_search(spec)
        fine = partition_regions(res.surface, ex1_cfg.region.refined(2))
        from incstab.dynamics import SwitchedController
        ctl = SwitchedController(u_plus=res.u_plus, u_minus=res.u_minus,
                                 surface=res.surface)
        cert = certify.check_theorem3(ex1_cfg.system, ctl, fine,
                                      MeasureKind.ONE, 2.0, 2.0, c_bar=2.0)
        assert cert.verdict

    def test_design_result_serialization(self, ex1_cfg):
        spec = DesignSpec(system=ex1_cfg.system, c_bar=2.0,
                          kind=MeasureKind.ONE, region=ex1_cfg.region,
                          template=(("x2",),), gain_bounds=(-20.0, 0.0),
                          gain_step=0.5)
        payload = synth.design_result_to_dict(gain_search(spec))
        assert payload["gains"] == [-10.0]
        assert payload["certificate"]["verdict"] == "pass"
        assert "max(" in payload["H"]
