import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from incstab import filippov
from incstab.dynamics import ClosedLoopField, SwitchedController, assemble_closed_loop
from incstab.expr import VectorExpr
from incstab.filippov import (Decision, EscapingRegionError, FiniteEscapeError,
                              Mode, RegularizationConfig, classify, regularize,
                              regularized_field, simulate, simulate_smooth,
                              sliding_alpha, sliding_field)

from conftest import VARS, make_field, make_surface


def make_loop(fp_exprs, fm_exprs, h="x2"):
    return ClosedLoopField(plus=make_field(*fp_exprs),
                           minus=make_field(*fm_exprs),
                           surface=make_surface(h))


class TestClassify:
    def test_opposing_normals_slide(self):
        fp, fm = make_field("1", "-1"), make_field("1", "1")
        assert classify(make_surface("x2"), fp, fm, [0.0, 0.0]) is Decision.SLIDE

    def test_equal_fields_cross(self):
        fp = make_field("1", "-1")
        got = classify(make_surface("x2"), fp, fp, [0.0, 0.0])
        assert got is Decision.CROSS_TO_MINUS

    def test_both_point_away_is_escaping(self):
        fp, fm = make_field("1", "1"), make_field("1", "-1")
        with pytest.raises(EscapingRegionError):
            classify(make_surface("x2"), fp, fm, [0.0, 0.0])


class TestSlidingField:
    def test_symmetric_combination(self):
        fs = sliding_field(make_field("1", "-1"), make_field("1", "1"),
                           make_surface("x2"), [0.0, 0.0])
        assert np.allclose(fs, [1.0, 0.0], atol=1e-14)

    def test_hand_solved_alpha(self):
        # solve gH.Fs = 0: alpha = 1/(1 - (-2)) = 1/3, Fs = (2/3, 0)
        fs = sliding_field(make_field("2", "-2"), make_field("0", "1"),
                           make_surface("x2"), [0.0, 0.0])
        assert np.allclose(fs, [2.0 / 3.0, 0.0], atol=1e-14)

    def test_degenerate_denominator(self):
        with pytest.raises(filippov.SlidingDegenerateError):
            sliding_alpha(np.array([1.0, 1.0]), np.array([1.0, 1.0]),
                          np.array([0.0, 1.0]))

    @given(st.floats(-10, -0.01), st.floats(0.01, 10),
           st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 3))
    @settings(max_examples=50, deadline=None)
    def test_tangency_identity(self, a, b, tp, tm, gscale):
        # construct fields with prescribed normal components a < 0 < b
        grad = np.array([0.0, gscale])
        vp = np.array([tp, a / gscale])
        vm = np.array([tm, b / gscale])
        alpha = sliding_alpha(vp, vm, grad)
        fs = alpha * vp + (1 - alpha) * vm
        assert abs(float(np.dot(grad, fs))) <= 1e-12
        assert 0.0 <= alpha <= 1.0


class TestSmoothIntegration:
    def test_exponential_decay(self):
        traj = simulate_smooth(make_field("-2*x1", "-2*x2"), [1.0, 1.0],
                               (0.0, 1.0), 1e-3)
        assert traj.states[-1][0] == pytest.approx(math.exp(-2.0), abs=1e-6)

    def test_step_validation(self):
        with pytest.raises(ValueError):
            simulate_smooth(make_field("-x1", "-x2"), [1.0, 1.0], (0.0, 1.0), 0.0)
        with pytest.raises(ValueError):
            simulate_smooth(make_field("-x1", "-x2"), [1.0, 1.0], (1.0, 1.0), 1e-3)


class TestSwitchedSimulation:
    def test_crossing_event_location(self):
        loop = make_loop(("1", "-1"), ("1", "-1"))
        traj = simulate(loop, [0.0, 1.0], (0.0, 2.0), 1e-3)
        assert len(traj.events) == 1
        evt = traj.events[0]
        assert evt.kind == "crossing"
        assert evt.time == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(evt.state, [1.0, 0.0], atol=1e-9)
        assert traj.modes[0] is Mode.PLUS
        assert traj.modes[-1] is Mode.MINUS

    def test_persistent_sliding(self):
        loop = make_loop(("1", "-1"), ("1", "1"))
        traj = simulate(loop, [0.0, 0.5], (0.0, 1.5), 1e-3)
        kinds = [e.kind for e in traj.events]
        assert kinds == ["slide-entry"]
        assert traj.events[0].time == pytest.approx(0.5, abs=1e-9)
        h = loop.surface
        sliding = [abs(h.value(s)) for s, m in zip(traj.states, traj.modes)
                   if m is Mode.SLIDING]
        assert len(sliding) > 900
        assert max(sliding) <= 1e-8
        assert traj.alphas[-1] == pytest.approx(0.5, abs=1e-12)
        assert np.allclose(traj.states[-1], [1.5, 0.0], atol=1e-9)

    def test_slide_exit_to_minus(self):
        loop = make_loop(("1", "-1"), ("1", "1 - x1"))
        traj = simulate(loop, [0.0, 0.5], (0.0, 1.5), 1e-3)
        kinds = [e.kind for e in traj.events]
        assert kinds == ["slide-entry", "slide-exit"]
        assert traj.events[1].time == pytest.approx(1.0, abs=2e-3)
        # integrate dx2 = 1 - x1 from the exit: x2(1.5) = -0.125
        assert np.allclose(traj.states[-1], [1.5, -0.125], atol=1e-5)
        assert traj.modes[-1] is Mode.MINUS

    def test_slide_exit_to_plus(self):
        loop = make_loop(("1", "x1 - 1"), ("1", "1"))
        traj = simulate(loop, [0.0, -0.5], (0.0, 1.5), 1e-3)
        kinds = [e.kind for e in traj.events]
        assert kinds == ["slide-entry", "slide-exit"]
        assert np.allclose(traj.states[-1], [1.5, 0.125], atol=1e-5)
        assert traj.modes[-1] is Mode.PLUS

    def test_event_times_strictly_increase(self):
        loop = make_loop(("1", "-1"), ("1", "1 - x1"))
        traj = simulate(loop, [0.0, 0.5], (0.0, 1.5), 1e-3)
        times = [e.time for e in traj.events]
        assert all(b > a for a, b in zip(times, times[1:]))
        assert np.all(np.diff(traj.times) > 0)

    def test_determinism_bit_identical(self, ex1_cfg):
        loop = assemble_closed_loop(ex1_cfg.system, ex1_cfg.controller())
        t1 = simulate(loop, [1.0, 4.0], (0.0, 2.0), 1e-3)
        t2 = simulate(loop, [1.0, 4.0], (0.0, 2.0), 1e-3)
        assert np.array_equal(t1.states, t2.states)
        assert np.array_equal(t1.times, t2.times)
        assert [e.time for e in t1.events] == [e.time for e in t2.events]

    def test_escaping_region_reported(self):
        loop = make_loop(("0", "1"), ("0", "-1"))
        with pytest.raises(EscapingRegionError):
            simulate(loop, [0.0, 0.0], (0.0, 1.0), 1e-3)

    def test_finite_escape_guard(self, ex2_cfg):
        zero = VectorExpr.zeros(1, VARS)
        ctl = SwitchedController(u_plus=zero, u_minus=zero,
                                 surface=make_surface("x2 - 2"))
        loop = assemble_closed_loop(ex2_cfg.system, ctl)
        with pytest.raises(FiniteEscapeError) as err:
            simulate(loop, [1.0, 9.0], (0.0, 4.0), 1e-3)
        partial = err.value.trajectory
        assert partial is not None
        assert partial.states[-1, 1] > 100.0  # grows past 100 before the guard
        assert err.value.time < 0.5

    def test_custom_divergence_bound(self):
        loop = make_loop(("x1", "0"), ("x1", "0"), h="x2 + 1")
        with pytest.raises(FiniteEscapeError):
            simulate(loop, [1.0, 0.0], (0.0, 20.0), 1e-2, divergence_bound=100.0)


class TestRegularization:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            RegularizationConfig(epsilon=0.0)
        with pytest.raises(ValueError):
            RegularizationConfig(epsilon=0.1, transition="nope")

    def test_pure_regions_exact(self):
        loop = make_loop(("1", "2"), ("-1", "-2"))
        cfg = RegularizationConfig(epsilon=0.5)
        x_hi = np.array([0.0, 0.5])   # H = eps exactly
        x_lo = np.array([0.0, -3.0])
        assert np.array_equal(regularized_field(loop, cfg, x_hi), loop.plus(x_hi))
        assert np.array_equal(regularized_field(loop, cfg, x_lo), loop.minus(x_lo))

    def test_midpoint_blend(self):
        loop = make_loop(("1", "2"), ("3", "-4"))
        cfg = RegularizationConfig(epsilon=0.5)
        x = np.array([0.0, 0.0])
        assert np.allclose(regularized_field(loop, cfg, x), [2.0, -1.0])

    def test_transitions_are_c1_at_layer_edge(self):
        for name in filippov.TRANSITIONS:
            cfg = RegularizationConfig(epsilon=1e-2, transition=name)
            assert cfg.phi(1e-2) == 1.0
            assert cfg.phi(-1e-2) == -1.0
            d = (cfg.phi(1e-2) - cfg.phi(1e-2 - 1e-9)) / 1e-9
            assert abs(d) <= 1e-5  # flat slope at the edge

    def test_epsilon_gap_small_on_crossing_loop(self, ex1_cfg):
        loop = assemble_closed_loop(ex1_cfg.system, ex1_cfg.controller())
        ref = simulate(loop, [1.0, 4.0], (0.0, 1.0), 1e-3)
        tr = simulate_smooth(regularize(loop, RegularizationConfig(1e-3)),
                             [1.0, 4.0], (0.0, 1.0), 1e-3,
                             surface=loop.surface)
        assert float(np.max(np.abs(tr.states - ref.states))) <= 5e-2


class TestExport:
    def test_trajectory_csv_shape(self, ex1_cfg):
        loop = assemble_closed_loop(ex1_cfg.system, ex1_cfg.controller())
        traj = simulate(loop, [1.0, 4.0], (0.0, 0.1), 1e-3)
        text = filippov.trajectory_csv(traj, loop.surface, VARS)
        lines = text.strip().split("\n")
        assert lines[0] == "t,x1,x2,mode,H"
        assert len(lines) == traj.n_samples + 1
        assert lines[1].endswith(",+,2.0")

    def test_events_csv(self, ex1_cfg):
        loop = assemble_closed_loop(ex1_cfg.system, ex1_cfg.controller())
        traj = simulate(loop, [1.0, 4.0], (0.0, 0.5), 1e-3)
        text = filippov.events_csv(traj, VARS)
        lines = text.strip().split("\n")
        assert lines[0] == "t,x1,x2,kind"
        assert len(lines) == len(traj.events) + 1
        assert "crossing" in lines[1]
