"""Event-driven simulation of bimodal Filippov systems.

Fixed-step RK4 inside each smooth region; switching events are located by
bisection on H composed with cubic-Hermite dense output of the step, then
classified as crossing or attracting sliding from the normal components of
the two fields. Sliding segments integrate the Filippov convex combination

    F_s = alpha F+ + (1 - alpha) F-,   alpha = (gH.F-) / (gH.(F- - F+)),

which satisfies gH.F_s = 0 by construction; each sliding step is projected
back onto Sigma by a Newton step on H. Sliding exits when alpha leaves
[0, 1]: to S+ when alpha > 1, to S- when alpha < 0.

A boundary-layer regularization of the switched field is also provided for
comparison runs: the discontinuity is blended over |H| < epsilon by an odd
C1 transition function.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dynamics import ClosedLoopField, VectorField, ZeroGradientError

__all__ = [
    "Mode",
    "Decision",
    "Event",
    "Trajectory",
    "SimulationError",
    "EscapingRegionError",
    "FiniteEscapeError",
    "SlidingDegenerateError",
    "classify",
    "sliding_alpha",
    "sliding_field",
    "simulate",
    "simulate_smooth",
    "RegularizationConfig",
    "regularized_field",
    "regularize",
    "trajectory_csv",
    "events_csv",
]

EVENT_TOL = 1e-10        # |H| target for event location
SLIDING_BAND = 1e-8      # |H| kept below this during sliding
DEFAULT_DIVERGENCE = 1e6


class Mode(Enum):
    PLUS = "+"
    MINUS = "-"
    SLIDING = "slide"


class Decision(Enum):
    CROSS_TO_PLUS = "cross+"
    CROSS_TO_MINUS = "cross-"
    SLIDE = "slide"


@dataclass(frozen=True)
class Event:
    time: float
    state: np.ndarray
    kind: str  # "crossing" | "slide-entry" | "slide-exit"


@dataclass
class Trajectory:
    times: np.ndarray    # (N+1,) strictly increasing
    states: np.ndarray   # (N+1, n)
    modes: list          # Mode per sample
    events: list         # Event records in time order
    alphas: np.ndarray   # Filippov alpha per sample, nan outside sliding
    variables: tuple = ()

    @property
    def n_samples(self) -> int:
        return len(self.times)


class SimulationError(RuntimeError):
    def __init__(self, message: str, time: float = math.nan, trajectory=None):
        super().__init__(message)
        self.time = time
        self.trajectory = trajectory


class EscapingRegionError(SimulationError):
    """Both fields point away from Sigma: right-uniqueness is violated."""


class FiniteEscapeError(SimulationError):
    """State left the divergence bound (or became non-finite)."""


class SlidingDegenerateError(SimulationError):
    """Filippov combination is undefined: gH.(F- - F+) is numerically zero."""


def classify(surface, f_plus, f_minus, x) -> Decision:
    """Mode decision on Sigma from the normal field components.

    With a = gH.F+(x) and b = gH.F-(x): same-sign normals cross, a < 0 < b
    is attracting sliding, a > 0 > b is the (excluded) escaping case.
    """
    x = np.asarray(x, dtype=float)
    grad = surface.gradient(x)
    a = float(np.dot(grad, f_plus(x)))
    b = float(np.dot(grad, f_minus(x)))
    if a > 0.0 and b > 0.0:
        return Decision.CROSS_TO_PLUS
    if a < 0.0 and b < 0.0:
        return Decision.CROSS_TO_MINUS
    if a <= 0.0 <= b and not (a == 0.0 and b == 0.0):
        return Decision.SLIDE
    raise EscapingRegionError(
        f"escaping/degenerate configuration on Sigma at {x.tolist()}: "
        f"gH.F+ = {a:.6g}, gH.F- = {b:.6g}")


def sliding_alpha(fp_val, fm_val, grad) -> float:
    """Filippov weight alpha solving gH.(alpha F+ + (1-alpha) F-) = 0."""
    a = float(np.dot(grad, fp_val))
    b = float(np.dot(grad, fm_val))
    den = b - a
    if abs(den) < 1e-12:
        raise SlidingDegenerateError(
            f"sliding combination undefined: gH.(F- - F+) = {den:.3e}")
    return b / den


def sliding_field(f_plus, f_minus, surface, x) -> np.ndarray:
    """Filippov sliding vector field at a point of attracting sliding."""
    x = np.asarray(x, dtype=float)
    vp = f_plus(x)
    vm = f_minus(x)
    alpha = sliding_alpha(vp, vm, surface.gradient(x))
    return alpha * vp + (1.0 - alpha) * vm


# ---------------------------------------------------------------------------
# integration machinery

def _rk4(f, x, h):
    k1 = f(x)
    k2 = f(x + (0.5 * h) * k1)
    k3 = f(x + (0.5 * h) * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4), k1


def _hermite(x0, f0, x1, f1, h):
    def dense(theta):
        t2 = theta * theta
        t3 = t2 * theta
        return ((2.0 * t3 - 3.0 * t2 + 1.0) * x0
                + (t3 - 2.0 * t2 + theta) * h * f0
                + (-2.0 * t3 + 3.0 * t2) * x1
                + (t3 - t2) * h * f1)
    return dense


def _bisect_root(gfun, tol=EVENT_TOL, max_iter=200):
    glo = gfun(0.0)
    if abs(glo) <= tol:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gm = gfun(mid)
        if abs(gm) <= tol:
            return mid
        if (gm > 0.0) == (glo > 0.0):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo <= 1e-16:
            break
    return 0.5 * (lo + hi)


def _project_to_surface(surface, x, tol=1e-12, max_iter=3):
    for _ in range(max_iter):
        h = surface.value(x)
        if abs(h) <= tol:
            break
        grad = surface.gradient(x)
        g2 = float(np.dot(grad, grad))
        if g2 <= 1e-18:
            raise ZeroGradientError(f"grad H vanishes near {x.tolist()}")
        x = x - (h / g2) * grad
    return x


def _check_state(x, bound):
    if not np.all(np.isfinite(x)) or float(np.max(np.abs(x))) > bound:
        raise FiniteEscapeError(
            f"state left the divergence bound {bound:g}")


def _advance_step(loop: ClosedLoopField, x, mode, t, h, bound, events):
    """Integrate exactly h forward, resolving any events inside the step."""
    surface = loop.surface
    fp, fm = loop.plus, loop.minus
    remaining = h
    alpha = math.nan
    for _ in range(64):
        if remaining <= 1e-15 * h:
            return x, mode, alpha
        if mode is Mode.SLIDING:
            grad = surface.gradient(x)
            alpha = sliding_alpha(fp(x), fm(x), grad)
            if alpha > 1.0:
                events.append(Event(t, x.copy(), "slide-exit"))
                mode = Mode.PLUS
                alpha = math.nan
                continue
            if alpha < 0.0:
                events.append(Event(t, x.copy(), "slide-exit"))
                mode = Mode.MINUS
                alpha = math.nan
                continue
            fs = lambda y: sliding_field(fp, fm, surface, y)  # noqa: E731
            xn, _ = _rk4(fs, x, remaining)
            xn = _project_to_surface(surface, xn)
            _check_state(xn, bound)
            x = xn
            t += remaining
            remaining = 0.0
            alpha = sliding_alpha(fp(x), fm(x), surface.gradient(x))
            continue

        f = fp if mode is Mode.PLUS else fm
        with np.errstate(over="ignore", invalid="ignore"):
            xn, f0 = _rk4(f, x, remaining)
        _check_state(xn, bound)
        hn = surface.value(xn)
        crossed = (hn < -EVENT_TOL) if mode is Mode.PLUS else (hn > EVENT_TOL)
        if not crossed:
            x = xn
            t += remaining
            remaining = 0.0
            continue

        dense = _hermite(x, f0, xn, f(xn), remaining)
        theta = _bisect_root(lambda s: surface.value(dense(s)))
        xe = dense(theta)
        if abs(surface.value(xe)) > EVENT_TOL:
            xe = _project_to_surface(surface, xe, tol=EVENT_TOL)
        te = t + theta * remaining
        decision = classify(surface, fp, fm, xe)
        if decision is Decision.SLIDE:
            events.append(Event(te, xe.copy(), "slide-entry"))
            mode = Mode.SLIDING
        else:
            events.append(Event(te, xe.copy(), "crossing"))
            mode = (Mode.PLUS if decision is Decision.CROSS_TO_PLUS
                    else Mode.MINUS)
        x = xe
        remaining = remaining * (1.0 - theta)
        t = te
    raise SimulationError(f"too many switching events within one step at t = {t:.6g}",
                          time=t)


def _time_grid(t_span, step):
    t0, t1 = float(t_span[0]), float(t_span[1])
    if step <= 0.0:
        raise ValueError(f"step must be positive, got {step}")
    if t1 <= t0:
        raise ValueError("empty trajectory: t_span must have positive length")
    n = max(1, int(round((t1 - t0) / step)))
    times = t0 + step * np.arange(n + 1)
    times[-1] = t1
    return times


def simulate(loop: ClosedLoopField, x0, t_span, step,
             divergence_bound: float = DEFAULT_DIVERGENCE) -> Trajectory:
    """Simulate the switched closed loop on a fixed output time grid.

    Events inside a step are resolved by splitting the step internally, so
    two runs with the same t_span and step share the output grid exactly.
    Raises FiniteEscapeError / EscapingRegionError with the partial
    trajectory attached.
    """
    times = _time_grid(t_span, step)
    surface = loop.surface
    x = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state must be finite")

    events: list = []
    h0 = surface.value(x)
    if h0 > EVENT_TOL:
        mode = Mode.PLUS
    elif h0 < -EVENT_TOL:
        mode = Mode.MINUS
    else:
        decision = classify(surface, loop.plus, loop.minus, x)
        if decision is Decision.SLIDE:
            mode = Mode.SLIDING
            events.append(Event(float(times[0]), x.copy(), "slide-entry"))
        else:
            mode = (Mode.PLUS if decision is Decision.CROSS_TO_PLUS
                    else Mode.MINUS)

    states = [x.copy()]
    modes = [mode]
    alphas = [sliding_alpha(loop.plus(x), loop.minus(x), surface.gradient(x))
              if mode is Mode.SLIDING else math.nan]
    for k in range(len(times) - 1):
        h = float(times[k + 1] - times[k])
        try:
            x, mode, alpha = _advance_step(loop, x, mode, float(times[k]), h,
                                           divergence_bound, events)
        except SimulationError as err:
            err.time = float(times[k + 1]) if math.isnan(err.time) else err.time
            err.trajectory = Trajectory(
                times=times[:k + 1].copy(),
                states=np.array(states),
                modes=modes,
                events=events,
                alphas=np.array(alphas),
                variables=loop.plus.variables,
            )
            raise
        states.append(x.copy())
        modes.append(mode)
        alphas.append(alpha)
    return Trajectory(times=times, states=np.array(states), modes=modes,
                      events=events, alphas=np.array(alphas),
                      variables=loop.plus.variables)


def simulate_smooth(fld, x0, t_span, step,
                    divergence_bound: float = DEFAULT_DIVERGENCE,
                    surface=None) -> Trajectory:
    """Fixed-step RK4 for a single smooth field (no event handling).

    Mode labels come from the sign of H when a surface is supplied (useful
    for regularized runs), otherwise every sample is labelled Plus.
    """
    times = _time_grid(t_span, step)
    x = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state must be finite")
    f = fld if callable(fld) and not isinstance(fld, VectorField) else fld

    def label(y):
        if surface is None:
            return Mode.PLUS
        return Mode.PLUS if surface.value(y) >= 0.0 else Mode.MINUS

    states = [x.copy()]
    modes = [label(x)]
    for k in range(len(times) - 1):
        h = float(times[k + 1] - times[k])
        with np.errstate(over="ignore", invalid="ignore"):
            x, _ = _rk4(f, x, h)
        try:
            _check_state(x, divergence_bound)
        except SimulationError as err:
            err.time = float(times[k + 1])
            err.trajectory = Trajectory(
                times=times[:k + 1].copy(), states=np.array(states),
                modes=modes, events=[],
                alphas=np.full(k + 1, math.nan), variables=())
            raise
        states.append(x.copy())
        modes.append(label(x))
    return Trajectory(times=times, states=np.array(states), modes=modes,
                      events=[], alphas=np.full(len(times), math.nan),
                      variables=())


# ---------------------------------------------------------------------------
# boundary-layer regularization

def _phi_cubic(u):
    return 1.5 * u - 0.5 * u ** 3


def _phi_quintic(u):
    return (15.0 * u - 10.0 * u ** 3 + 3.0 * u ** 5) / 8.0


TRANSITIONS = {"cubic": _phi_cubic, "quintic": _phi_quintic}


@dataclass(frozen=True)
class RegularizationConfig:
    """Boundary layer half-width and transition function selector."""

    epsilon: float
    transition: str = "cubic"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.transition not in TRANSITIONS:
            raise ValueError(f"unknown transition {self.transition!r}; "
                             f"choose from {sorted(TRANSITIONS)}")

    def phi(self, s: float) -> float:
        u = min(1.0, max(-1.0, s / self.epsilon))
        return TRANSITIONS[self.transition](u)


def regularized_field(loop: ClosedLoopField, cfg: RegularizationConfig,
                      x) -> np.ndarray:
    """Blended field: F+ above the layer, F- below, C1 transition inside."""
    x = np.asarray(x, dtype=float)
    p = cfg.phi(loop.surface.value(x))
    return 0.5 * (1.0 + p) * loop.plus(x) + 0.5 * (1.0 - p) * loop.minus(x)


def regularize(loop: ClosedLoopField, cfg: RegularizationConfig):
    """Bind the blended field into a plain callable for smooth integration."""
    def f(x):
        return regularized_field(loop, cfg, x)
    return f


# ---------------------------------------------------------------------------
# CSV export

def trajectory_csv(traj: Trajectory, surface=None, variables=None) -> str:
    """Rows `t, x1..xn, mode, H`; H is blank when no surface is given."""
    names = list(variables or traj.variables
                 or [f"x{i+1}" for i in range(traj.states.shape[1])])
    lines = ["t," + ",".join(names) + ",mode,H"]
    for i in range(traj.n_samples):
        row = [repr(float(traj.times[i]))]
        row += [repr(float(v)) for v in traj.states[i]]
        row.append(traj.modes[i].value)
        row.append(repr(surface.value(traj.states[i])) if surface is not None
                   else "")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def events_csv(traj: Trajectory, variables=None) -> str:
    """Rows `t, x1..xn, kind`, one per recorded event."""
    n = traj.states.shape[1] if traj.states.size else len(traj.variables)
    names = list(variables or traj.variables or [f"x{i+1}" for i in range(n)])
    lines = ["t," + ",".join(names) + ",kind"]
    for evt in traj.events:
        row = [repr(float(evt.time))]
        row += [repr(float(v)) for v in evt.state]
        row.append(evt.kind)
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
