"""Grid-based contraction certificates and trajectory decay checks.

Certification is pointwise on sampled grids: the worst (largest) matrix
measure of the relevant Jacobian is reported together with the grid spacing
so coverage can be judged. Region closures are realized by appending the
located Sigma samples to both one-sided grids. This is sampling, not
interval arithmetic; the soundness gap is the caller's to assess.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics, filippov
from .dynamics import ZeroGradientError
from .measures import MeasureKind, matrix_measure, matrix_measure_many, vector_norm

__all__ = [
    "RegionSpec",
    "RegionPartition",
    "MarginReport",
    "Certificate",
    "DecayReport",
    "EmptyRegionError",
    "EmptySigmaError",
    "MismatchedGridError",
    "check_contraction",
    "check_theorem2",
    "check_theorem3",
    "sample_sigma",
    "check_decay",
    "control_effort",
    "certificate_to_dict",
    "decay_report_to_dict",
]

SIGMA_TOL = 1e-9  # default |mu| tolerance for the switching-jump condition


class EmptyRegionError(ValueError):
    """Region contains no grid points after predicate filtering."""


class EmptySigmaError(ValueError):
    """H does not change sign anywhere on the sampling grid."""


class MismatchedGridError(ValueError):
    """Trajectory pair was not simulated on a shared time grid."""


@dataclass(frozen=True)
class RegionSpec:
    """Axis-aligned box with per-axis grid resolution and optional predicate.

    The predicate (rows -> bool mask) restricts membership; boxes without a
    predicate are convex and therefore 1-reachable, which the decay theorems
    assume. Predicate-restricted regions are used here without recomputing a
    reachability constant.
    """

    bounds: tuple
    resolution: tuple
    predicate: object = None
    predicate_desc: str = ""

    def __post_init__(self):
        if len(self.bounds) != len(self.resolution):
            raise ValueError("bounds and resolution must have equal length")
        for (lo, hi), r in zip(self.bounds, self.resolution):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"invalid axis bounds ({lo}, {hi})")
            if r < 2:
                raise ValueError(f"grid resolution must be >= 2, got {r}")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def axes(self):
        return [np.linspace(lo, hi, r)
                for (lo, hi), r in zip(self.bounds, self.resolution)]

    def spacing(self) -> tuple:
        return tuple((hi - lo) / (r - 1)
                     for (lo, hi), r in zip(self.bounds, self.resolution))

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        if self.predicate is not None:
            pts = pts[np.asarray(self.predicate(pts), dtype=bool)]
        return pts

    def refined(self, factor: int = 2) -> "RegionSpec":
        return replace(self, resolution=tuple(
            (r - 1) * factor + 1 for r in self.resolution))

    def meta(self) -> dict:
        return {
            "bounds": [list(b) for b in self.bounds],
            "resolution": list(self.resolution),
            "spacing": list(self.spacing()),
            "predicate": self.predicate_desc or None,
        }


@dataclass(frozen=True)
class RegionPartition:
    """One-sided subregions of a design region plus located Sigma samples."""

    splus: RegionSpec
    sminus: RegionSpec
    sigma: np.ndarray


@dataclass(frozen=True)
class MarginReport:
    measure: MeasureKind
    rate: float
    worst: float
    worst_point: np.ndarray
    passed: bool
    n_points: int
    spacing: tuple


@dataclass(frozen=True)
class Certificate:
    measure: str
    c_bar: float
    c1: float
    c2: float
    worst_margin_splus: float | None
    worst_margin_sminus: float | None
    worst_sigma_mu: float
    grid: dict
    verdict: bool
    c: float
    sigma_tol: float = SIGMA_TOL
    n_sigma: int = 0


@dataclass(frozen=True)
class DecayReport:
    pair_id: str
    K: float
    lam: float
    norm: str
    ratios: np.ndarray
    max_ratio: float
    verdict: bool
    tolerance: float


# ---------------------------------------------------------------------------

def _worst_measure(fld, pts: np.ndarray, kind: MeasureKind):
    mus = matrix_measure_many(kind, fld.jacobian_many(pts))
    i = int(np.argmax(mus))
    return float(mus[i]), pts[i]


def check_contraction(fld, region: RegionSpec, kind: MeasureKind,
                      c: float) -> MarginReport:
    """Worst mu(Jacobian) over the region grid; passes iff worst <= -c."""
    kind = MeasureKind.parse(kind)
    pts = region.points()
    if len(pts) == 0:
        raise EmptyRegionError("region contains no grid points")
    worst, where = _worst_measure(fld, pts, kind)
    return MarginReport(measure=kind, rate=c, worst=worst, worst_point=where,
                        passed=worst <= -c, n_points=len(pts),
                        spacing=region.spacing())


def sample_sigma(surface, region: RegionSpec, min_count: int | None = None,
                 tol: float = 1e-10) -> np.ndarray:
    """Locate Sigma = {H = 0} by bisection along grid lines of the region.

    Scans every axis-aligned grid line for sign changes of H between
    adjacent nodes, bisects each bracket to |H| <= tol, deduplicates within
    half a grid spacing, and returns the samples sorted lexicographically.
    For max-of-branches surfaces, points where the top branches tie are
    skipped with a warning.
    """
    spec = region
    for _ in range(4):
        pts = _scan_sigma(surface, spec, tol)
        if min_count is None or len(pts) >= min_count:
            break
        spec = spec.refined(2)
    if len(pts) == 0:
        raise EmptySigmaError("H does not change sign on the region grid")
    return pts


def _scan_sigma(surface, region: RegionSpec, tol: float) -> np.ndarray:
    axes = region.axes()
    shape = tuple(region.resolution)
    mesh = np.meshgrid(*axes, indexing="ij")
    grid_pts = np.stack([m.ravel() for m in mesh], axis=1)
    hvals = np.asarray(surface.value_many(grid_pts), dtype=float).reshape(shape)

    found = []
    ties = 0
    for k in range(region.dim):
        hk = np.moveaxis(hvals, k, -1)
        sign_change = hk[..., :-1] * hk[..., 1:] < 0.0
        node_zero = np.abs(hk) <= 1e-14
        for idx in np.argwhere(sign_change):
            base = list(idx[:-1])
            i = idx[-1]
            xa = _line_point(axes, k, base, i, region.dim)
            xb = _line_point(axes, k, base, i + 1, region.dim)
            root = _bisect_segment(surface, xa, xb, tol)
            if root is not None:
                found.append(root)
        for idx in np.argwhere(node_zero):
            base = list(idx[:-1])
            found.append(_line_point(axes, k, base, idx[-1], region.dim))

    out = []
    seen = set()
    spacing = region.spacing()
    for p in found:
        if hasattr(surface, "is_tie") and surface.is_tie(p):
            ties += 1
            continue
        if float(np.linalg.norm(surface.gradient(p))) <= dynamics.GRADIENT_FLOOR:
            raise ZeroGradientError(
                f"grad H numerically zero on Sigma at {p.tolist()}")
        key = tuple(int(round((p[i] - region.bounds[i][0]) / (0.5 * spacing[i])))
                    for i in range(region.dim))
        if key in seen:
            continue
        seen.add(key)
        out.append(p)
    if ties:
        warnings.warn(f"skipped {ties} Sigma sample(s) at branch ties",
                      stacklevel=2)
    if not out:
        return np.empty((0, region.dim))
    pts = np.array(out)
    if region.predicate is not None:
        pts = pts[np.asarray(region.predicate(pts), dtype=bool)]
    if len(pts) == 0:
        return np.empty((0, region.dim))
    order = np.lexsort(pts.T[::-1])
    return pts[order]


def _line_point(axes, k, base, i, dim):
    coords = np.empty(dim)
    others = [d for d in range(dim) if d != k]
    for pos, d in enumerate(others):
        coords[d] = axes[d][base[pos]]
    coords[k] = axes[k][i]
    return coords


def _bisect_segment(surface, xa, xb, tol, max_iter=200):
    ga = surface.value(xa)
    gb = surface.value(xb)
    if abs(ga) <= tol:
        return xa
    if abs(gb) <= tol:
        return xb
    if (ga > 0.0) == (gb > 0.0):
        return None
    lo, hi = 0.0, 1.0
    seg = xb - xa
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        xm = xa + mid * seg
        gm = surface.value(xm)
        if abs(gm) <= tol:
            return xm
        if (gm > 0.0) == (ga > 0.0):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17:
            return xm
    return xa + 0.5 * (lo + hi) * seg


# ---------------------------------------------------------------------------
# theorem certificates

def _closure_points(region: RegionSpec, sigma: np.ndarray) -> np.ndarray:
    pts = region.points()
    if len(sigma):
        pts = np.vstack([pts, sigma]) if len(pts) else sigma
    return pts


def _one_sided_margin(fld, region, sigma, kind):
    pts = _closure_points(region, sigma)
    if len(pts) == 0:
        return None, None
    return _worst_measure(fld, pts, kind)


def _build_certificate(kind, c1, c2, worst_p, worst_m, worst_sigma, grid_meta,
                       sigma_tol, n_sigma, c_bar):
    cond1 = worst_p is None or worst_p <= -c1
    cond2 = worst_m is None or worst_m <= -c2
    cond3 = worst_sigma <= sigma_tol
    c = min(c1, c2)
    return Certificate(
        measure=kind.value, c_bar=c_bar if c_bar is not None else c,
        c1=c1, c2=c2,
        worst_margin_splus=worst_p, worst_margin_sminus=worst_m,
        worst_sigma_mu=worst_sigma, grid=grid_meta,
        verdict=bool(cond1 and cond2 and cond3), c=c,
        sigma_tol=sigma_tol, n_sigma=n_sigma)


def check_theorem2(f_plus, f_minus, surface, regions: RegionPartition,
                   kind: MeasureKind, c1: float, c2: float,
                   sigma_tol: float = SIGMA_TOL,
                   c_bar: float | None = None) -> Certificate:
    """Certificate for a bimodal Filippov pair given directly as fields.

    Checks mu(DF+) <= -c1 on the closure of S+, mu(DF-) <= -c2 on the
    closure of S-, and |mu([F+ - F-] gradH^T)| <= sigma_tol on the Sigma
    samples. Closures are realized by appending the Sigma samples to both
    one-sided grids.
    """
    kind = MeasureKind.parse(kind)
    worst_p, _ = _one_sided_margin(f_plus, regions.splus, regions.sigma, kind)
    worst_m, _ = _one_sided_margin(f_minus, regions.sminus, regions.sigma, kind)
    if worst_p is None and worst_m is None:
        raise EmptyRegionError("both one-sided regions are empty")
    if len(regions.sigma) == 0 and worst_p is not None and worst_m is not None:
        raise EmptySigmaError("no Sigma samples for a two-sided region")

    worst_sigma = 0.0
    for x in regions.sigma:
        jump = np.outer(f_plus(x) - f_minus(x), surface.gradient(x))
        worst_sigma = max(worst_sigma, abs(matrix_measure(kind, jump)))
    grid_meta = {"splus": regions.splus.meta(), "sminus": regions.sminus.meta(),
                 "n_sigma": int(len(regions.sigma))}
    return _build_certificate(kind, c1, c2, worst_p, worst_m, worst_sigma,
                              grid_meta, sigma_tol, len(regions.sigma), c_bar)


def check_theorem3(sys: dynamics.ControlledSystem,
                   ctl: dynamics.SwitchedController,
                   regions: RegionPartition, kind: MeasureKind,
                   c1: float, c2: float, sigma_tol: float = SIGMA_TOL,
                   c_bar: float | None = None) -> Certificate:
    """Certificate for the switched closed loop f + g u+/-.

    Assembles F+/- symbolically and applies the Filippov certificate; the
    Sigma condition is evaluated on the rank-one jump matrix
    (g [u+ - u-]) gradH^T.
    """
    kind = MeasureKind.parse(kind)
    loop = dynamics.assemble_closed_loop(sys, ctl)
    worst_p, _ = _one_sided_margin(loop.plus, regions.splus, regions.sigma, kind)
    worst_m, _ = _one_sided_margin(loop.minus, regions.sminus, regions.sigma, kind)
    if worst_p is None and worst_m is None:
        raise EmptyRegionError("both one-sided regions are empty")
    if len(regions.sigma) == 0 and worst_p is not None and worst_m is not None:
        raise EmptySigmaError("no Sigma samples for a two-sided region")

    worst_sigma = 0.0
    for x in regions.sigma:
        jump = dynamics.jump_matrix(sys, ctl, x, surface_tol=1e-6)
        worst_sigma = max(worst_sigma, abs(matrix_measure(kind, jump)))
    grid_meta = {"splus": regions.splus.meta(), "sminus": regions.sminus.meta(),
                 "n_sigma": int(len(regions.sigma))}
    return _build_certificate(kind, c1, c2, worst_p, worst_m, worst_sigma,
                              grid_meta, sigma_tol, len(regions.sigma), c_bar)


# ---------------------------------------------------------------------------
# trajectory checks

def _norms_many(kind: MeasureKind, rows: np.ndarray) -> np.ndarray:
    if kind is MeasureKind.ONE:
        return np.sum(np.abs(rows), axis=1)
    if kind is MeasureKind.TWO:
        return np.sqrt(np.sum(rows * rows, axis=1))
    return np.max(np.abs(rows), axis=1)


def check_decay(traj_x: filippov.Trajectory, traj_y: filippov.Trajectory,
                K: float, lam: float, kind: MeasureKind,
                tolerance: float = 1e-6, pair_id: str = "pair") -> DecayReport:
    """Check |x(t) - y(t)| <= K exp(-lam (t - t0)) |x0 - y0| samplewise."""
    kind = MeasureKind.parse(kind)
    if not np.array_equal(traj_x.times, traj_y.times):
        raise MismatchedGridError(
            "trajectories must share a time grid (same t_span and step)")
    t = traj_x.times
    gaps = _norms_many(kind, traj_x.states - traj_y.states)
    d0 = gaps[0]
    envelope = K * np.exp(-lam * (t - t[0])) * d0
    ratios = np.empty_like(gaps)
    zero_gap = gaps == 0.0
    ratios[zero_gap] = 0.0
    with np.errstate(divide="ignore"):
        ratios[~zero_gap] = gaps[~zero_gap] / envelope[~zero_gap]
    max_ratio = float(np.max(ratios))
    return DecayReport(pair_id=pair_id, K=K, lam=lam, norm=kind.value,
                       ratios=ratios, max_ratio=max_ratio,
                       verdict=max_ratio <= 1.0 + tolerance,
                       tolerance=tolerance)


def _trapezoid(t: np.ndarray, y: np.ndarray) -> float:
    dt = np.diff(t)
    return float(np.sum(0.5 * dt * (y[1:] + y[:-1])))


def control_effort(traj: filippov.Trajectory,
                   ctl: dynamics.SwitchedController) -> float:
    """Trapezoidal integral of |u(x(t))|_2^2 along a trajectory.

    u follows the recorded mode: u+ in S+, u- in S-, and the Filippov
    average alpha u+ + (1 - alpha) u- while sliding.
    """
    states = traj.states
    up = np.stack([np.broadcast_to(np.asarray(v, dtype=float), len(states))
                   for v in ctl.u_plus.compiled(*states.T)], axis=1)
    um = np.stack([np.broadcast_to(np.asarray(v, dtype=float), len(states))
                   for v in ctl.u_minus.compiled(*states.T)], axis=1)
    u = np.empty_like(up)
    for i, mode in enumerate(traj.modes):
        if mode is filippov.Mode.PLUS:
            u[i] = up[i]
        elif mode is filippov.Mode.MINUS:
            u[i] = um[i]
        else:
            a = traj.alphas[i]
            a = 0.5 if np.isnan(a) else a
            u[i] = a * up[i] + (1.0 - a) * um[i]
    return _trapezoid(traj.times, np.sum(u * u, axis=1))


# ---------------------------------------------------------------------------
# serialization

def certificate_to_dict(cert: Certificate) -> dict:
    return {
        "measure": cert.measure,
        "c_bar": cert.c_bar,
        "c1": cert.c1,
        "c2": cert.c2,
        "worst_margin_splus": cert.worst_margin_splus,
        "worst_margin_sminus": cert.worst_margin_sminus,
        "worst_sigma_mu": cert.worst_sigma_mu,
        "grid": cert.grid,
        "verdict": "pass" if cert.verdict else "fail",
        "c": cert.c,
        "sigma_tol": cert.sigma_tol,
        "n_sigma": cert.n_sigma,
    }


def decay_report_to_dict(rep: DecayReport) -> dict:
    return {
        "pair_id": rep.pair_id,
        "K": rep.K,
        "lambda": rep.lam,
        "norm": rep.norm,
        "max_ratio": rep.max_ratio,
        "n_samples": int(len(rep.ratios)),
        "tolerance": rep.tolerance,
        "verdict": "pass" if rep.verdict else "fail",
    }
