"""Switching-controller synthesis from the open-loop measure profile.

The design procedure: choose the switching function as the open-loop
measure margin H(x) = mu(Df(x)) + c_bar, so Sigma = {H = 0} separates the
region where the open loop already contracts at rate c_bar (u- = 0 there)
from the region S+ where control is needed. A gain lattice over a declared
template for u+ is then scanned, smallest magnitude first, until the
closed-loop conditions hold on the closure of S+ and on Sigma.
"""

import itertools
from dataclasses import dataclass, replace

import numpy as np

from . import certify, expr as ex
from .certify import RegionPartition, RegionSpec, sample_sigma
from .dynamics import (ControlledSystem, MaxSurface, SwitchedController,
                       VectorField, assemble_closed_loop, jump_matrix)
from .expr import VectorExpr
from .measures import MeasureKind, matrix_measure, matrix_measure_many

__all__ = [
    "DesignSpec",
    "DesignResult",
    "GainSearchError",
    "MeasureSurface",
    "build_H",
    "partition_regions",
    "gain_search",
    "design_result_to_dict",
]


class GainSearchError(RuntimeError):
    """No gain vector in the scanned lattice satisfies the conditions."""

    def __init__(self, message, best_gains=None, best_margin=None,
                 best_sigma=None):
        super().__init__(message)
        self.best_gains = best_gains
        self.best_margin = best_margin
        self.best_sigma = best_sigma


@dataclass(frozen=True)
class DesignSpec:
    """Inputs to gain_search.

    template: per input channel, the basis expressions whose gains are
    scanned (u+_i = sum_j k_ij basis_j). The basis is declared by the user;
    it is not inferred.
    """

    system: ControlledSystem
    c_bar: float
    kind: MeasureKind
    region: RegionSpec
    template: tuple
    gain_bounds: tuple
    gain_step: float
    sigma_tol: float = certify.SIGMA_TOL

    def __post_init__(self):
        if self.c_bar <= 0:
            raise ValueError(f"c_bar must be positive, got {self.c_bar}")
        lo, hi = self.gain_bounds
        if not (lo < hi) or self.gain_step <= 0:
            raise ValueError("gain bounds must satisfy lo < hi with step > 0")


@dataclass(frozen=True)
class DesignResult:
    gains: tuple
    u_plus: VectorExpr
    u_minus: VectorExpr
    surface: object
    sigma_description: str
    certificate: certify.Certificate
    already_contracting: bool = False
    message: str = ""


class MeasureSurface:
    """Numeric H(x) = mu(Df(x)) + c_bar for measures without closed branches.

    Used for the Euclidean measure, whose value is an eigenvalue rather
    than a max of smooth expressions; the gradient falls back to central
    differences (step 1e-6).
    """

    def __init__(self, fld: VectorField, kind: MeasureKind, c_bar: float,
                 fd_step: float = 1e-6):
        self.field = fld
        self.kind = kind
        self.c_bar = c_bar
        self.fd_step = fd_step
        self.variables = fld.variables

    def value(self, x) -> float:
        return matrix_measure(self.kind, self.field.jacobian(x)) + self.c_bar

    def value_many(self, pts) -> np.ndarray:
        return (matrix_measure_many(self.kind, self.field.jacobian_many(pts))
                + self.c_bar)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.empty_like(x)
        for i in range(len(x)):
            e = np.zeros_like(x)
            e[i] = self.fd_step
            g[i] = (self.value(x + e) - self.value(x - e)) / (2 * self.fd_step)
        return g

    def describe(self) -> str:
        return f"mu_{self.kind.value}(Df(x)) + {self.c_bar!r}"


def build_H(sys: ControlledSystem, kind: MeasureKind, c_bar: float):
    """Switching function H(x) = mu(Df(x)) + c_bar.

    For the 1- and inf-measures H is an exact max of smooth branch
    expressions (one per column/row) with branch bookkeeping; the Euclidean
    measure gets a numeric surface.
    """
    kind = MeasureKind.parse(kind)
    if kind is MeasureKind.TWO:
        return MeasureSurface(sys.open_loop, kind, c_bar)
    jac = sys.f.jacobian_exprs()
    n = sys.n
    branches = []
    for k in range(n):
        if kind is MeasureKind.ONE:
            entries = [jac[k][k]] + [ex.abs_(jac[i][k]) for i in range(n) if i != k]
        else:
            entries = [jac[k][k]] + [ex.abs_(jac[k][j]) for j in range(n) if j != k]
        acc = entries[0]
        for e in entries[1:]:
            acc = ex.fold_add(acc, e)
        branches.append(ex.fold_add(acc, ex.const(c_bar)))
    return MaxSurface(branches, sys.variables)


def _and_predicates(first, second):
    if first is None:
        return second
    def both(pts):
        return np.asarray(first(pts), dtype=bool) & np.asarray(second(pts),
                                                               dtype=bool)
    return both


def partition_regions(surface, region: RegionSpec) -> RegionPartition:
    """Split a design region into S+ = {H > 0}, S- = {H < 0}, and Sigma.

    Sigma samples come from certify.sample_sigma; when H has one sign on
    the whole grid the sigma set is empty and one side is empty (the caller
    decides whether that means "already contracting").
    """
    pts = region.points()
    if len(pts) == 0:
        raise certify.EmptyRegionError("design region has no grid points")
    hvals = np.asarray(surface.value_many(pts), dtype=float)
    has_plus = bool(np.any(hvals > 0))
    has_minus = bool(np.any(hvals < 0))

    desc = region.predicate_desc
    splus = replace(region,
                    predicate=_and_predicates(
                        region.predicate,
                        lambda p: np.asarray(surface.value_many(p)) > 0),
                    predicate_desc=(desc + " and " if desc else "") + "H > 0")
    sminus = replace(region,
                     predicate=_and_predicates(
                         region.predicate,
                         lambda p: np.asarray(surface.value_many(p)) < 0),
                     predicate_desc=(desc + " and " if desc else "") + "H < 0")
    if has_plus and has_minus:
        sigma = sample_sigma(surface, region)
    else:
        sigma = np.empty((0, region.dim))
    return RegionPartition(splus=splus, sminus=sminus, sigma=sigma)


def _gain_lattice(bounds, step, n_slots):
    lo, hi = bounds
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    values = [lo + i * step for i in range(count)]
    if values[-1] < hi - 1e-12:
        values.append(hi)
    combos = itertools.product(values, repeat=n_slots)
    return sorted(combos, key=lambda ks: (max(abs(k) for k in ks), ks))


def _template_controls(spec: DesignSpec):
    basis = []
    for channel in spec.template:
        basis.append(tuple(ex.parse(b, spec.system.variables) for b in channel))
    return basis


def _build_u_plus(sys, basis, gains):
    comps = []
    i = 0
    for channel in basis:
        acc = ex.const(0.0)
        for b in channel:
            acc = ex.fold_add(acc, ex.fold_mul(ex.const(gains[i]), b))
            i += 1
        comps.append(acc)
    return VectorExpr(sys.variables, tuple(comps))


def gain_search(spec: DesignSpec) -> DesignResult:
    """Scan the gain lattice for the smallest-magnitude passing controller.

    u- is fixed to zero, so the S- condition holds by construction of H;
    candidates are screened on the closure of S+ and on Sigma, and the
    winner is returned with a full three-condition certificate attached.
    Raises GainSearchError (with the best margin seen) when no lattice
    point passes.
    """
    sys = spec.system
    kind = MeasureKind.parse(spec.kind)
    surface = build_H(sys, kind, spec.c_bar)
    partition = partition_regions(surface, spec.region)
    u_minus = VectorExpr.zeros(sys.m, sys.variables)

    splus_pts = partition.splus.points()
    if len(splus_pts) == 0 and len(partition.sigma) == 0:
        report = certify.check_contraction(sys.open_loop, spec.region, kind,
                                           spec.c_bar)
        cert = certify.Certificate(
            measure=kind.value, c_bar=spec.c_bar, c1=spec.c_bar, c2=spec.c_bar,
            worst_margin_splus=None, worst_margin_sminus=report.worst,
            worst_sigma_mu=0.0, grid={"region": spec.region.meta()},
            verdict=report.passed, c=spec.c_bar, sigma_tol=spec.sigma_tol,
            n_sigma=0)
        n_slots = sum(len(c) for c in spec.template)
        return DesignResult(
            gains=(0.0,) * n_slots, u_plus=u_minus, u_minus=u_minus,
            surface=surface, sigma_description="empty (H < 0 on the region)",
            certificate=cert, already_contracting=True,
            message="open loop already contracting at rate c_bar; "
                    "no switching control needed")

    closure_pts = (np.vstack([splus_pts, partition.sigma])
                   if len(splus_pts) else partition.sigma)
    basis = _template_controls(spec)
    n_slots = sum(len(c) for c in basis)
    best_margin = np.inf
    best_sigma = np.inf
    best_gains = None

    for gains in _gain_lattice(spec.gain_bounds, spec.gain_step, n_slots):
        u_plus = _build_u_plus(sys, basis, gains)
        ctl = SwitchedController(u_plus=u_plus, u_minus=u_minus,
                                 surface=surface)
        loop = assemble_closed_loop(sys, ctl)
        mus = matrix_measure_many(kind, loop.plus.jacobian_many(closure_pts))
        worst1 = float(np.max(mus))
        worst_sigma = 0.0
        if worst1 <= -spec.c_bar:
            for x in partition.sigma:
                jm = jump_matrix(sys, ctl, x)
                worst_sigma = max(worst_sigma, abs(matrix_measure(kind, jm)))
        if (worst1, worst_sigma) < (best_margin, best_sigma):
            best_margin, best_sigma, best_gains = worst1, worst_sigma, gains
        if worst1 <= -spec.c_bar and worst_sigma <= spec.sigma_tol:
            cert = certify.check_theorem3(sys, ctl, partition, kind,
                                          spec.c_bar, spec.c_bar,
                                          sigma_tol=spec.sigma_tol,
                                          c_bar=spec.c_bar)
            if cert.verdict:
                sigma_desc = (f"zero set of {surface.describe()} "
                              f"({len(partition.sigma)} samples)")
                return DesignResult(gains=tuple(gains), u_plus=u_plus,
                                    u_minus=u_minus, surface=surface,
                                    sigma_description=sigma_desc,
                                    certificate=cert)
    raise GainSearchError(
        f"no gain vector in bounds {spec.gain_bounds} at step "
        f"{spec.gain_step} satisfies the conditions "
        f"(best S+ margin {best_margin:.6g} at gains {best_gains})",
        best_gains=best_gains, best_margin=best_margin, best_sigma=best_sigma)


def design_result_to_dict(res: DesignResult) -> dict:
    return {
        "gains": [float(k) for k in res.gains],
        "u_plus": str(res.u_plus),
        "u_minus": str(res.u_minus),
        "H": res.surface.describe(),
        "sigma": res.sigma_description,
        "already_contracting": res.already_contracting,
        "message": res.message,
        "certificate": certify.certificate_to_dict(res.certificate),
    }
