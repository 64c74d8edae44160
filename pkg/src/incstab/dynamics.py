"""Vector fields, switched controllers, and closed-loop assembly.

Closed loops are composed symbolically: F+/- = f + g u+/- at the expression
level, so Jacobians come from exact differentiation of the composed tree
(the product-rule expansion of d/dx [g(x) u(x)] falls out automatically).
"""

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import expr as ex
from .expr import Expr, VectorExpr

__all__ = [
    "VectorField",
    "ControlledSystem",
    "SwitchedController",
    "ClosedLoopField",
    "ExprSurface",
    "MaxSurface",
    "assemble_closed_loop",
    "jacobian",
    "jump_matrix",
    "ZeroGradientError",
]

GRADIENT_FLOOR = 1e-9  # |grad H| below this on Sigma is a modelling error


class ZeroGradientError(ValueError):
    """Switching-function gradient numerically vanishes on its zero set."""


class VectorField:
    """Evaluatable vector field with exact Jacobian callables."""

    def __init__(self, vexpr: VectorExpr):
        self.expr = vexpr
        self.variables = vexpr.variables
        self.dim = vexpr.dim
        self._fn = vexpr.compiled
        self._jfn = vexpr.compiled_jacobian

    def __call__(self, x) -> np.ndarray:
        return np.array(self._fn(*np.asarray(x, dtype=float)), dtype=float)

    def value_many(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate on (N, n) rows, returning (N, dim)."""
        pts = np.asarray(pts, dtype=float)
        cols = self._fn(*pts.T)
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), len(pts))
                         for c in cols], axis=1)

    def jacobian(self, x) -> np.ndarray:
        flat = self._jfn(*np.asarray(x, dtype=float))
        n = len(self.variables)
        return np.array(flat, dtype=float).reshape(self.dim, n)

    def jacobian_many(self, pts: np.ndarray) -> np.ndarray:
        """Jacobians on (N, n) rows, returning (N, dim, n)."""
        pts = np.asarray(pts, dtype=float)
        flat = self._jfn(*pts.T)
        n = len(self.variables)
        cols = [np.broadcast_to(np.asarray(v, dtype=float), len(pts))
                for v in flat]
        return np.stack(cols, axis=1).reshape(len(pts), self.dim, n)


def jacobian(fld: VectorField, x) -> np.ndarray:
    """Exact Jacobian of a field at a point (symbolic differentiation)."""
    return fld.jacobian(x)


class ExprSurface:
    """Smooth switching function H given by a single expression."""

    def __init__(self, e: Expr, variables):
        self.expression = e
        self.variables = tuple(variables)
        self._fn = ex.compile_components([e], self.variables)
        grads = [ex.differentiate(e, v) for v in self.variables]
        self._gfn = ex.compile_components(grads, self.variables)

    @classmethod
    def parse(cls, text: str, variables) -> "ExprSurface":
        return cls(ex.parse(text, variables), variables)

    def value(self, x) -> float:
        return float(self._fn(*np.asarray(x, dtype=float))[0])

    def value_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = self._fn(*pts.T)[0]
        return np.broadcast_to(np.asarray(out, dtype=float), len(pts))

    def gradient(self, x) -> np.ndarray:
        return np.array(self._gfn(*np.asarray(x, dtype=float)), dtype=float)

    def describe(self) -> str:
        return ex.to_infix(self.expression)


class MaxSurface:
    """Switching function H(x) = max_k branch_k(x) over smooth branches.

    The gradient is that of the active (largest) branch. Points where the
    top two branches tie within tie_tol are reported via is_tie; callers
    sampling the zero set should skip them.
    """

    def __init__(self, branches, variables, tie_tol: float = 1e-9):
        self.branches = tuple(branches)
        self.variables = tuple(variables)
        self.tie_tol = tie_tol
        self._fn = ex.compile_components(self.branches, self.variables)
        grads = [ex.differentiate(b, v)
                 for b in self.branches for v in self.variables]
        self._gfn = ex.compile_components(grads, self.variables)

    def _branch_values(self, x) -> np.ndarray:
        return np.array(self._fn(*np.asarray(x, dtype=float)), dtype=float)

    def value(self, x) -> float:
        return float(np.max(self._branch_values(x)))

    def value_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        vals = [np.broadcast_to(np.asarray(v, dtype=float), len(pts))
                for v in self._fn(*pts.T)]
        return np.max(np.stack(vals, axis=0), axis=0)

    def active_branch(self, x) -> int:
        return int(np.argmax(self._branch_values(x)))

    def is_tie(self, x) -> bool:
        vals = np.sort(self._branch_values(x))
        return len(vals) > 1 and (vals[-1] - vals[-2]) <= self.tie_tol

    def gradient(self, x) -> np.ndarray:
        k = self.active_branch(x)
        n = len(self.variables)
        flat = np.array(self._gfn(*np.asarray(x, dtype=float)), dtype=float)
        return flat.reshape(len(self.branches), n)[k]

    def describe(self) -> str:
        return "max(" + ", ".join(ex.to_infix(b) for b in self.branches) + ")"


@dataclass(frozen=True)
class ControlledSystem:
    """Control-affine system dx/dt = f(x) + g(x) u with m input channels."""

    variables: tuple
    f: VectorExpr
    g: tuple  # m columns, each a VectorExpr with n components

    def __post_init__(self):
        n = len(self.variables)
        if self.f.dim != n:
            raise ValueError(f"f has {self.f.dim} components for {n} states")
        for j, col in enumerate(self.g):
            if col.dim != n:
                raise ValueError(f"g column {j} has {col.dim} components, expected {n}")

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def m(self) -> int:
        return len(self.g)

    @cached_property
    def open_loop(self) -> VectorField:
        return VectorField(self.f)


@dataclass(frozen=True)
class SwitchedController:
    """Feedback u = u_plus where H > 0, u = u_minus where H < 0."""

    u_plus: VectorExpr
    u_minus: VectorExpr
    surface: object  # ExprSurface or MaxSurface

    def __post_init__(self):
        if self.u_plus.dim != self.u_minus.dim:
            raise ValueError("u_plus and u_minus must have the same dimension")

    @property
    def m(self) -> int:
        return self.u_plus.dim


@dataclass(frozen=True)
class ClosedLoopField:
    """The two smooth closed-loop fields of a switched feedback loop."""

    plus: VectorField
    minus: VectorField
    surface: object


def _compose_closed_loop(sys: ControlledSystem, u: VectorExpr) -> VectorExpr:
    comps = []
    for i in range(sys.n):
        acc = sys.f.components[i]
        for j in range(sys.m):
            acc = ex.fold_add(acc, ex.fold_mul(sys.g[j].components[i],
                                               u.components[j]))
        comps.append(acc)
    return VectorExpr(sys.variables, tuple(comps))


def assemble_closed_loop(sys: ControlledSystem,
                         ctl: SwitchedController) -> ClosedLoopField:
    """Build F+/- = f + g u+/- with exact Jacobians."""
    if ctl.m != sys.m:
        raise ValueError(f"controller has {ctl.m} channels, system expects {sys.m}")
    return ClosedLoopField(
        plus=VectorField(_compose_closed_loop(sys, ctl.u_plus)),
        minus=VectorField(_compose_closed_loop(sys, ctl.u_minus)),
        surface=ctl.surface,
    )


def jump_matrix(sys: ControlledSystem, ctl: SwitchedController, x,
                surface_tol: float = 1e-6) -> np.ndarray:
    """Rank-one matrix (g(x) [u+(x) - u-(x)]) grad H(x)^T at a point of Sigma."""
    x = np.asarray(x, dtype=float)
    h = ctl.surface.value(x)
    if abs(h) > surface_tol:
        raise ValueError(f"point is not on Sigma: |H(x)| = {abs(h):.3e}")
    grad = ctl.surface.gradient(x)
    if float(np.linalg.norm(grad)) <= GRADIENT_FLOOR:
        raise ZeroGradientError(f"grad H vanishes at {x.tolist()}")
    du = (np.array(ctl.u_plus.compiled(*x), dtype=float)
          - np.array(ctl.u_minus.compiled(*x), dtype=float))
    gmat = np.stack([np.array(col.compiled(*x), dtype=float)
                     for col in sys.g], axis=1)  # (n, m)
    return np.outer(gmat @ du, grad)
