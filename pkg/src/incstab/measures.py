"""Matrix measures (logarithmic norms) and the matching vector norms.

Implemented measures, each tied to the inducing matrix norm and vector norm:

    mu_1(A)   = max_j [ a_jj + sum_{i != j} |a_ij| ]     (1-norm)
    mu_2(A)   = lambda_max((A + A^T) / 2)                (Euclidean norm)
    mu_inf(A) = max_i [ a_ii + sum_{j != i} |a_ij| ]     (max norm)

measure_limit_oracle evaluates the defining one-sided limit
(||I + h A|| - 1) / h directly and serves as an independent cross-check.
"""

from enum import Enum

import numpy as np

__all__ = [
    "MeasureKind",
    "matrix_measure",
    "matrix_measure_many",
    "vector_norm",
    "induced_norm",
    "measure_limit_oracle",
]


class MeasureKind(Enum):
    ONE = "1"
    TWO = "2"
    INF = "inf"

    @classmethod
    def parse(cls, label) -> "MeasureKind":
        if isinstance(label, cls):
            return label
        key = str(label).strip().lower()
        for kind in cls:
            if key == kind.value:
                return kind
        raise ValueError(f"unknown measure kind {label!r}; expected 1, 2 or inf")


def _check_square(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    return a


def matrix_measure(kind: MeasureKind, a) -> float:
    """Matrix measure of a single square matrix."""
    a = _check_square(a)
    if a.ndim != 2:
        raise ValueError("matrix_measure expects a single matrix; "
                         "use matrix_measure_many for batches")
    return float(matrix_measure_many(kind, a[None])[0])


def matrix_measure_many(kind: MeasureKind, a) -> np.ndarray:
    """Vectorized matrix measure over a (..., n, n) stack."""
    a = _check_square(a)
    kind = MeasureKind.parse(kind)
    diag = np.diagonal(a, axis1=-2, axis2=-1)
    if kind is MeasureKind.ONE:
        cols = np.sum(np.abs(a), axis=-2) - np.abs(diag) + diag
        return np.max(cols, axis=-1)
    if kind is MeasureKind.INF:
        rows = np.sum(np.abs(a), axis=-1) - np.abs(diag) + diag
        return np.max(rows, axis=-1)
    sym = 0.5 * (a + np.swapaxes(a, -1, -2))
    return np.linalg.eigvalsh(sym)[..., -1]


def vector_norm(kind: MeasureKind, v) -> float:
    """Vector norm matching the measure kind (1, Euclidean, or max)."""
    kind = MeasureKind.parse(kind)
    v = np.asarray(v, dtype=float)
    if kind is MeasureKind.ONE:
        return float(np.sum(np.abs(v)))
    if kind is MeasureKind.TWO:
        return float(np.sqrt(np.dot(v, v)))
    return float(np.max(np.abs(v))) if v.size else 0.0


def induced_norm(kind: MeasureKind, a) -> float:
    """Induced matrix norm: max column sum, spectral norm, or max row sum."""
    kind = MeasureKind.parse(kind)
    a = _check_square(a)
    if kind is MeasureKind.ONE:
        return float(np.max(np.sum(np.abs(a), axis=0)))
    if kind is MeasureKind.INF:
        return float(np.max(np.sum(np.abs(a), axis=1)))
    return float(np.linalg.norm(a, 2))


def measure_limit_oracle(kind: MeasureKind, a, h: float) -> float:
    """One-sided difference quotient (||I + h A|| - 1) / h.

    This is the measure's definition evaluated at a small h > 0, independent
    of the closed-form expressions in matrix_measure.
    """
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    a = _check_square(a)
    m = np.eye(a.shape[0]) + h * a
    return (induced_norm(kind, m) - 1.0) / h
