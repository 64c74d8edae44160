"""Incremental-stability toolkit for bimodal piecewise-smooth systems.

Certifies incremental exponential stability via matrix measures of the
one-sided Jacobians, simulates Filippov closed loops (crossing and sliding),
and synthesizes switching feedback that is active only where the open loop
is not sufficiently contracting.
"""

from .certify import (Certificate, DecayReport, RegionPartition, RegionSpec,
                      check_contraction, check_decay, check_theorem2,
                      check_theorem3, control_effort, sample_sigma)
from .dynamics import (ClosedLoopField, ControlledSystem, ExprSurface,
                       MaxSurface, SwitchedController, VectorField,
                       assemble_closed_loop, jacobian, jump_matrix)
from .expr import VectorExpr, differentiate, evaluate, parse, to_infix
from .filippov import (Mode, RegularizationConfig, Trajectory, classify,
                       regularize, regularized_field, simulate,
                       simulate_smooth, sliding_field)
from .measures import (MeasureKind, induced_norm, matrix_measure,
                       measure_limit_oracle, vector_norm)
from .synth import (DesignResult, DesignSpec, build_H, gain_search,
                    partition_regions)

__version__ = "0.1.0"

__all__ = [
    "Certificate", "DecayReport", "RegionPartition", "RegionSpec",
    "check_contraction", "check_decay", "check_theorem2", "check_theorem3",
    "control_effort", "sample_sigma",
    "ClosedLoopField", "ControlledSystem", "ExprSurface", "MaxSurface",
    "SwitchedController", "VectorField", "assemble_closed_loop", "jacobian",
    "jump_matrix",
    "VectorExpr", "differentiate", "evaluate", "parse", "to_infix",
    "Mode", "RegularizationConfig", "Trajectory", "classify", "regularize",
    "regularized_field", "simulate", "simulate_smooth", "sliding_field",
    "MeasureKind", "induced_norm", "matrix_measure", "measure_limit_oracle",
    "vector_norm",
    "DesignResult", "DesignSpec", "build_H", "gain_search",
    "partition_regions",
]
