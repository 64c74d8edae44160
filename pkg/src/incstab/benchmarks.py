"""Built-in demonstration systems for the `reproduce` workflow.

Both designs act on the planar system

    dx1/dt = -4 x1
    dx2/dt = x2^2 - 6 x2     with input column g = [1, 2]^T,

target rate 2 under the 1-norm measure, and switch on x2 = 2. example1
stabilizes the bounded region x2 < 7 with the linear switched input
u+ = -10 x2; example2 stabilizes globally (truncated box) with the
quadratic input u+ = -x2^2. The open loop blows up in finite time from
x2 > 6, which the divergence guard turns into a clean report.
"""

import copy

from . import config

__all__ = ["EXAMPLE_IDS", "example_dict", "example_config",
           "CONTINUOUS_REFERENCE_EX1"]

# continuous comparison feedback for example1's control-effort study:
# the switched u+ extended to the whole region
CONTINUOUS_REFERENCE_EX1 = "-10*x2"

_EXAMPLE1 = {
    "variables": ["x1", "x2"],
    "f": ["-4*x1", "x2^2 - 6*x2"],
    "g": [["1", "2"]],
    "u_plus": ["-10*x2"],
    "u_minus": ["0"],
    "H": "x2 - 2",
    "measure": "1",
    "c_bar": 2.0,
    "region": {"bounds": [[-10, 10], [-10, 7]], "resolution": [200, 200]},
    "simulation": {
        "step": 1e-3,
        "t_span": [0.0, 4.0],
        "pairs": [[[1.0, 4.0], [2.0, 5.0]]],
        "divergence_bound": 1e6,
    },
    "synthesis": {
        "template": [["x2"]],
        "gain_bounds": [-20.0, 0.0],
        "gain_step": 0.5,
    },
}

_EXAMPLE2 = {
    "variables": ["x1", "x2"],
    "f": ["-4*x1", "x2^2 - 6*x2"],
    "g": [["1", "2"]],
    "u_plus": ["-(x2^2)"],
    "u_minus": ["0"],
    "H": "x2 - 2",
    "measure": "1",
    "c_bar": 2.0,
    # unbounded design region: truncated at the --truncate bound (default 50)
    "region": {"bounds": [[None, None], [None, None]], "resolution": [200, 200]},
    "simulation": {
        "step": 1e-3,
        "t_span": [0.0, 4.0],
        "pairs": [[[1.0, 8.0], [1.0, 9.0]]],
        "divergence_bound": 1e6,
    },
    "synthesis": {
        "template": [["x2^2"]],
        "gain_bounds": [-5.0, 0.0],
        "gain_step": 0.5,
    },
}

_EXAMPLES = {"example1": _EXAMPLE1, "example2": _EXAMPLE2}
EXAMPLE_IDS = tuple(sorted(_EXAMPLES))


def example_dict(name: str) -> dict:
    if name not in _EXAMPLES:
        raise KeyError(f"unknown example {name!r}; choose from {EXAMPLE_IDS}")
    return copy.deepcopy(_EXAMPLES[name])


def example_config(name: str, truncate: float = config.DEFAULT_TRUNCATION,
                   **overrides) -> config.ProjectConfig:
    return config.from_dict(example_dict(name), truncate=truncate,
                            source=f"<builtin:{name}>", **overrides)
