"""Project configuration: JSON documents with expression strings.

One file fully specifies a system, an optional switched controller, the
certification region, and simulation/synthesis blocks. Half-infinite region
bounds (null, "inf", "-inf") are truncated at a caller-supplied bound; the
applied truncations are recorded so the CLI can print them prominently.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .certify import RegionSpec
from .dynamics import ControlledSystem, ExprSurface, SwitchedController
from .expr import ExprError, VectorExpr
from .measures import MeasureKind

__all__ = [
    "ConfigError",
    "SimulationConfig",
    "SynthesisConfig",
    "ProjectConfig",
    "from_dict",
    "load",
]

DEFAULT_TRUNCATION = 50.0


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "", field: str = ""):
        where = f"{source}: " if source else ""
        at = f" (field '{field}')" if field else ""
        super().__init__(f"{where}{message}{at}")
        self.source = source
        self.field = field


@dataclass(frozen=True)
class SimulationConfig:
    step: float
    t_span: tuple
    pairs: tuple  # ((x0, y0), ...) as float tuples
    divergence_bound: float = 1e6


@dataclass(frozen=True)
class SynthesisConfig:
    template: tuple  # per channel: tuple of basis expression strings
    gain_bounds: tuple
    gain_step: float


@dataclass(frozen=True)
class ProjectConfig:
    variables: tuple
    system: ControlledSystem
    u_plus: VectorExpr | None
    u_minus: VectorExpr | None
    surface: ExprSurface | None  # None means: synthesize H from the measure
    measure: MeasureKind
    c_bar: float
    c1: float
    c2: float
    region: RegionSpec | None
    simulation: SimulationConfig | None
    synthesis: SynthesisConfig | None
    truncation_notes: tuple

    def controller(self) -> SwitchedController:
        if self.surface is None:
            raise ConfigError("explicit controller requested but no H given")
        m = self.system.m
        up = self.u_plus or VectorExpr.zeros(m, self.variables)
        um = self.u_minus or VectorExpr.zeros(m, self.variables)
        return SwitchedController(u_plus=up, u_minus=um, surface=self.surface)


def _parse_vector(texts, variables, source, field):
    try:
        return VectorExpr.parse_components([str(t) for t in texts], variables)
    except ExprError as err:
        raise ConfigError(str(err), source, field) from err


def _resolve_bound(raw, side: str, axis: str, truncate: float, notes: list):
    if raw is None or (isinstance(raw, str)
                       and raw.strip().lstrip("+-").lower() in ("inf", "infinity")):
        val = -truncate if side == "lower" else truncate
        notes.append(f"{axis} {side} bound truncated to {val:g}")
        return val
    try:
        val = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad {side} bound {raw!r} for {axis}",
                          field="region.bounds") from None
    if not np.isfinite(val):
        val = -truncate if val < 0 else truncate
        notes.append(f"{axis} {side} bound truncated to {val:g}")
    return val


def _parse_region(raw, variables, truncate, source, grid_override=None):
    notes: list = []
    if "bounds" not in raw:
        raise ConfigError("region requires 'bounds'", source, "region")
    bounds = []
    for i, pair in enumerate(raw["bounds"]):
        axis = variables[i] if i < len(variables) else f"axis {i}"
        lo = _resolve_bound(pair[0], "lower", axis, truncate, notes)
        hi = _resolve_bound(pair[1], "upper", axis, truncate, notes)
        bounds.append((lo, hi))
    if len(bounds) != len(variables):
        raise ConfigError(f"region has {len(bounds)} axes for "
                          f"{len(variables)} state variables", source, "region")
    res_raw = grid_override if grid_override is not None \
        else raw.get("resolution", 100)
    if isinstance(res_raw, int):
        resolution = tuple(res_raw for _ in bounds)
    else:
        resolution = tuple(int(r) for r in res_raw)
    predicate = None
    desc = ""
    if raw.get("predicate"):
        desc = str(raw["predicate"])
        try:
            pred_expr = ex.parse(desc, variables)
        except ExprError as err:
            raise ConfigError(str(err), source, "region.predicate") from err
        fn = ex.compile_components([pred_expr], variables)

        def predicate(pts, _fn=fn):
            out = _fn(*np.asarray(pts, dtype=float).T)[0]
            return np.broadcast_to(np.asarray(out) > 0, len(pts))

        desc = f"{desc} > 0"
    try:
        spec = RegionSpec(bounds=tuple(bounds), resolution=resolution,
                          predicate=predicate, predicate_desc=desc)
    except ValueError as err:
        raise ConfigError(str(err), source, "region") from err
    return spec, notes


def from_dict(raw: dict, truncate: float = DEFAULT_TRUNCATION,
              source: str = "<config>", measure=None, c_bar=None,
              grid=None, step=None) -> ProjectConfig:
    """Build a ProjectConfig from a parsed JSON document.

    measure / c_bar / grid / step override the corresponding file values
    (they back the CLI flags).
    """
    if "variables" not in raw or not raw["variables"]:
        raise ConfigError("missing 'variables'", source, "variables")
    variables = tuple(str(v) for v in raw["variables"])
    if len(set(variables)) != len(variables):
        raise ConfigError("state variable names must be distinct", source,
                          "variables")
    if "f" not in raw:
        raise ConfigError("missing drift field 'f'", source, "f")
    f = _parse_vector(raw["f"], variables, source, "f")
    if f.dim != len(variables):
        raise ConfigError(f"f has {f.dim} components for {len(variables)} "
                          "state variables", source, "f")
    g_cols = tuple(_parse_vector(col, variables, source, f"g[{j}]")
                   for j, col in enumerate(raw.get("g", [])))
    try:
        system = ControlledSystem(variables=variables, f=f, g=g_cols)
    except ValueError as err:
        raise ConfigError(str(err), source, "g") from err

    u_plus = (_parse_vector(raw["u_plus"], variables, source, "u_plus")
              if "u_plus" in raw else None)
    u_minus = (_parse_vector(raw["u_minus"], variables, source, "u_minus")
               if "u_minus" in raw else None)
    for name, u in (("u_plus", u_plus), ("u_minus", u_minus)):
        if u is not None and u.dim != system.m:
            raise ConfigError(f"{name} has {u.dim} components for "
                              f"{system.m} input channels", source, name)

    surface = None
    if "H" in raw and raw["H"] is not None:
        try:
            surface = ExprSurface.parse(str(raw["H"]), variables)
        except ExprError as err:
            raise ConfigError(str(err), source, "H") from err

    kind = MeasureKind.parse(measure if measure is not None
                             else raw.get("measure", "1"))
    cbar_val = float(c_bar if c_bar is not None else raw.get("c_bar", 1.0))
    if cbar_val <= 0:
        raise ConfigError(f"c_bar must be positive, got {cbar_val}", source,
                          "c_bar")
    c1 = float(raw.get("c1", cbar_val))
    c2 = float(raw.get("c2", cbar_val))

    region = None
    notes: list = []
    if "region" in raw and raw["region"] is not None:
        region, notes = _parse_region(raw["region"], variables, truncate,
                                      source, grid_override=grid)

    simulation = None
    if "simulation" in raw and raw["simulation"] is not None:
        sim = raw["simulation"]
        try:
            t_span = (float(sim["t_span"][0]), float(sim["t_span"][1]))
            step_val = float(step if step is not None else sim.get("step", 1e-3))
            pairs = tuple(
                (tuple(float(v) for v in a), tuple(float(v) for v in b))
                for a, b in sim.get("pairs", []))
        except (KeyError, TypeError, ValueError, IndexError) as err:
            raise ConfigError(f"bad simulation block: {err}", source,
                              "simulation") from err
        if t_span[1] <= t_span[0]:
            raise ConfigError("zero-length t_span: simulation would produce "
                              "an empty trajectory", source,
                              "simulation.t_span")
        if step_val <= 0:
            raise ConfigError(f"step must be positive, got {step_val}",
                              source, "simulation.step")
        for a, b in pairs:
            if len(a) != len(variables) or len(b) != len(variables):
                raise ConfigError("initial conditions must match the state "
                                  "dimension", source, "simulation.pairs")
        simulation = SimulationConfig(
            step=step_val, t_span=t_span, pairs=pairs,
            divergence_bound=float(sim.get("divergence_bound", 1e6)))

    synthesis = None
    if "synthesis" in raw and raw["synthesis"] is not None:
        syn = raw["synthesis"]
        try:
            template = tuple(tuple(str(b) for b in channel)
                             for channel in syn["template"])
            gain_bounds = (float(syn["gain_bounds"][0]),
                           float(syn["gain_bounds"][1]))
            gain_step = float(syn.get("gain_step", 0.5))
        except (KeyError, TypeError, ValueError, IndexError) as err:
            raise ConfigError(f"bad synthesis block: {err}", source,
                              "synthesis") from err
        if len(template) != system.m:
            raise ConfigError(f"template declares {len(template)} channels "
                              f"for {system.m} inputs", source,
                              "synthesis.template")
        for channel in template:
            for b in channel:
                try:
                    ex.parse(b, variables)
                except ExprError as err:
                    raise ConfigError(str(err), source,
                                      "synthesis.template") from err
        synthesis = SynthesisConfig(template=template,
                                    gain_bounds=gain_bounds,
                                    gain_step=gain_step)

    return ProjectConfig(
        variables=variables, system=system, u_plus=u_plus, u_minus=u_minus,
        surface=surface, measure=kind, c_bar=cbar_val, c1=c1, c2=c2,
        region=region, simulation=simulation, synthesis=synthesis,
        truncation_notes=tuple(notes))


def load(path, truncate: float = DEFAULT_TRUNCATION, **overrides) -> ProjectConfig:
    """Load a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}", str(path)) from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON: {err}", str(path)) from err
    return from_dict(raw, truncate=truncate, source=str(path), **overrides)
