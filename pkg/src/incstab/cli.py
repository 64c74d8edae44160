"""Command-line entry point.

Subcommands: measure, certify, simulate, synthesize, reproduce. Exit codes
are a stable contract: 0 pass, 1 certificate fail, 2 simulation error,
3 synthesis failure, 64 config error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import benchmarks, certify, config, filippov, synth
from .config import ConfigError
from .dynamics import SwitchedController, assemble_closed_loop
from .expr import VectorExpr
from .filippov import SimulationError
from .measures import MeasureKind, matrix_measure
from .synth import GainSearchError

EXIT_OK = 0
EXIT_CERT_FAIL = 1
EXIT_SIMULATION = 2
EXIT_SYNTH_FAIL = 3
EXIT_CONFIG = 64


def _common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON project configuration")
    p.add_argument("--out", type=Path, default=Path("."),
                   help="output directory (default: current directory)")
    p.add_argument("--measure", choices=["1", "2", "inf"],
                   help="override the measure/norm pair")
    p.add_argument("--cbar", type=float, help="override the target rate")
    p.add_argument("--grid", type=int,
                   help="override grid resolution on every axis")
    p.add_argument("--step", type=float, help="override the integration step")
    p.add_argument("--truncate", type=float, default=config.DEFAULT_TRUNCATION,
                   help="truncation bound for unbounded region axes "
                        "(default 50)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="incstab",
        description="Certify incremental exponential stability of switched "
                    "systems via matrix measures, synthesize switching "
                    "feedback, and validate designs by Filippov simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    mp = sub.add_parser("measure", help="print matrix measures of the "
                                        "open-loop Jacobian at a point")
    mp.add_argument("point", help="comma-separated state values, e.g. '0,4'")
    _common_flags(mp)

    cp = sub.add_parser("certify", help="run the switched-system certificate")
    _common_flags(cp)

    sp = sub.add_parser("simulate", help="simulate configured trajectory pairs")
    _common_flags(sp)

    yp = sub.add_parser("synthesize", help="search switching gains for the "
                                           "configured template")
    _common_flags(yp)

    rp = sub.add_parser("reproduce", help="run a built-in example end to end")
    rp.add_argument("example", choices=list(benchmarks.EXAMPLE_IDS))
    _common_flags(rp)
    return p


def _load_config(args) -> config.ProjectConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    return config.load(args.config, truncate=args.truncate,
                       measure=args.measure, c_bar=args.cbar,
                       grid=args.grid, step=args.step)


def _print_notes(cfg: config.ProjectConfig):
    for note in cfg.truncation_notes:
        print(f"NOTE: {note}")


def _surface_for(cfg: config.ProjectConfig):
    if cfg.surface is not None:
        return cfg.surface
    return synth.build_H(cfg.system, cfg.measure, cfg.c_bar)


def _controller_for(cfg: config.ProjectConfig, surface) -> SwitchedController:
    m = cfg.system.m
    up = cfg.u_plus or VectorExpr.zeros(m, cfg.variables)
    um = cfg.u_minus or VectorExpr.zeros(m, cfg.variables)
    return SwitchedController(u_plus=up, u_minus=um, surface=surface)


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _decay_csv(traj_a, traj_b, K, lam, kind) -> str:
    gaps = certify._norms_many(MeasureKind.parse(kind),
                               traj_a.states - traj_b.states)
    t = traj_a.times
    bound = K * np.exp(-lam * (t - t[0])) * gaps[0]
    lines = ["t,gap,bound,ratio"]
    for i in range(len(t)):
        ratio = 0.0 if gaps[i] == 0.0 else gaps[i] / bound[i]
        lines.append(f"{t[i]!r},{gaps[i]!r},{bound[i]!r},{ratio!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands

def cmd_measure(args) -> int:
    cfg = _load_config(args)
    _print_notes(cfg)
    try:
        x = np.array([float(v) for v in args.point.split(",")], dtype=float)
    except ValueError:
        raise ConfigError(f"bad point {args.point!r}; expected "
                          "comma-separated numbers") from None
    if len(x) != len(cfg.variables):
        raise ConfigError(f"point has {len(x)} coordinates for "
                          f"{len(cfg.variables)} state variables")
    jac = cfg.system.open_loop.jacobian(x)
    for kind in MeasureKind:
        print(f"mu_{kind.value}(Df(x)) = {matrix_measure(kind, jac):.12g}")
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = _load_config(args)
    _print_notes(cfg)
    if cfg.region is None:
        raise ConfigError("certify requires a region block")
    surface = _surface_for(cfg)
    ctl = _controller_for(cfg, surface)
    partition = synth.partition_regions(surface, cfg.region)
    cert = certify.check_theorem3(cfg.system, ctl, partition, cfg.measure,
                                  cfg.c1, cfg.c2, c_bar=cfg.c_bar)
    payload = certify.certificate_to_dict(cert)
    out = args.out / "certificate.json"
    _write_json(out, payload)
    print(f"certificate written to {out}")
    print(f"verdict: {payload['verdict']}"
          f" (S+ worst {payload['worst_margin_splus']},"
          f" S- worst {payload['worst_margin_sminus']},"
          f" Sigma worst |mu| {payload['worst_sigma_mu']:.3e})")
    return EXIT_OK if cert.verdict else EXIT_CERT_FAIL


def _simulate_pairs(cfg, loop, out_dir: Path, tag: str = "") -> tuple:
    """Simulate configured pairs; returns (reports, exit_code)."""
    sim = cfg.simulation
    reports = []
    for i, (a, b) in enumerate(sim.pairs, start=1):
        name = f"{tag}pair{i}"
        for label, x0 in (("a", a), ("b", b)):
            try:
                traj = filippov.simulate(loop, x0, sim.t_span, sim.step,
                                         divergence_bound=sim.divergence_bound)
            except SimulationError as err:
                partial = err.trajectory
                if partial is not None:
                    _write_text(out_dir / f"traj_{name}_{label}.csv",
                                filippov.trajectory_csv(partial, loop.surface,
                                                        cfg.variables))
                _write_json(out_dir / f"escape_{name}_{label}.json", {
                    "error": str(err),
                    "time": err.time,
                    "kind": type(err).__name__,
                })
                print(f"simulation error for {name}/{label}: {err}",
                      file=sys.stderr)
                return reports, EXIT_SIMULATION
            _write_text(out_dir / f"traj_{name}_{label}.csv",
                        filippov.trajectory_csv(traj, loop.surface,
                                                cfg.variables))
            _write_text(out_dir / f"events_{name}_{label}.csv",
                        filippov.events_csv(traj, cfg.variables))
            reports.append((name, label, traj))
    return reports, EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    _print_notes(cfg)
    if cfg.simulation is None:
        raise ConfigError("simulate requires a simulation block")
    surface = _surface_for(cfg)
    ctl = _controller_for(cfg, surface)
    loop = assemble_closed_loop(cfg.system, ctl)
    out_dir = args.out
    reports, code = _simulate_pairs(cfg, loop, out_dir)
    if code != EXIT_OK:
        return code
    trajs = {(name, label): traj for name, label, traj in reports}
    for i in range(1, len(cfg.simulation.pairs) + 1):
        ta, tb = trajs[(f"pair{i}", "a")], trajs[(f"pair{i}", "b")]
        _write_text(out_dir / f"decay_pair{i}.csv",
                    _decay_csv(ta, tb, 1.0, cfg.c_bar, cfg.measure))
    print(f"wrote {len(reports)} trajectory CSVs to {out_dir}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    cfg = _load_config(args)
    _print_notes(cfg)
    if cfg.synthesis is None:
        raise ConfigError("synthesize requires a synthesis block")
    if cfg.region is None:
        raise ConfigError("synthesize requires a region block")
    spec = synth.DesignSpec(system=cfg.system, c_bar=cfg.c_bar,
                            kind=cfg.measure, region=cfg.region,
                            template=cfg.synthesis.template,
                            gain_bounds=cfg.synthesis.gain_bounds,
                            gain_step=cfg.synthesis.gain_step)
    try:
        result = synth.gain_search(spec)
    except GainSearchError as err:
        _write_json(args.out / "synthesis_failure.json", {
            "error": str(err),
            "best_gains": list(err.best_gains) if err.best_gains else None,
            "best_margin": err.best_margin,
        })
        print(f"synthesis failed: {err}", file=sys.stderr)
        return EXIT_SYNTH_FAIL
    out = args.out / "design_result.json"
    _write_json(out, synth.design_result_to_dict(result))
    if result.already_contracting:
        print(result.message)
    else:
        print(f"gains: {list(result.gains)}  u+ = {result.u_plus}")
    print(f"design result written to {out}")
    return EXIT_OK if result.certificate.verdict else EXIT_CERT_FAIL


def cmd_reproduce(args) -> int:
    cfg = benchmarks.example_config(args.example, truncate=args.truncate,
                                    measure=args.measure, c_bar=args.cbar,
                                    grid=args.grid, step=args.step)
    _print_notes(cfg)
    out_dir = args.out / args.example
    surface = _surface_for(cfg)
    ctl = _controller_for(cfg, surface)
    loop = assemble_closed_loop(cfg.system, ctl)

    partition = synth.partition_regions(surface, cfg.region)
    cert = certify.check_theorem3(cfg.system, ctl, partition, cfg.measure,
                                  cfg.c1, cfg.c2, c_bar=cfg.c_bar)
    _write_json(out_dir / "certificate.json", certify.certificate_to_dict(cert))
    print(f"certificate: {'pass' if cert.verdict else 'fail'}")

    reports, code = _simulate_pairs(cfg, loop, out_dir)
    if code != EXIT_OK:
        return code
    trajs = {(name, label): traj for name, label, traj in reports}
    decay_payload = []
    all_decays_pass = True
    for i in range(1, len(cfg.simulation.pairs) + 1):
        ta, tb = trajs[(f"pair{i}", "a")], trajs[(f"pair{i}", "b")]
        rep = certify.check_decay(ta, tb, K=1.0, lam=cfg.c_bar,
                                  kind=cfg.measure, tolerance=1e-3,
                                  pair_id=f"pair{i}")
        decay_payload.append(certify.decay_report_to_dict(rep))
        all_decays_pass &= rep.verdict
        _write_text(out_dir / f"decay_pair{i}.csv",
                    _decay_csv(ta, tb, 1.0, cfg.c_bar, cfg.measure))
        print(f"decay pair{i}: {'pass' if rep.verdict else 'fail'} "
              f"(max ratio {rep.max_ratio:.6f})")
    _write_json(out_dir / "decay_reports.json", {"reports": decay_payload})

    if args.example == "example1":
        # switched vs. continuous control energy on the first pair's x0
        x0 = cfg.simulation.pairs[0][0]
        switched = certify.control_effort(trajs[("pair1", "a")], ctl)
        uhat = VectorExpr.parse_components([benchmarks.CONTINUOUS_REFERENCE_EX1],
                                           cfg.variables)
        cont_ctl = SwitchedController(u_plus=uhat, u_minus=uhat,
                                      surface=surface)
        cont_loop = assemble_closed_loop(cfg.system, cont_ctl)
        cont_traj = filippov.simulate(cont_loop, x0, cfg.simulation.t_span,
                                      cfg.simulation.step)
        continuous = certify.control_effort(cont_traj, cont_ctl)
        _write_json(out_dir / "effort.json", {
            "switched": switched,
            "continuous": continuous,
            "continuous_controller": benchmarks.CONTINUOUS_REFERENCE_EX1,
            "switched_is_cheaper": switched < continuous,
        })
        print(f"control effort: switched {switched:.6g} vs "
              f"continuous {continuous:.6g}")

    if args.example == "example2":
        # the open loop escapes in finite time from these initial conditions
        zero = VectorExpr.zeros(cfg.system.m, cfg.variables)
        open_ctl = SwitchedController(u_plus=zero, u_minus=zero,
                                      surface=surface)
        open_loop = assemble_closed_loop(cfg.system, open_ctl)
        escapes = []
        for label, x0 in zip(("a", "b"), cfg.simulation.pairs[0]):
            try:
                filippov.simulate(open_loop, x0, cfg.simulation.t_span,
                                  cfg.simulation.step,
                                  divergence_bound=cfg.simulation.divergence_bound)
                escapes.append({"ic": list(x0), "finite_escape": False})
            except filippov.FiniteEscapeError as err:
                if err.trajectory is not None:
                    _write_text(out_dir / f"openloop_{label}.csv",
                                filippov.trajectory_csv(err.trajectory,
                                                        surface,
                                                        cfg.variables))
                escapes.append({"ic": list(x0), "finite_escape": True,
                                "time": err.time,
                                "divergence_bound":
                                    cfg.simulation.divergence_bound})
        _write_json(out_dir / "openloop.json", {"runs": escapes})
        print("open-loop finite-escape report written")

    ok = cert.verdict and all_decays_pass
    print(f"reproduce {args.example}: {'pass' if ok else 'fail'} "
          f"(bundle in {out_dir})")
    return EXIT_OK if ok else EXIT_CERT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "measure": cmd_measure,
        "certify": cmd_certify,
        "simulate": cmd_simulate,
        "synthesize": cmd_synthesize,
        "reproduce": cmd_reproduce,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (certify.EmptyRegionError, certify.EmptySigmaError) as err:
        print(f"certification error: {err}", file=sys.stderr)
        return EXIT_CERT_FAIL
    except SimulationError as err:
        print(f"simulation error: {err}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
