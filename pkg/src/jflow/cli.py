"""Scenario-driven command line: parse config, run, emit artifacts.

Subcommands cover the library surface one module at a time (simulate,
functionals, check-cone, geodesic-probe) plus an all-in-one report.
Every run echoes its effective configuration into the output directory;
re-running from that echo reproduces the outputs byte for byte,
whatever --threads says.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import (ScenarioConfig, build_backend, build_problem,
                     build_reference, initial_potential, load_config,
                     reference_page)
from .cone import properness_hypotheses
from .fields import (ConfigError, GeometryError, NonConvergence, StepStalled,
                     UnsupportedBackend)
from .flow import run_flow
from .functionals import functional_report
from .geodesic import convexity_probe, geodesic_path
from .potentials import named_potential, random_kahler_potential
from . import reports

log = logging.getLogger("jflow")


def _configure_logging() -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(
        os.environ.get("JFLOW_LOG", "").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    values = dict(cfg.values)
    if args.out is not None:
        values["output.directory"] = args.out
    if args.seed is not None:
        values["seed"] = args.seed
    return ScenarioConfig(values=values, lines=cfg.lines)


def _outdir(cfg: ScenarioConfig) -> str:
    path = cfg.get("output.directory")
    os.makedirs(path, exist_ok=True)
    reports.write_text(os.path.join(path, "config.effective.cfg"),
                       cfg.render())
    return path


def _write(outdir: str, name: str, text: str) -> None:
    reports.write_text(os.path.join(outdir, name), text)
    log.info("wrote %s", os.path.join(outdir, name))


def _simulate(cfg: ScenarioConfig, args) -> int:
    backend = build_backend(cfg)
    omega = build_reference(cfg, backend)
    problem = build_problem(cfg, backend, omega)
    phi0 = initial_potential(cfg, backend)
    outdir = _outdir(cfg)
    result = run_flow(problem, phi0=phi0)
    log.info("flow: converged=%s reason=%s steps=%d residual=%.3e",
             result.converged, result.reason, result.state.step_count,
             result.residual)
    _write(outdir, "trajectory.csv", reports.trajectory_csv(result.records))
    _write(outdir, "final_state.json", reports.final_state_json(result))
    if cfg.get("functionals.enabled"):
        rep = functional_report(backend, result.state.phi, omega,
                                cfg.get("functionals.path_steps"),
                                c=problem.level)
        _write(outdir, "functional_report.json",
               reports.functional_report_json(rep))
    if args.plot == "svg":
        ts = [r.t for r in result.records]
        _write(outdir, "energy.svg", reports.svg_line_plot(
            [("E", ts, [r.E for r in result.records])], "energy vs t"))
        _write(outdir, "residual.svg", reports.svg_line_plot(
            [("residual", ts, [r.residual for r in result.records])],
            "residual vs t"))
    if not result.converged and cfg.get("flow.require_convergence"):
        raise NonConvergence(
            f"flow ended at residual {result.residual:.3e} above target "
            f"{problem.residual_target:.3e} (reason: {result.reason})")
    return 0


def _functionals(cfg: ScenarioConfig, args) -> int:
    backend = build_backend(cfg)
    omega = build_reference(cfg, backend)
    phi = named_potential(backend, cfg.get("functionals.family"),
                          cfg.get("functionals.amplitude"),
                          cfg.get("functionals.wavenumber"),
                          seed=cfg.get("seed"))
    rep = functional_report(backend, phi, omega,
                            cfg.get("functionals.path_steps"))
    outdir = _outdir(cfg)
    _write(outdir, "functional_report.json",
           reports.functional_report_json(rep))
    return 0


def _check_cone(cfg: ScenarioConfig, args) -> int:
    backend = build_backend(cfg)
    omega = build_reference(cfg, backend)
    rep = properness_hypotheses(backend, cfg.get("hypotheses.epsilon"),
                                cfg.get("hypotheses.alpha_lower_bound"),
                                omega=omega)
    outdir = _outdir(cfg)
    _write(outdir, "hypothesis_report.json",
           reports.hypothesis_report_json(rep))
    return 0


def _geodesic_probe(cfg: ScenarioConfig, args) -> int:
    backend = build_backend(cfg)
    try:
        return _run_probes(cfg, args, backend)
    except UnsupportedBackend as exc:
        raise ConfigError(str(exc), line=cfg.line("geometry.kind")) from exc


def _run_probes(cfg: ScenarioConfig, args, backend) -> int:
    omega = build_reference(cfg, backend)
    pairs = cfg.get("geodesic.pairs")
    nodes = cfg.get("geodesic.nodes")
    amplitude = cfg.get("geodesic.amplitude")
    functional_id = cfg.get("geodesic.functional")
    # All randomness is drawn serially up front; the pool only computes,
    # so the artifacts cannot depend on the worker count.
    rng = np.random.default_rng(cfg.get("seed"))
    endpoints = [(random_kahler_potential(backend, rng, amplitude),
                  random_kahler_potential(backend, rng, amplitude))
                 for _ in range(pairs)]

    def probe(pair):
        path = geodesic_path(backend, pair[0], pair[1], nodes)
        return convexity_probe(backend, functional_id, path, omega=omega,
                               path_steps=cfg.get("functionals.path_steps"))

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(probe, endpoints))

    outdir = _outdir(cfg)
    summary = []
    for k, rep in enumerate(results):
        _write(outdir, f"probe_{k}.csv", reports.probe_csv(rep))
        summary.append(rep)
        log.info("pair %d: min second difference %.3e at t=%.3f",
                 k, rep.min_second_difference, rep.t_at_min)
    lines = [reports.probe_report_json(rep).rstrip() for rep in summary]
    _write(outdir, "probe_summary.json", "[\n" + ",\n".join(lines) + "\n]\n")
    if args.plot == "svg":
        series = [(f"pair {k}", rep.ts, rep.values)
                  for k, rep in enumerate(results)]
        _write(outdir, "probe.svg", reports.svg_line_plot(
            series, f"{functional_id} along geodesics"))
    return 0


def _report(cfg: ScenarioConfig, args) -> int:
    code = _simulate(cfg, args)
    if cfg.get("hypotheses.enabled"):
        _check_cone(cfg, args)
    if cfg.get("geodesic.enabled"):
        _geodesic_probe(cfg, args)
    return code


_COMMANDS = {
    "simulate": _simulate,
    "functionals": _functionals,
    "check-cone": _check_cone,
    "geodesic-probe": _geodesic_probe,
    "report": _report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jflow",
        description="Reduced-geometry flows, energy functionals, cone checks "
                    "and geodesic probes, driven by scenario configs.",
        epilog=reference_page(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("simulate", "time-integrate the flow and write its trajectory"),
            ("functionals", "evaluate the energy functionals of a potential"),
            ("check-cone", "margins for the properness hypotheses"),
            ("geodesic-probe", "convexity of a functional along geodesics"),
            ("report", "simulate plus every enabled check in one run")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="scenario file")
        cmd.add_argument("--out", default=None,
                         help="override output.directory")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the scenario seed")
        cmd.add_argument("--threads", type=int, default=1,
                         help="worker pool size for independent runs")
        cmd.add_argument("--plot", choices=("none", "svg"), default="none",
                         help="emit SVG line plots")
    return parser


def main(argv=None) -> int:
    _configure_logging()
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        if exc.line is not None:
            print(f"  offending line: {exc.line}", file=sys.stderr)
        return 2
    except StepStalled as exc:
        print(f"step stalled: {exc}", file=sys.stderr)
        return 3
    except NonConvergence as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return 4
    except GeometryError as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"cannot write outputs: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
