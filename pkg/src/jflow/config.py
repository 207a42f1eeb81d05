"""Scenario configuration: parse, validate, echo.

The format is one ``key = value`` per line with ``#`` comments.  Every
key lives in the table below, which is the single source of truth for
names, types, defaults and help text; the CLI help and the effective
config echoed next to run outputs are both generated from it.  The echo
re-parses to the same configuration, which is what makes runs
reproducible from their own output directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import ConfigError, GeometryError
from .flow import FlowProblem
from .geometry import (GeometryBackend, SphereBackend, TorusBackend,
                       complex_hessian)
from .potentials import (FAMILY_NAMES, hessian_offset_potential,
                         named_potential)


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _parse_optional_float(text: str):
    if text == "auto":
        return None
    return float(text)


def _render(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_OFFSET_FAMILIES = ("zero", "sine", "cosine", "bump")
_PROBE_IDS = ("i", "j", "j_hat", "j_tilde", "j_flow", "entropy",
              "k_energy", "k_energy_modified", "mean")


@dataclass(frozen=True)
class ConfigKey:
    parse: Callable[[str], object]
    default: object
    help: str
    choices: tuple = ()


CONFIG_KEYS: dict[str, ConfigKey] = {
    "geometry.kind": ConfigKey(str, "torus", "backend geometry",
                               choices=("torus", "sphere")),
    "geometry.dim": ConfigKey(int, 1, "torus complex dimension"),
    "geometry.size": ConfigKey(int, 128, "grid points per axis"),
    "geometry.s_max": ConfigKey(float, 12.0,
                                "sphere chart truncation in the s variable"),
    "reference.scale": ConfigKey(float, 2.0,
                                 "reference form = scale * chi0 (+ offset)"),
    "reference.offset_family": ConfigKey(
        str, "zero", "density offset added to the reference form, realized "
        "exactly as a Hessian (torus n=1 only)", choices=_OFFSET_FAMILIES),
    "reference.offset_amplitude": ConfigKey(float, 0.0,
                                            "amplitude of the density offset"),
    "reference.offset_wavenumber": ConfigKey(int, 1,
                                             "wavenumber of the density offset"),
    "flow.c": ConfigKey(_parse_optional_float, None,
                        "level constant; auto = cohomological value"),
    "flow.t_max": ConfigKey(float, 10.0, "flow time horizon"),
    "flow.residual_target": ConfigKey(float, 1e-6,
                                      "sup-norm critical-equation residual "
                                      "declaring convergence"),
    "flow.cfl_safety": ConfigKey(float, 0.2,
                                 "fraction of the diffusion step bound"),
    "flow.dt_min": ConfigKey(float, 1e-12,
                             "step underflow threshold (StepStalled)"),
    "flow.method": ConfigKey(str, "rk4", "time integrator",
                             choices=("rk4", "euler", "semi_implicit")),
    "flow.log_every": ConfigKey(int, 10,
                                "record every k-th accepted step"),
    "flow.require_convergence": ConfigKey(
        _parse_bool, False, "exit 4 when the flow ends above its residual "
        "target instead of reporting the partial run"),
    "flow.initial_family": ConfigKey(str, "zero", "initial potential family",
                                     choices=FAMILY_NAMES),
    "flow.initial_amplitude": ConfigKey(float, 0.1,
                                        "initial potential amplitude"),
    "flow.initial_wavenumber": ConfigKey(int, 1,
                                         "initial potential wavenumber"),
    "functionals.enabled": ConfigKey(_parse_bool, True,
                                     "emit a functional report"),
    "functionals.path_steps": ConfigKey(int, 33,
                                        "nodes per path-integral segment"),
    "functionals.family": ConfigKey(
        str, "sine", "potential evaluated by the functionals subcommand",
        choices=FAMILY_NAMES),
    "functionals.amplitude": ConfigKey(float, 0.1,
                                       "amplitude for functionals.family"),
    "functionals.wavenumber": ConfigKey(int, 1,
                                        "wavenumber for functionals.family"),
    "geodesic.enabled": ConfigKey(_parse_bool, False,
                                  "run the geodesic convexity probe"),
    "geodesic.functional": ConfigKey(str, "j_tilde", "functional to probe",
                                     choices=_PROBE_IDS),
    "geodesic.nodes": ConfigKey(int, 33, "path samples per geodesic"),
    "geodesic.pairs": ConfigKey(int, 4, "random endpoint pairs to probe"),
    "geodesic.amplitude": ConfigKey(float, 0.5,
                                    "amplitude of random endpoints"),
    "hypotheses.enabled": ConfigKey(_parse_bool, True,
                                    "emit a hypothesis report"),
    "hypotheses.epsilon": ConfigKey(float, 0.1,
                                    "positivity slack in the checked "
                                    "conditions; must be >= 0"),
    "hypotheses.alpha_lower_bound": ConfigKey(
        float, 0.2, "lower bound fed to the invariant-based condition"),
    "output.directory": ConfigKey(str, "out", "where reports are written"),
    "seed": ConfigKey(int, 0, "random seed for generated potentials"),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Effective (fully defaulted) configuration plus line provenance."""

    values: dict
    lines: dict = field(default_factory=dict)

    def get(self, key: str):
        return self.values[key]

    def line(self, key: str) -> str | None:
        return self.lines.get(key)

    def render(self) -> str:
        out = ["# effective configuration; re-runnable as-is"]
        for key in CONFIG_KEYS:
            out.append(f"{key} = {_render(self.values[key])}")
        return "\n".join(out) + "\n"


def parse_config(text: str) -> ScenarioConfig:
    values = {key: spec.default for key, spec in CONFIG_KEYS.items()}
    lines: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected key = value", line=raw)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown configuration key {key!r}", line=raw)
        spec = CONFIG_KEYS[key]
        try:
            parsed = spec.parse(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", line=raw) from exc
        if spec.choices and parsed not in spec.choices:
            raise ConfigError(
                f"{key} must be one of {', '.join(spec.choices)}", line=raw)
        values[key] = parsed
        lines[key] = raw
    return ScenarioConfig(values=values, lines=lines)


def load_config(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read())


def reference_page() -> str:
    """Generated key reference: names, defaults, help."""
    out = ["# Configuration reference", "",
           "One `key = value` per line; `#` starts a comment. "
           "Unknown keys are rejected.", ""]
    width = max(len(k) for k in CONFIG_KEYS)
    for key, spec in CONFIG_KEYS.items():
        entry = f"{key:<{width}}  default {_render(spec.default)!s:<8}  {spec.help}"
        if spec.choices:
            entry += f" (one of: {', '.join(spec.choices)})"
        out.append(entry)
    return "\n".join(out) + "\n"


def build_backend(cfg: ScenarioConfig) -> GeometryBackend:
    kind = cfg.get("geometry.kind")
    size = cfg.get("geometry.size")
    if size < 4:
        raise ConfigError("geometry.size must be at least 4",
                          line=cfg.line("geometry.size"))
    if kind == "sphere":
        if cfg.get("geometry.dim") != 1:
            raise ConfigError("the sphere reduction is one-dimensional",
                              line=cfg.line("geometry.dim"))
        return SphereBackend(size, s_max=cfg.get("geometry.s_max"))
    dim = cfg.get("geometry.dim")
    if dim < 1:
        raise ConfigError("geometry.dim must be positive",
                          line=cfg.line("geometry.dim"))
    return TorusBackend((size,) * dim)


def build_reference(cfg: ScenarioConfig, backend: GeometryBackend):
    """The reference form omega from scale and optional exact density offset."""
    scale = cfg.get("reference.scale")
    if scale <= 0:
        raise ConfigError("reference.scale must be positive",
                          line=cfg.line("reference.scale"))
    base = backend.base_form()
    family = cfg.get("reference.offset_family")
    amplitude = cfg.get("reference.offset_amplitude")
    if family == "zero" or amplitude == 0.0:
        return backend.form(scale * base.matrices)
    if not isinstance(backend, TorusBackend) or backend.n != 1:
        raise ConfigError(
            "reference.offset_family needs the torus n=1 backend; other "
            "geometries take plain chi0 multiples",
            line=cfg.line("reference.offset_family"))
    offset = named_potential(backend, family, 1.0,
                             cfg.get("reference.offset_wavenumber"))
    offset = amplitude * (offset - offset.mean())
    psi = hessian_offset_potential(backend, offset)
    matrices = scale * base.matrices.copy()
    matrices[..., 0, 0] += complex_hessian(backend, psi)[..., 0, 0]
    form = backend.form(matrices)
    if not form.kahler:
        raise ConfigError(
            "reference offset makes the form lose positivity",
            line=cfg.line("reference.offset_amplitude"))
    return form


def build_problem(cfg: ScenarioConfig, backend: GeometryBackend,
                  omega) -> FlowProblem:
    method = cfg.get("flow.method")
    try:
        return FlowProblem(
            backend=backend, omega=omega, c=cfg.get("flow.c"),
            t_max=cfg.get("flow.t_max"),
            residual_target=cfg.get("flow.residual_target"),
            cfl_safety=cfg.get("flow.cfl_safety"),
            dt_min=cfg.get("flow.dt_min"), method=method,
            log_every=cfg.get("flow.log_every"))
    except ConfigError as exc:
        raise ConfigError(str(exc), line=cfg.line("flow.method")) from exc


def initial_potential(cfg: ScenarioConfig, backend: GeometryBackend):
    try:
        return named_potential(
            backend, cfg.get("flow.initial_family"),
            cfg.get("flow.initial_amplitude"),
            cfg.get("flow.initial_wavenumber"), seed=cfg.get("seed"))
    except GeometryError as exc:
        raise ConfigError(str(exc), line=cfg.line("flow.initial_family")) from exc
