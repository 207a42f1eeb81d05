import numpy as np
import pytest

from jflow import ConfigError, GeometryError, parse_config, reference_page
from jflow.config import (CONFIG_KEYS, build_backend, build_problem,
                          build_reference, initial_potential, load_config)
from jflow.geometry import SphereBackend, TorusBackend


def test_empty_text_yields_defaults():
    cfg = parse_config("")
    for key, spec in CONFIG_KEYS.items():
        assert cfg.get(key) == spec.default
    assert cfg.line("geometry.kind") is None


def test_round_trip_through_render():
    cfg = parse_config("geometry.kind = sphere\nflow.t_max = 2.5\nseed = 9\n")
    again = parse_config(cfg.render())
    assert again.values == cfg.values


def test_comments_and_blanks_ignored():
    text = """
    # a scenario
    geometry.kind = sphere   # inline remark
    geometry.size = 96

    flow.require_convergence = true
    """
    cfg = parse_config(text)
    assert cfg.get("geometry.kind") == "sphere"
    assert cfg.get("geometry.size") == 96
    assert cfg.get("flow.require_convergence") is True
    assert "geometry.size = 96" in cfg.line("geometry.size")


def test_unknown_key_carries_offending_line():
    with pytest.raises(ConfigError) as err:
        parse_config("geometry.sise = 12")
    assert err.value.line == "geometry.sise = 12"


def test_bad_value_carries_offending_line():
    with pytest.raises(ConfigError) as err:
        parse_config("geometry.size = many")
    assert "geometry.size" in str(err.value)
    assert err.value.line == "geometry.size = many"


def test_bad_choice_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config("geometry.kind = plane")
    assert "one of" in str(err.value)


def test_bad_boolean_rejected():
    with pytest.raises(ConfigError):
        parse_config("functionals.enabled = maybe")


def test_missing_equals_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config("geometry.size 128")
    assert err.value.line == "geometry.size 128"


def test_optional_level_parses_auto():
    assert parse_config("flow.c = auto").get("flow.c") is None
    assert parse_config("flow.c = 2.0").get("flow.c") == 2.0


def test_reference_page_covers_every_key():
    page = reference_page()
    for key, spec in CONFIG_KEYS.items():
        assert key in page
        assert spec.help.split()[0] in page
    assert "torus, sphere" in page
    assert "rk4, euler, semi_implicit" in page


def test_load_config_reads_files(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("geometry.size = 48\n")
    assert load_config(str(path)).get("geometry.size") == 48


# --- builders ----------------------------------------------------------------

def test_build_backend_kinds():
    sphere = build_backend(parse_config(
        "geometry.kind = sphere\ngeometry.size = 64\ngeometry.s_max = 8.0"))
    assert isinstance(sphere, SphereBackend)
    assert sphere.grid_shape == (64,)
    torus = build_backend(parse_config("geometry.dim = 2\ngeometry.size = 16"))
    assert isinstance(torus, TorusBackend)
    assert torus.grid_shape == (16, 16)


def test_build_backend_validation():
    with pytest.raises(ConfigError):
        build_backend(parse_config("geometry.size = 2"))
    with pytest.raises(ConfigError):
        build_backend(parse_config("geometry.kind = sphere\ngeometry.dim = 2"))
    with pytest.raises(ConfigError):
        build_backend(parse_config("geometry.dim = 0"))


def test_build_reference_scaled_with_exact_offset():
    cfg = parse_config(
        "reference.scale = 2.0\n"
        "reference.offset_family = sine\n"
        "reference.offset_amplitude = 0.6\n")
    backend = build_backend(cfg)
    omega = build_reference(cfg, backend)
    x = backend.axes[0]
    want = 2.0 + 0.6 * np.sin(2 * np.pi * x)
    assert np.abs(omega.matrices[..., 0, 0] - want).max() < 1e-12
    from jflow import level_constant
    assert abs(level_constant(backend, omega) - 2.0) < 1e-13


def test_build_reference_rejects_bad_scale():
    cfg = parse_config("reference.scale = -1.0")
    with pytest.raises(ConfigError):
        build_reference(cfg, build_backend(cfg))


def test_build_reference_offset_needs_torus_line():
    cfg = parse_config(
        "geometry.kind = sphere\n"
        "reference.offset_family = sine\n"
        "reference.offset_amplitude = 0.3\n")
    backend = build_backend(cfg)
    with pytest.raises(ConfigError) as err:
        build_reference(cfg, backend)
    assert "offset_family" in (err.value.line or "")


def test_build_reference_offset_keeps_positivity():
    cfg = parse_config(
        "reference.scale = 1.0\n"
        "reference.offset_family = sine\n"
        "reference.offset_amplitude = 1.5\n")
    backend = build_backend(cfg)
    with pytest.raises(ConfigError):
        build_reference(cfg, backend)


def test_build_problem_maps_method_error_to_config():
    cfg = parse_config("flow.method = semi_implicit")
    backend = build_backend(cfg)
    omega = build_reference(cfg, backend)
    with pytest.raises(ConfigError) as err:
        build_problem(cfg, backend, omega)
    assert err.value.line == "flow.method = semi_implicit"


def test_build_problem_carries_settings():
    cfg = parse_config("flow.t_max = 3.0\nflow.residual_target = 1e-4\n"
                       "flow.cfl_safety = 0.33\nflow.log_every = 5")
    backend = build_backend(cfg)
    problem = build_problem(cfg, backend, build_reference(cfg, backend))
    assert problem.t_max == 3.0
    assert problem.residual_target == 1e-4
    assert problem.cfl_safety == 0.33
    assert problem.log_every == 5


def test_initial_potential_family_errors_map_to_config():
    cfg = parse_config("flow.initial_family = translation")
    backend = build_backend(cfg)  # torus: no translation family
    with pytest.raises(ConfigError):
        initial_potential(cfg, backend)


def test_initial_potential_seeded_random_is_stable():
    cfg = parse_config("flow.initial_family = random\nseed = 4")
    backend = build_backend(cfg)
    a = initial_potential(cfg, backend)
    b = initial_potential(cfg, backend)
    assert np.array_equal(a, b)
