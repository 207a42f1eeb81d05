import numpy as np
import pytest

from jflow import (
    ConfigError,
    FlowProblem,
    StepStalled,
    build_metric,
    flow_rhs,
    linearized_operator,
    random_kahler_potential,
    run_flow,
    theta_of,
    trace_with,
)
from jflow.flow import initial_state, step
from jflow.potentials import hessian_offset_potential


def torus_target_form(backend, amplitude=0.3, scale=2.0):
    # density scale * (1 + amplitude sin(2 pi x)): an exact-class form
    x = backend.axes[0]
    offset = scale * amplitude * np.sin(2.0 * np.pi * x)
    psi = hessian_offset_potential(backend, offset)
    from jflow import complex_hessian
    density = scale + complex_hessian(backend, psi)[..., 0, 0]
    return backend.form(density[:, None, None])


# --- right-hand side ---------------------------------------------------------

def test_rhs_vanishes_at_matched_reference(torus64):
    omega = torus64.form(2.0 * torus64.base_form().matrices)
    rhs = flow_rhs(torus64, np.zeros(64), omega, 2.0)
    assert np.array_equal(rhs, np.zeros(64))


def test_rhs_sphere_reference_is_moment_window(sphere128):
    rhs = flow_rhs(sphere128, np.zeros(sphere128.grid_shape),
                   sphere128.base_form(), 1.0)
    theta0 = theta_of(sphere128, np.zeros(sphere128.grid_shape))
    assert np.allclose(rhs, theta0, atol=1e-14)
    assert rhs.min() > -0.5
    assert rhs.max() < 0.5


def test_rhs_closed_form_torus(torus128, rng):
    phi = random_kahler_potential(torus128, rng, 0.5)
    omega = torus_target_form(torus128)
    c = 2.0
    chi = build_metric(torus128, torus128.base_form(), phi)
    want = c - trace_with(chi, omega.matrices)
    got = flow_rhs(torus128, phi, omega, c)
    assert np.abs(got - want).max() < 1e-13


# --- linearization -----------------------------------------------------------

def test_linearized_matches_directional_difference(torus128, sphere128, rng):
    h = 1e-6
    for b in (torus128, sphere128):
        omega = b.base_form()
        phi = random_kahler_potential(b, rng, 0.4)
        psi = random_kahler_potential(b, rng, 0.4)
        op = linearized_operator(b, phi, omega)
        got = op.apply(psi)
        fd = (flow_rhs(b, phi + h * psi, omega, 1.0)
              - flow_rhs(b, phi - h * psi, omega, 1.0)) / (2.0 * h)
        scale = max(1.0, np.abs(fd).max())
        assert np.abs(got - fd).max() < 1e-5 * scale


def test_linearized_stiffness_bound_matches_backend(torus64, sphere64, rng):
    for b in (torus64, sphere64):
        phi = random_kahler_potential(b, rng, 0.3)
        omega = b.base_form()
        op = linearized_operator(b, phi, omega)
        chi = build_metric(b, b.base_form(), phi)
        assert op.max_coefficient == b.cfl_coefficient(chi, omega)


def test_linearized_sign_is_dissipative(torus64):
    # Rayleigh quotient on the lowest mode at the reference state
    x = torus64.axes[0]
    psi = np.sin(2 * np.pi * x)
    op = linearized_operator(torus64, np.zeros(64), torus64.base_form())
    pairing = np.sum(psi * op.apply(psi) * torus64.weights)
    assert pairing < -1.0


# --- problem validation ------------------------------------------------------

def test_semi_implicit_is_a_rejected_stub(torus64):
    with pytest.raises(ConfigError):
        FlowProblem(backend=torus64, omega=torus64.base_form(),
                    method="semi_implicit")


def test_unknown_method_rejected(torus64):
    with pytest.raises(ConfigError):
        FlowProblem(backend=torus64, omega=torus64.base_form(),
                    method="leapfrog")


def test_omega_grid_must_match(torus64, torus128):
    with pytest.raises(ConfigError):
        FlowProblem(backend=torus64, omega=torus128.base_form())


def test_level_defaults_to_class_ratio(torus64):
    omega = torus64.form(2.0 * torus64.base_form().matrices)
    assert FlowProblem(backend=torus64, omega=omega).level == 2.0
    assert FlowProblem(backend=torus64, omega=omega, c=3.5).level == 3.5


# --- stepping ----------------------------------------------------------------

def test_initial_state_caps_dt(torus64):
    omega = torus64.base_form()
    problem = FlowProblem(backend=torus64, omega=omega, cfl_safety=0.3)
    st = initial_state(problem)
    assert st.dt <= 0.3 * torus64.spacing**2 / 0.25 + 1e-15
    tiny = FlowProblem(backend=torus64, omega=omega, dt_init=1e-9)
    assert initial_state(tiny).dt == 1e-9


def test_single_step_advances(torus64):
    omega = torus_target_form(torus64)
    problem = FlowProblem(backend=torus64, omega=omega)
    st0 = initial_state(problem)
    st1 = step(problem, st0)
    assert st1.t > 0.0
    assert st1.step_count == 1
    assert not np.array_equal(st1.phi, st0.phi)


def test_stalled_step_raises(torus64):
    # euler far above its stability cap: the energy monitor rejects the
    # step and the halved size immediately underflows the floor
    omega = torus_target_form(torus64)
    problem = FlowProblem(backend=torus64, omega=omega, method="euler",
                          cfl_safety=5.0, dt_min=1.0, t_max=10.0)
    with pytest.raises(StepStalled):
        run_flow(problem)


# --- monitored runs ----------------------------------------------------------

def test_already_critical_converges_without_stepping(torus64):
    omega = torus64.form(2.0 * torus64.base_form().matrices)
    result = run_flow(FlowProblem(backend=torus64, omega=omega))
    assert result.converged
    assert result.reason == "residual"
    assert result.state.step_count == 0
    assert result.residual == 0.0
    assert len(result.records) == 1
    assert result.minus_nc == -2.0


def test_flow_run_monitors_stay_clean(torus128):
    omega = torus_target_form(torus128)
    problem = FlowProblem(backend=torus128, omega=omega, t_max=0.2,
                          cfl_safety=0.4)
    result = run_flow(problem)
    records = result.records
    assert len(records) > 10
    assert result.suspect_steps == 0
    energies = [r.E for r in records]
    assert all(b < a for a, b in zip(energies[:-1], energies[1:]))
    lo, hi = result.state.rhs_range_initial
    tol = 1e-6 + 10.0 * torus128.spacing**2
    for r in records:
        assert r.rhs_min >= lo - tol
        assert r.rhs_max <= hi + tol
    # the measured energy slope tracks the dissipation prediction
    for r in records[1:]:
        assert r.dE_dt_measured <= 0.0
        assert abs(r.dE_dt_measured - r.dE_dt_predicted) <= \
            0.05 * abs(r.dE_dt_predicted) + 1e-9


def test_flow_floor_tracks_trace_bound(torus128):
    omega = torus_target_form(torus128)
    result = run_flow(FlowProblem(backend=torus128, omega=omega, t_max=0.05))
    for r in result.records:
        assert r.floor_constant > 0.0
        # n = 1: the positivity floor is the reciprocal of the trace peak
        assert abs(r.floor_constant * r.lambda_max - 1.0) < 1e-12


def test_flow_gauge_shift_commutes(torus64, rng):
    omega = torus_target_form(torus64)
    phi0 = random_kahler_potential(torus64, rng, 0.2)
    problem = FlowProblem(backend=torus64, omega=omega, max_steps=20,
                          t_max=1.0)
    plain = run_flow(problem, phi0)
    lifted = run_flow(problem, phi0 + 3.0)
    assert plain.state.step_count == lifted.state.step_count
    assert np.abs((lifted.state.phi - plain.state.phi) - 3.0).max() < 1e-12


def test_flow_reaches_target_density(torus64):
    omega = torus_target_form(torus64)
    problem = FlowProblem(backend=torus64, omega=omega, t_max=40.0,
                          residual_target=1e-5, cfl_safety=0.45)
    result = run_flow(problem)
    assert result.converged and result.reason == "residual"
    assert result.residual <= 1e-5
    chi = build_metric(torus64, torus64.base_form(), result.state.phi)
    target = omega.matrices[..., 0, 0] / 2.0
    assert np.abs(chi.matrices[..., 0, 0] - target).max() < 1e-5
    assert abs(result.sigma_mean - result.minus_nc) < 1e-4
    assert result.subsolution_margin > 0.0


def test_flow_max_steps_reason(torus64):
    omega = torus_target_form(torus64)
    result = run_flow(FlowProblem(backend=torus64, omega=omega, max_steps=5,
                                  t_max=50.0))
    assert not result.converged
    assert result.reason == "max_steps"
    assert result.state.step_count == 5


def test_flow_log_thinning_and_final_row(torus64):
    omega = torus_target_form(torus64)
    problem = FlowProblem(backend=torus64, omega=omega, t_max=0.2,
                          log_every=50)
    result = run_flow(problem)
    assert len(result.records) < result.state.step_count
    # the last row always reflects the final state
    assert result.records[-1].t == result.state.t


def test_flow_snapshot_budget(torus64):
    omega = torus_target_form(torus64)
    problem = FlowProblem(backend=torus64, omega=omega, t_max=2.0,
                          snapshot_count=8)
    result = run_flow(problem)
    assert result.state.step_count > 40
    assert len(result.snapshots) <= 2 * 8 + 2
    assert result.snapshots[0][0] == 0.0
    assert result.snapshots[-1][0] == result.state.t


def test_sphere_flow_short_run_clean(sphere64):
    problem = FlowProblem(backend=sphere64, omega=sphere64.base_form(),
                          t_max=0.5, cfl_safety=0.4)
    result = run_flow(problem)
    assert result.suspect_steps == 0
    energies = [r.E for r in result.records]
    assert energies[-1] < energies[0]
    # the flow carries the moment window with it: rhs stays in (-1/2, 1/2)
    for r in result.records:
        assert -0.5 < r.rhs_min <= r.rhs_max < 0.5
