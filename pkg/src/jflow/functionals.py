"""Energy functionals on the space of Kahler potentials.

Measure conventions, used consistently by every functional here (this is
the single constants table; nothing else in the package converts
measures):

    volume density    chi^n / n!            ->  det(chi) * weights
    mixed density     A ^ chi^(n-1) / (n-1)! ->  tr(chi^{-1} A) det(chi) * weights

Path functionals integrate along piecewise-linear potential paths with
composite Simpson quadrature (odd node count, default 33).  Along a
linear segment every integrand below is a polynomial in t of degree at
most n + 1, so for n <= 2 the quadrature is exact and the only
discretization error is spatial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import GeometryError, HermitianFormField, PotentialField, ScalarField
from .geometry import (
    GeometryBackend,
    build_metric,
    integrate,
    mixed_volume_density,
    ricci_form,
    theta_of,
    trace_with,
    volume,
)

DEFAULT_PATH_STEPS = 33

# Discrete Jensen guard: entropy of equal-mass measures cannot go below
# zero by more than round-off.
ENTROPY_FLOOR = -1e-8


def _values(phi) -> np.ndarray:
    if isinstance(phi, PotentialField):
        return phi.values
    return np.asarray(phi, dtype=float)


def _matrices(form) -> np.ndarray:
    if isinstance(form, HermitianFormField):
        return form.matrices
    return np.asarray(form, dtype=float)


def _simpson_nodes(path_steps: int) -> tuple[np.ndarray, np.ndarray]:
    if path_steps < 3 or path_steps % 2 == 0:
        raise ValueError("path_steps must be odd and at least 3")
    t = np.linspace(0.0, 1.0, path_steps)
    coeff = np.ones(path_steps)
    coeff[1:-1:2] = 4.0
    coeff[2:-1:2] = 2.0
    coeff *= (1.0 / (path_steps - 1)) / 3.0
    return t, coeff


def _route(backend: GeometryBackend, phi, waypoints) -> list[np.ndarray]:
    end = backend.check_field(_values(phi), "potential")
    if waypoints is None:
        return [np.zeros(backend.grid_shape), end]
    route = [np.zeros(backend.grid_shape)]
    route += [backend.check_field(_values(w), "waypoint") for w in waypoints]
    route.append(end)
    return route


def _path_integral(backend: GeometryBackend, phi, density_fn,
                   path_steps: int, waypoints) -> float:
    """Integrate phi_dot * density(chi_t, phi_t) over a piecewise-linear path.

    density_fn(chi_t, phi_t) returns a grid density; each segment is
    sampled at Simpson nodes and nodes are accumulated in a fixed order
    so results are deterministic.
    """
    base = backend.base_form()
    t_nodes, coeff = _simpson_nodes(path_steps)
    total = 0.0
    route = _route(backend, phi, waypoints)
    for phi_a, phi_b in zip(route[:-1], route[1:]):
        rate = phi_b - phi_a
        segment = 0.0
        for t, ck in zip(t_nodes, coeff):
            phi_t = phi_a + t * rate
            chi_t = build_metric(backend, base, phi_t)
            chi_t.require_kahler("path quadrature node")
            dens = density_fn(chi_t, phi_t)
            segment += ck * float(np.sum(rate * dens * backend.weights))
        total += segment
    return total


def level_constant(backend: GeometryBackend, omega,
                   chi: HermitianFormField | None = None) -> float:
    """Class ratio of omega against the reference class.

    Computed as the mean of tr(chi^{-1} omega) over the chi volume,
    divided by n; independent of the class representative chi up to
    quadrature error.
    """
    chi = backend.base_form() if chi is None else chi
    om = _matrices(omega)
    density = backend.volume_density(chi)
    numerator = float(np.sum(trace_with(chi, om) * density))
    return numerator / (backend.n * float(np.sum(density)))


@dataclass(frozen=True)
class AubinEnergies:
    """I, J, and the two routes to I - J (direct and path formula)."""

    I: float
    J: float
    i_minus_j: float
    i_minus_j_path: float

    @property
    def path_defect(self) -> float:
        return abs(self.i_minus_j - self.i_minus_j_path)


def aubin_i(backend: GeometryBackend, phi) -> float:
    values = backend.check_field(_values(phi), "potential")
    base = backend.base_form()
    chi = build_metric(backend, base, values).require_kahler("aubin energies")
    diff = base.det() - chi.det()
    return float(np.sum(values * diff * backend.weights))


def aubin_j(backend: GeometryBackend, phi,
            path_steps: int = DEFAULT_PATH_STEPS, waypoints=None) -> float:
    base_det = backend.base_form().det()

    def dens(chi_t, phi_t):
        return base_det - chi_t.det()

    return _path_integral(backend, phi, dens, path_steps, waypoints)


def aubin_ij(backend: GeometryBackend, phi,
             path_steps: int = DEFAULT_PATH_STEPS) -> AubinEnergies:
    """I and J plus a cross-check of I - J against its path formula."""
    i_val = aubin_i(backend, phi)
    j_val = aubin_j(backend, phi, path_steps)
    base = backend.base_form()
    base_mats = base.matrices

    def dens(chi_t, phi_t):
        return -(backend.n * chi_t.det() - mixed_volume_density(chi_t, base_mats))

    path_val = _path_integral(backend, phi, dens, path_steps, None)
    return AubinEnergies(I=i_val, J=j_val, i_minus_j=i_val - j_val,
                         i_minus_j_path=path_val)


def j_hat(backend: GeometryBackend, omega, phi,
          path_steps: int = DEFAULT_PATH_STEPS, waypoints=None) -> float:
    """Path integral of phi_dot (mixed(omega) - n c vol) along the route."""
    om = _matrices(omega)
    c = level_constant(backend, omega)

    def dens(chi_t, phi_t):
        return mixed_volume_density(chi_t, om) - backend.n * c * chi_t.det()

    return _path_integral(backend, phi, dens, path_steps, waypoints)


def theta_path_term(backend: GeometryBackend, phi,
                    path_steps: int = DEFAULT_PATH_STEPS, waypoints=None) -> float:
    """Path integral of phi_dot theta(chi_t) dV_t, the symmetry coupling."""

    def dens(chi_t, phi_t):
        return theta_of(backend, phi_t) * chi_t.det()

    return _path_integral(backend, phi, dens, path_steps, waypoints)


def j_tilde(backend: GeometryBackend, omega, phi,
            path_steps: int = DEFAULT_PATH_STEPS, waypoints=None) -> float:
    """j_hat plus the symmetry coupling term (equals j_hat when X = 0)."""
    return (j_hat(backend, omega, phi, path_steps, waypoints)
            + theta_path_term(backend, phi, path_steps, waypoints))


def j_flow(backend: GeometryBackend, omega, phi,
           path_steps: int = DEFAULT_PATH_STEPS, waypoints=None) -> float:
    """Descent potential of the flow: j_hat minus the coupling term.

    Its critical points satisfy trace equation = n c + theta, i.e. the
    stationary states of the flow; it decreases along trajectories.
    Coincides with j_tilde when the vector field vanishes.
    """
    return (j_hat(backend, omega, phi, path_steps, waypoints)
            - theta_path_term(backend, phi, path_steps, waypoints))


def entropy(backend: GeometryBackend, phi) -> float:
    values = backend.check_field(_values(phi), "potential")
    base = backend.base_form()
    chi = build_metric(backend, base, values).require_kahler("entropy")
    ratio = chi.det() / base.det()
    val = float(np.sum(np.log(ratio) * chi.det() * backend.weights))
    if val < ENTROPY_FLOOR:
        # Total volumes agree exactly on both backends, so Jensen bounds
        # the discrete value below by zero up to round-off.
        raise GeometryError(f"entropy {val:.3e} violates the Jensen floor")
    return val


def k_energy(backend: GeometryBackend, phi,
             path_steps: int = DEFAULT_PATH_STEPS) -> float:
    omega0 = -ricci_form(backend, backend.base_form())
    return entropy(backend, phi) + j_hat(backend, omega0, phi, path_steps)


def k_energy_modified(backend: GeometryBackend, phi,
                      path_steps: int = DEFAULT_PATH_STEPS) -> tuple[float, float]:
    """(mu, mu_tilde): entropy plus j_hat / j_tilde against -Ric(chi0)."""
    omega0 = -ricci_form(backend, backend.base_form())
    ent = entropy(backend, phi)
    jh = j_hat(backend, omega0, phi, path_steps)
    coupling = theta_path_term(backend, phi, path_steps)
    return ent + jh, ent + jh + coupling


def sigma_energy(backend: GeometryBackend, phi,
                 omega) -> tuple[ScalarField, float]:
    """sigma = theta(chi_phi) - tr(chi_phi^{-1} omega) and E = int sigma^2 dV."""
    values = backend.check_field(_values(phi), "potential")
    chi = build_metric(backend, backend.base_form(), values)
    chi.require_kahler("sigma energy")
    om = _matrices(omega)
    sigma = theta_of(backend, values) - trace_with(chi, om)
    energy = integrate(backend, sigma * sigma, chi)
    return sigma, energy


def extremal_residual(backend: GeometryBackend, phi) -> ScalarField:
    """tr(chi^{-1} Ric) - mean - theta: the first variation density of mu_tilde.

    The curvature trace here is the complex trace (one eigenvalue sum,
    not its real-geometry double), which is the normalization that makes
    the directional derivative of k_energy_modified equal to minus the
    pairing with this residual.
    """
    values = backend.check_field(_values(phi), "potential")
    chi = build_metric(backend, backend.base_form(), values)
    chi.require_kahler("extremal residual")
    curv = trace_with(chi, ricci_form(backend, chi))
    mean = integrate(backend, curv, chi) / volume(backend, chi)
    return curv - mean - theta_of(backend, values)


def scalar_curvature(backend: GeometryBackend, chi: HermitianFormField) -> ScalarField:
    """Riemannian scalar curvature, twice the complex curvature trace."""
    return 2.0 * trace_with(chi, ricci_form(backend, chi))


@dataclass(frozen=True)
class FunctionalReport:
    c: float
    I: float
    J: float
    j_hat: float
    j_tilde: float
    entropy: float
    k_energy: float
    k_energy_modified: float
    E: float
    path_steps: int
    quadrature_rule: str

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "I": self.I,
            "J": self.J,
            "j_hat": self.j_hat,
            "j_tilde": self.j_tilde,
            "entropy": self.entropy,
            "k_energy": self.k_energy,
            "k_energy_modified": self.k_energy_modified,
            "E": self.E,
            "path_steps": self.path_steps,
            "quadrature_rule": self.quadrature_rule,
        }


def functional_report(backend: GeometryBackend, phi, omega,
                      path_steps: int = DEFAULT_PATH_STEPS,
                      c: float | None = None) -> FunctionalReport:
    """Evaluate the full functional family at one potential."""
    values = backend.check_field(_values(phi), "potential")
    energies = aubin_ij(backend, values, path_steps)
    jh = j_hat(backend, omega, values, path_steps)
    coupling = theta_path_term(backend, values, path_steps)
    mu, mu_tilde = k_energy_modified(backend, values, path_steps)
    _, e_val = sigma_energy(backend, values, omega)
    return FunctionalReport(
        c=level_constant(backend, omega) if c is None else float(c),
        I=energies.I,
        J=energies.J,
        j_hat=jh,
        j_tilde=jh + coupling,
        entropy=entropy(backend, values),
        k_energy=mu,
        k_energy_modified=mu_tilde,
        E=e_val,
        path_steps=path_steps,
        quadrature_rule="simpson",
    )
