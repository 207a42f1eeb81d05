"""Legendre duality and geodesic paths for invariant sphere potentials.

In the rotation-invariant reduction, a metric chi_phi corresponds to a
convex symplectic potential u(m) on the moment interval, and the
geodesic equation

    phi_dd = (X phi_d)^2 / rho_chi

linearizes: a path of potentials is a geodesic exactly when the dual
path u_t is affine in t.  That duality is what this module implements;
convexity probing of energy functionals rides on top of it.

The torus reduction admits only constant invariant potentials, so every
entry point refuses torus backends with UnsupportedBackend.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import make_interp_spline

from .fields import (ConvexityLost, GeometryError, HermitianFormField,
                     PotentialField, ScalarField, UnsupportedBackend)
from .functionals import (DEFAULT_PATH_STEPS, aubin_i, aubin_j, entropy,
                          j_flow, j_hat, j_tilde, k_energy,
                          k_energy_modified)
from .geometry import GeometryBackend, SphereBackend, build_metric, integrate

# Root tolerance in the moment variable for both transform directions.
LEGENDRE_TOL = 1e-10

# Fraction of the unsampled boundary gap kept out of the root bracket.
# Roots live in the open moment interval, and their excursion past the
# grid is bounded by the gap itself, so data is never extrapolated
# farther than the gap width.  A sup pinned into the last sliver of the
# gap has left the resolvable chart and raises ConvexityLost.
TAIL_SLIVER = 1e-3


def _values(phi) -> np.ndarray:
    if isinstance(phi, PotentialField):
        return phi.values
    return np.asarray(phi, dtype=float)


def _require_sphere(backend: GeometryBackend) -> SphereBackend:
    if not isinstance(backend, SphereBackend):
        raise UnsupportedBackend(
            "geodesics need the moment-interval reduction; on the torus the "
            "invariant potentials are the constants and every path is trivial")
    return backend


@dataclass(frozen=True)
class SymplecticPotential:
    """u(m) on the backend moment grid, with its convexity verdict.

    ``convex`` records whether every discrete second difference of the
    values is nonnegative, which is what positivity of the dual metric
    looks like on this side of the transform.
    """

    values: np.ndarray
    convex: bool

    @classmethod
    def from_values(cls, values: np.ndarray) -> "SymplecticPotential":
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise GeometryError("symplectic potential contains non-finite entries")
        convex = bool(np.all(np.diff(values, 2) >= 0.0))
        return cls(values=values, convex=convex)

    def second_differences(self) -> np.ndarray:
        return np.diff(self.values, 2)


def _solve_monotone(func: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
                    lo: float, hi: float, targets: np.ndarray,
                    tol: float) -> np.ndarray:
    """Componentwise root of func(x).value = target on a common bracket.

    Safeguarded Newton: iterates that leave their bracket fall back to
    bisection, so convergence only needs the bracket to hold a sign
    change.  Callers check the bracket before calling.
    """
    lo_arr = np.full(targets.shape, lo, dtype=float)
    hi_arr = np.full(targets.shape, hi, dtype=float)
    x = 0.5 * (lo_arr + hi_arr)
    for _ in range(200):
        value, slope = func(x)
        f = value - targets
        lo_arr = np.where(f <= 0.0, x, lo_arr)
        hi_arr = np.where(f > 0.0, x, hi_arr)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - f / slope
        inside = (slope > 0.0) & (newton > lo_arr) & (newton < hi_arr)
        x_new = np.where(inside & np.isfinite(newton), newton,
                         0.5 * (lo_arr + hi_arr))
        if np.all((hi_arr - lo_arr < tol) | (np.abs(x_new - x) < 0.01 * tol)):
            return x_new
        x = x_new
    raise GeometryError("moment root refinement failed to reach tolerance")


def _base_symplectic(backend: SphereBackend) -> np.ndarray:
    # Closed-form dual of the round chart potential.
    m = backend.m
    return m * np.log(m) + (1.0 - m) * np.log1p(-m)


def legendre_transform(backend: GeometryBackend, phi) -> SymplecticPotential:
    """u(m) = sup_s (m s - f(s)) for the total chart potential f = f0 + phi.

    The sup sits where the deformed moment m + X(phi) equals the target,
    so the transform reduces to a monotone solve per grid node.  Roots
    may run into the unsampled gap between the grid and the true
    interval ends; a sup that needs even the last TAIL_SLIVER of that
    gap is pinned against the truncation boundary and raises
    ConvexityLost.
    """
    sphere = _require_sphere(backend)
    values = sphere.check_field(_values(phi), "potential")
    build_metric(sphere, sphere.base_form(), values).require_kahler(
        "legendre transform")
    m = sphere.m
    # Quintic interpolation keeps the end-derivative error well under the
    # round-trip tolerance; the grid is uniform, so the fit is banded.
    spline = make_interp_spline(m, values, k=5)

    def moment(x):
        rho0 = x * (1.0 - x)
        return (x + rho0 * spline(x, 1),
                1.0 + (1.0 - 2.0 * x) * spline(x, 1) + rho0 * spline(x, 2))

    lo = TAIL_SLIVER * sphere.m_lo
    hi = 1.0 - lo
    image_lo = moment(np.array([lo]))[0][0]
    image_hi = moment(np.array([hi]))[0][0]
    if image_lo > m[0] or image_hi < m[-1]:
        raise ConvexityLost(
            "legendre sup attained at the s-truncation boundary: moment image "
            f"[{image_lo:.8f}, {image_hi:.8f}] does not cover the grid")
    m_star = _solve_monotone(moment, lo, hi, m, LEGENDRE_TOL)
    s_star = np.log(m_star) - np.log1p(-m_star)
    u = m * s_star + np.log1p(-m_star) - spline(m_star)
    return SymplecticPotential.from_values(u)


def legendre_inverse(backend: GeometryBackend,
                     u: SymplecticPotential | np.ndarray) -> ScalarField:
    """Chart potential phi with legendre_transform(phi) = u.

    Solves u'(m) = s per grid node (monotone Newton with bisection
    fallback, tolerance LEGENDRE_TOL in m) and evaluates
    phi(s) = m* s - u(m*) - f0(s).  Only the deviation of u from the
    round-chart dual is interpolated, so the log-singular part of u' at
    the interval ends is handled exactly and roots may sit anywhere in
    the open moment interval, boundary gap included, short of the last
    TAIL_SLIVER of it.
    """
    sphere = _require_sphere(backend)
    uv = u.values if isinstance(u, SymplecticPotential) else np.asarray(u, dtype=float)
    if uv.shape != sphere.grid_shape:
        raise GeometryError(
            f"symplectic potential shape {uv.shape} does not match grid "
            f"{sphere.grid_shape}")
    m = sphere.m
    u0 = _base_symplectic(sphere)
    deviation = make_interp_spline(m, uv - u0, k=5)

    def slope(x):
        rho0 = x * (1.0 - x)
        return (np.log(x) - np.log1p(-x) + deviation(x, 1),
                1.0 / rho0 + deviation(x, 2))

    lo = TAIL_SLIVER * sphere.m_lo
    hi = 1.0 - lo
    targets = sphere.s
    if slope(np.array([lo]))[0][0] > targets[0] or \
            slope(np.array([hi]))[0][0] < targets[-1]:
        raise ConvexityLost(
            "inverse legendre slope range does not cover the chart: the sup "
            "is attained at the s-truncation boundary")
    m_star = _solve_monotone(slope, lo, hi, targets, LEGENDRE_TOL)
    u_star = (m_star * np.log(m_star) + (1.0 - m_star) * np.log1p(-m_star)
              + deviation(m_star))
    return m_star * targets - u_star - sphere.f0


def geodesic_path(backend: GeometryBackend, phi_a, phi_b,
                  steps: int) -> list[ScalarField]:
    """Potentials along the geodesic from phi_a to phi_b.

    ``steps`` is the number of samples returned, at uniform t in [0, 1];
    the path is affine between the endpoint symplectic potentials, which
    is what solves the geodesic equation in this reduction.  Every
    sample is positivity-checked.
    """
    sphere = _require_sphere(backend)
    if steps < 2:
        raise GeometryError("a geodesic path needs at least its two endpoints")
    u_a = legendre_transform(sphere, phi_a).values
    u_b = legendre_transform(sphere, phi_b).values
    base = sphere.base_form()
    path = []
    for t in np.linspace(0.0, 1.0, steps):
        phi_t = legendre_inverse(sphere, (1.0 - t) * u_a + t * u_b)
        build_metric(sphere, base, phi_t).require_kahler("geodesic sample")
        path.append(phi_t)
    return path


def geodesic_residual(backend: GeometryBackend,
                      path: Sequence) -> float:
    """Sup norm of phi_dd - (X phi_d)^2 / rho over interior path nodes.

    Time derivatives are central differences at the path's own node
    spacing, so for an exact geodesic this decays like the square of
    the grid and node spacings together.
    """
    sphere = _require_sphere(backend)
    if len(path) < 3:
        raise GeometryError("residual needs at least three path nodes")
    arr = np.stack([sphere.check_field(_values(p), "path node") for p in path])
    dt = 1.0 / (len(path) - 1)
    base = sphere.base_form()
    worst = 0.0
    for k in range(1, len(path) - 1):
        accel = (arr[k + 1] - 2.0 * arr[k] + arr[k - 1]) / dt**2
        vel = (arr[k + 1] - arr[k - 1]) / (2.0 * dt)
        rho = build_metric(sphere, base, arr[k]).density
        residual = accel - sphere.vector_field_action(vel)**2 / rho
        worst = max(worst, float(np.abs(residual).max()))
    return worst


def _mean_value(backend, phi, omega, path_steps):
    return integrate(backend, _values(phi)) / backend.volume


_OMEGA_FREE = {
    "i": lambda b, phi, om, ps: aubin_i(b, phi),
    "j": lambda b, phi, om, ps: aubin_j(b, phi, ps),
    "entropy": lambda b, phi, om, ps: entropy(b, phi),
    "k_energy": lambda b, phi, om, ps: k_energy(b, phi, ps),
    "k_energy_modified": lambda b, phi, om, ps: k_energy_modified(b, phi, ps)[1],
    "mean": _mean_value,
}

_OMEGA_BOUND = {
    "j_hat": lambda b, phi, om, ps: j_hat(b, om, phi, ps),
    "j_tilde": lambda b, phi, om, ps: j_tilde(b, om, phi, ps),
    "j_flow": lambda b, phi, om, ps: j_flow(b, om, phi, ps),
}

FUNCTIONAL_IDS = tuple(sorted(_OMEGA_FREE) + sorted(_OMEGA_BOUND))


@dataclass(frozen=True)
class ProbeReport:
    """Functional values along a path and their raw second differences.

    ``second_differences[k]`` belongs to the interior node ``ts[k + 1]``;
    values are not rescaled by the node spacing, matching how the
    convexity thresholds are stated.
    """

    functional_id: str
    ts: np.ndarray
    values: np.ndarray
    second_differences: np.ndarray

    @property
    def min_second_difference(self) -> float:
        return float(self.second_differences.min())

    @property
    def t_at_min(self) -> float:
        return float(self.ts[1 + int(np.argmin(self.second_differences))])


def convexity_probe(backend: GeometryBackend, functional_id: str,
                    path: Sequence, omega=None,
                    path_steps: int = DEFAULT_PATH_STEPS) -> ProbeReport:
    """Evaluate a named functional along a path and report convexity.

    The probe reports raw second differences, negative ones included;
    it never rejects a path for failing to be convex.  ``omega``
    defaults to the base form and must be positive for the functionals
    that pair against it.
    """
    sphere = _require_sphere(backend)
    if len(path) < 3:
        raise GeometryError("a convexity probe needs at least three path nodes")
    if functional_id in _OMEGA_FREE:
        fn = _OMEGA_FREE[functional_id]
        om = omega
    elif functional_id in _OMEGA_BOUND:
        fn = _OMEGA_BOUND[functional_id]
        if omega is None:
            om = sphere.base_form()
        elif isinstance(omega, HermitianFormField):
            om = omega
        else:
            om = sphere.form(np.asarray(omega, dtype=float))
        om.require_kahler(f"{functional_id} probe reference")
    else:
        raise GeometryError(
            f"unknown functional id {functional_id!r}; expected one of "
            f"{', '.join(FUNCTIONAL_IDS)}")
    ts = np.linspace(0.0, 1.0, len(path))
    values = np.array([fn(sphere, _values(p), om, path_steps) for p in path])
    return ProbeReport(functional_id=functional_id, ts=ts, values=values,
                       second_differences=np.diff(values, 2))
