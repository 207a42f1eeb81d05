"""Reduced geometries and the discrete operators acting on them.

Two backends are provided.

``TorusBackend`` works on a periodic grid over ``[0, 1)^n``.  Potentials
depend on the real parts of the complex coordinates only, so the complex
Hessian is one quarter of the real Hessian, built from central
differences.  Central differences commute and are exactly self-adjoint
against the uniform cell weights, which makes the discrete cohomology
statements (total Hessian mass zero, symmetry of the induced bilinear
forms) identities rather than approximations.

``SphereBackend`` works on the circle-invariant reduction of the round
sphere.  Fields live on a grid that is uniform in the moment coordinate
``m = e^s / (1 + e^s)``; metric coefficients are stored in the invariant
coframe ``dz / z``, where the reference density is ``m (1 - m)``.  The
complex Hessian is discretized in flux form with zero boundary flux, so
summing it against the quadrature weights telescopes to exactly zero and
the operator is exactly self-adjoint.  Both properties are load-bearing
for the energy bookkeeping downstream.
"""

from __future__ import annotations

import numpy as np

from .fields import (
    DEFAULT_POSITIVITY_FLOOR,
    GeometryError,
    HermitianFormField,
    ScalarField,
    ShapeMismatchError,
    UnsupportedBackend,
)


def _roll_central(values: np.ndarray, axis: int, delta: float) -> np.ndarray:
    return (np.roll(values, -1, axis) - np.roll(values, 1, axis)) / (2.0 * delta)


def _roll_second(values: np.ndarray, axis: int, delta: float) -> np.ndarray:
    return (np.roll(values, -1, axis) - 2.0 * values
            + np.roll(values, 1, axis)) / delta**2


class GeometryBackend:
    """Common interface; concrete backends fill in the chart-level ops."""

    name: str
    n: int
    grid_shape: tuple[int, ...]
    spacing: float
    weights: np.ndarray | float
    has_vector_field: bool
    tail_bound: float

    def base_form(self) -> HermitianFormField:
        raise NotImplementedError

    def complex_hessian(self, phi: ScalarField) -> np.ndarray:
        raise NotImplementedError

    def theta_base(self) -> ScalarField:
        raise NotImplementedError

    def vector_field_action(self, phi: ScalarField) -> ScalarField:
        raise NotImplementedError

    def ricci_form(self, chi: HermitianFormField) -> np.ndarray:
        raise NotImplementedError

    def dissipation_integrand(self, sigma: ScalarField, chi: HermitianFormField,
                              omega: HermitianFormField) -> ScalarField:
        raise NotImplementedError

    def cfl_coefficient(self, chi: HermitianFormField,
                        omega: HermitianFormField) -> float:
        raise NotImplementedError

    def check_field(self, values: np.ndarray, label: str = "field") -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != self.grid_shape:
            raise ShapeMismatchError(
                f"{label} has shape {values.shape}, expected {self.grid_shape}")
        return values

    def form(self, matrices: np.ndarray,
             floor: float = DEFAULT_POSITIVITY_FLOOR) -> HermitianFormField:
        field = HermitianFormField.from_matrices(matrices, floor=floor)
        if field.grid_shape != self.grid_shape or field.n != self.n:
            raise ShapeMismatchError(
                f"form has shape {field.matrices.shape}, expected "
                f"{self.grid_shape + (self.n, self.n)}")
        return field

    def volume_density(self, chi: HermitianFormField | None = None) -> np.ndarray:
        chi = self.base_form() if chi is None else chi
        return chi.det() * self.weights


class TorusBackend(GeometryBackend):
    """Flat periodic geometry on ``[0, 1)^n``.

    The background form is a constant positive matrix ``base_matrix``
    (identity by default).  The first Chern class vanishes, there is no
    symmetry vector field, and the moment function is identically zero.
    """

    name = "torus"
    has_vector_field = False
    tail_bound = 0.0

    def __init__(self, shape: tuple[int, ...] | int,
                 base_matrix: np.ndarray | None = None):
        if isinstance(shape, int):
            shape = (shape,)
        shape = tuple(int(k) for k in shape)
        if any(k < 8 for k in shape):
            raise GeometryError(f"torus grid too coarse: {shape}")
        self.grid_shape = shape
        self.n = len(shape)
        self.deltas = tuple(1.0 / k for k in shape)
        self.spacing = max(self.deltas)
        self.weights = float(np.prod(self.deltas))
        self.axes = [np.arange(k) / k for k in shape]
        if base_matrix is None:
            base_matrix = np.eye(self.n)
        base_matrix = np.asarray(base_matrix, dtype=float)
        if base_matrix.shape != (self.n, self.n):
            raise ShapeMismatchError(
                f"base matrix has shape {base_matrix.shape}, "
                f"expected {(self.n, self.n)}")
        base_matrix = 0.5 * (base_matrix + base_matrix.T)
        if np.linalg.eigvalsh(base_matrix)[0] <= 0:
            raise GeometryError("base matrix must be positive definite")
        self.base_matrix = base_matrix
        self._base_det = float(np.linalg.det(base_matrix))
        # total reference volume: the cell is the unit cube
        self.volume = self._base_det
        self._base = HermitianFormField.from_matrices(
            np.broadcast_to(base_matrix, shape + (self.n, self.n)).copy())

    def coords(self) -> list[np.ndarray]:
        return list(np.meshgrid(*self.axes, indexing="ij"))

    def base_form(self) -> HermitianFormField:
        return self._base

    def complex_hessian(self, phi: ScalarField) -> np.ndarray:
        phi = self.check_field(phi, "potential")
        hess = np.empty(self.grid_shape + (self.n, self.n))
        for k in range(self.n):
            hess[..., k, k] = _roll_second(phi, k, self.deltas[k])
            for l in range(k + 1, self.n):
                mixed = _roll_central(
                    _roll_central(phi, k, self.deltas[k]), l, self.deltas[l])
                hess[..., k, l] = mixed
                hess[..., l, k] = mixed
        return 0.25 * hess

    def theta_base(self) -> ScalarField:
        return np.zeros(self.grid_shape)

    def vector_field_action(self, phi: ScalarField) -> ScalarField:
        self.check_field(phi, "potential")
        return np.zeros(self.grid_shape)

    def gradient(self, phi: ScalarField) -> np.ndarray:
        phi = self.check_field(phi, "potential")
        grad = np.empty(self.grid_shape + (self.n,))
        for k in range(self.n):
            grad[..., k] = _roll_central(phi, k, self.deltas[k])
        return grad

    def ricci_form(self, chi: HermitianFormField) -> np.ndarray:
        chi.require_kahler("ricci form")
        log_ratio = np.log(chi.det() / self._base_det)
        return -self.complex_hessian(log_ratio)

    def dissipation_integrand(self, sigma, chi, omega) -> ScalarField:
        grad = self.gradient(sigma)
        if self.n == 1:
            g = grad[..., 0]
            return 0.25 * g * g * omega.density / chi.density**2
        v = np.linalg.solve(chi.matrices, grad[..., None])[..., 0]
        return 0.25 * np.einsum("...i,...ij,...j->...", v, omega.matrices, v)

    def cfl_coefficient(self, chi, omega) -> float:
        if self.n == 1:
            coeff = 0.25 * omega.density / chi.density**2
            return float(coeff.max())
        inv = np.linalg.inv(chi.matrices)
        sandwich = inv @ omega.matrices @ inv
        coeff = np.einsum("...ii->...", sandwich) / (4.0 * self.n)
        return float(coeff.max())


class SphereBackend(GeometryBackend):
    """Circle-invariant reduction of the round sphere, total area ``pi``.

    ``s = log |z|^2`` on the open chart, ``m = e^s / (1 + e^s)`` the
    moment coordinate with range ``(0, 1)``.  Grid nodes are uniform in
    ``m`` and symmetric about ``1/2``; truncation keeps ``m`` in
    ``[m_lo, 1 - m_lo]`` where ``m_lo`` is set by ``s_max``, never
    finer than half a cell.  ``tail_bound`` is the reference mass of the
    two excluded polar caps.

    Metric coefficients are stored in the coframe ``dz / z``: the round
    background is ``rho0 = m (1 - m)``.  The symmetry generator acts as
    ``d/ds = m (1 - m) d/dm``.
    """

    name = "sphere"
    n = 1
    has_vector_field = True

    def __init__(self, size: int, s_max: float = 12.0):
        size = int(size)
        if size < 16:
            raise GeometryError(f"sphere grid too coarse: {size}")
        if s_max <= 1.0:
            raise GeometryError("s_max must exceed 1")
        self.size = size
        self.s_max = float(s_max)
        m_lo = max(0.5 / size, 1.0 / (1.0 + np.exp(self.s_max)))
        self.m_lo = float(m_lo)
        self.delta = (1.0 - 2.0 * self.m_lo) / (size - 1)
        self.m = self.m_lo + self.delta * np.arange(size)
        self.grid_shape = (size,)
        self.spacing = self.delta
        self.mprime = self.m * (1.0 - self.m)
        self.rho0 = self.mprime
        m_half = self.m[:-1] + 0.5 * self.delta
        self.mprime_half = m_half * (1.0 - m_half)
        self.weights = np.pi * self.delta / self.mprime
        self.s = np.log(self.m / (1.0 - self.m))
        self.f0 = -np.log(1.0 - self.m)
        self.tail_bound = 2.0 * np.pi * self.m_lo
        self.volume = np.pi * self.delta * size
        mbar = float(np.mean(self.m))
        self._theta0 = self.m - mbar
        self._base = HermitianFormField.from_matrices(self.rho0[:, None, None])

    def base_form(self) -> HermitianFormField:
        return self._base

    def moment_derivative(self, phi: ScalarField) -> ScalarField:
        """d(phi)/dm: central inside, one-sided three-point at the ends."""
        phi = self.check_field(phi, "potential")
        out = np.empty_like(phi)
        out[1:-1] = (phi[2:] - phi[:-2]) / (2.0 * self.delta)
        out[0] = (-3.0 * phi[0] + 4.0 * phi[1] - phi[2]) / (2.0 * self.delta)
        out[-1] = (3.0 * phi[-1] - 4.0 * phi[-2] + phi[-3]) / (2.0 * self.delta)
        return out

    def complex_hessian(self, phi: ScalarField) -> np.ndarray:
        phi = self.check_field(phi, "potential")
        flux = self.mprime_half * np.diff(phi) / self.delta
        div = np.empty_like(phi)
        div[0] = flux[0]
        div[1:-1] = flux[1:] - flux[:-1]
        div[-1] = -flux[-1]
        return (self.mprime * div / self.delta)[:, None, None]

    def theta_base(self) -> ScalarField:
        return self._theta0.copy()

    def vector_field_action(self, phi: ScalarField) -> ScalarField:
        return self.mprime * self.moment_derivative(phi)

    def ricci_form(self, chi: HermitianFormField) -> np.ndarray:
        # Curvature of the background is known in closed form, so only the
        # relative density log(rho / rho0) passes through the Hessian; it
        # is smooth up to the truncation boundary where the flux vanishes.
        chi.require_kahler("ricci form")
        log_ratio = np.log(chi.density / self.rho0)
        ric = 2.0 * self.rho0 - self.complex_hessian(log_ratio)[:, 0, 0]
        return ric[:, None, None]

    def dissipation_integrand(self, sigma, chi, omega) -> ScalarField:
        ds = self.vector_field_action(sigma)
        return ds * ds * omega.density / chi.density**2

    def cfl_coefficient(self, chi, omega) -> float:
        coeff = omega.density * self.mprime**2 / chi.density**2
        return float(coeff.max())


def complex_hessian(backend: GeometryBackend, phi: ScalarField) -> np.ndarray:
    return backend.complex_hessian(phi)


def build_metric(backend: GeometryBackend, base: HermitianFormField,
                 phi: ScalarField,
                 floor: float = DEFAULT_POSITIVITY_FLOOR) -> HermitianFormField:
    """The deformed form ``base + complex_hessian(phi)``, positivity-checked."""
    if base.grid_shape != backend.grid_shape or base.n != backend.n:
        raise ShapeMismatchError("base form does not match backend grid")
    matrices = base.matrices + backend.complex_hessian(phi)
    return HermitianFormField.from_matrices(matrices, floor=floor)


def trace_with(chi: HermitianFormField,
               omega: HermitianFormField | np.ndarray) -> ScalarField:
    """Pointwise trace of ``omega`` against ``chi``: tr(chi^{-1} omega)."""
    mats = omega.matrices if isinstance(omega, HermitianFormField) else np.asarray(omega)
    chi.require_kahler("trace")
    if mats.shape != chi.matrices.shape:
        raise ShapeMismatchError(
            f"cannot trace shape {mats.shape} against {chi.matrices.shape}")
    if chi.n == 1:
        return mats[..., 0, 0] / chi.matrices[..., 0, 0]
    solved = np.linalg.solve(chi.matrices, mats)
    return np.einsum("...ii->...", solved)


def theta_of(backend: GeometryBackend, phi: ScalarField) -> ScalarField:
    """Moment function along the deformation: theta0 + X(phi)."""
    return backend.theta_base() + backend.vector_field_action(phi)


def ricci_form(backend: GeometryBackend, chi: HermitianFormField) -> np.ndarray:
    return backend.ricci_form(chi)


def integrate(backend: GeometryBackend, values: ScalarField,
              chi: HermitianFormField | None = None) -> float:
    """Integral of ``values`` against the volume of ``chi`` (base if omitted)."""
    values = backend.check_field(values, "integrand")
    return float(np.sum(values * backend.volume_density(chi)))


def volume(backend: GeometryBackend, chi: HermitianFormField | None = None) -> float:
    return float(np.sum(backend.volume_density(chi)))


def mixed_volume_density(chi: HermitianFormField,
                         form: HermitianFormField | np.ndarray) -> np.ndarray:
    """Density of ``form ^ chi^{n-1} / (n-1)!``: tr(chi^{-1} form) det(chi)."""
    return trace_with(chi, form) * chi.det()


def make_backend(kind: str, **params) -> GeometryBackend:
    kind = kind.strip().lower()
    if kind == "torus":
        dim = int(params.pop("dim", 1))
        size = params.pop("size", 256)
        base_matrix = params.pop("base_matrix", None)
        if params:
            raise GeometryError(f"unknown torus parameters: {sorted(params)}")
        if isinstance(size, int):
            shape = (size,) * dim
        else:
            shape = tuple(size)
            if len(shape) != dim:
                raise GeometryError(
                    f"size {shape} does not match dim {dim}")
        return TorusBackend(shape, base_matrix=base_matrix)
    if kind == "sphere":
        size = int(params.pop("size", 256))
        s_max = float(params.pop("s_max", 12.0))
        if params:
            raise GeometryError(f"unknown sphere parameters: {sorted(params)}")
        return SphereBackend(size, s_max=s_max)
    raise UnsupportedBackend(f"unknown geometry kind: {kind!r}")
