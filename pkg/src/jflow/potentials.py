"""Named potential families and random Kahler potentials.

Families are closed-form expressions evaluated on the backend grid, so
the same name produces consistent functions across resolutions; that is
what makes grid-refinement measurements meaningful.
"""

from __future__ import annotations

import numpy as np

from .fields import GeometryError, Normalization, ScalarField
from .geometry import (GeometryBackend, SphereBackend, TorusBackend,
                       complex_hessian, integrate)


def normalize(backend: GeometryBackend, phi,
              mode: Normalization = Normalization.MEAN_ZERO) -> ScalarField:
    values = backend.check_field(np.asarray(phi, dtype=float), "potential")
    if mode == Normalization.MEAN_ZERO:
        return values - integrate(backend, values) / backend.volume
    if mode == Normalization.SUP_ZERO:
        return values - values.max()
    raise GeometryError(f"unknown normalization {mode!r}")


def kahler_margin(backend: GeometryBackend, phi) -> float:
    """Most negative eigenvalue of the Hessian of phi relative to chi0.

    Values above -1 mean chi0 + hessian(phi) is still positive; the
    margin is what amplitude scaling has to respect.
    """
    hess = complex_hessian(backend, np.asarray(phi, dtype=float))
    base = backend.base_form().matrices
    if hess.shape[-1] == 1:
        return float((hess[..., 0, 0] / base[..., 0, 0]).min())
    rel = np.linalg.eigvalsh(np.linalg.solve(base, hess))
    return float(rel.min())


def scale_to_kahler(backend: GeometryBackend, phi, amplitude: float,
                    margin: float = 0.5) -> ScalarField:
    """amplitude * phi, shrunk if needed so the metric keeps the margin.

    The returned potential has relative Hessian eigenvalues >= -(1 -
    margin), so build_metric never rejects it.  Scaling is by the
    Hessian eigenvalue, not the sup norm: a small oscillatory potential
    can already break positivity.
    """
    values = np.asarray(phi, dtype=float)
    low = kahler_margin(backend, values)
    scale = amplitude
    if low < 0 and amplitude * abs(low) > 1.0 - margin:
        scale = (1.0 - margin) / abs(low)
    return scale * values


def random_kahler_potential(backend: GeometryBackend,
                            rng: np.random.Generator,
                            amplitude: float = 0.5,
                            modes: int = 4,
                            margin: float = 0.5) -> ScalarField:
    """Band-limited random potential, guaranteed Kahler by construction."""
    if isinstance(backend, SphereBackend):
        m = backend.m
        raw = np.zeros_like(m)
        for k in range(1, modes + 1):
            raw += rng.standard_normal() * np.sin(np.pi * k * m)
            raw += rng.standard_normal() * np.cos(np.pi * k * m)
    else:
        raw = np.zeros(backend.grid_shape)
        for axis, coord in enumerate(_torus_coords(backend)):
            for k in range(1, modes + 1):
                raw += rng.standard_normal() * np.sin(2.0 * np.pi * k * coord)
                raw += rng.standard_normal() * np.cos(2.0 * np.pi * k * coord)
    return scale_to_kahler(backend, raw, amplitude, margin)


def _torus_coords(backend: TorusBackend):
    grids = np.meshgrid(*backend.axes, indexing="ij")
    return grids


def _torus_family(backend: TorusBackend, name: str, amplitude: float,
                  wavenumber: int) -> ScalarField:
    coords = _torus_coords(backend)
    x = coords[0]
    if name == "zero":
        return np.zeros(backend.grid_shape)
    if name == "sine":
        return amplitude * np.sin(2.0 * np.pi * wavenumber * x)
    if name == "cosine":
        return amplitude * np.cos(2.0 * np.pi * wavenumber * x)
    if name == "bump":
        # Periodic bump: von Mises profile, mean removed.
        prof = np.exp(np.cos(2.0 * np.pi * x) * wavenumber)
        return amplitude * (prof / prof.mean() - 1.0)
    raise GeometryError(f"unknown torus potential family {name!r}")


def _sphere_family(backend: SphereBackend, name: str, amplitude: float,
                   wavenumber: int) -> ScalarField:
    m = backend.m
    if name == "zero":
        return np.zeros(backend.grid_shape)
    if name == "sine":
        return amplitude * np.sin(np.pi * wavenumber * m)
    if name == "cosine":
        return amplitude * np.cos(np.pi * wavenumber * m)
    if name == "bump":
        return amplitude * np.exp(-((m - 0.5) * 4.0 * wavenumber) ** 2)
    if name == "translation":
        # Pullback of the base metric under the moment translation flow;
        # stays Kahler for any amplitude above -1 of e^a - 1.
        return np.log1p((np.exp(amplitude) - 1.0) * m)
    raise GeometryError(f"unknown sphere potential family {name!r}")


FAMILY_NAMES = ("zero", "sine", "cosine", "bump", "translation", "random")


def named_potential(backend: GeometryBackend, name: str,
                    amplitude: float = 0.1, wavenumber: int = 1,
                    seed: int = 0) -> ScalarField:
    """Evaluate a named closed-form family on the backend grid."""
    if name == "random":
        return random_kahler_potential(
            backend, np.random.default_rng(seed), amplitude)
    if isinstance(backend, SphereBackend):
        return _sphere_family(backend, name, amplitude, wavenumber)
    if isinstance(backend, TorusBackend):
        if name == "translation":
            raise GeometryError(
                "the translation family needs a vector field; "
                "the torus reduction has none")
        return _torus_family(backend, name, amplitude, wavenumber)
    raise GeometryError(f"no potential families for backend {backend.name!r}")


def hessian_offset_potential(backend: GeometryBackend,
                             density_offset: np.ndarray) -> ScalarField:
    """Potential whose complex Hessian reproduces a mean-zero density offset.

    Torus n=1 only: solves 0.25 D^2 psi = offset in Fourier space against
    the discrete second-difference symbol, so the reconstruction is exact
    at grid level, not merely to truncation order.
    """
    if not isinstance(backend, TorusBackend) or backend.n != 1:
        raise GeometryError(
            "exact Hessian-offset construction is a periodic one-dimensional "
            "device; other backends take reference forms as multiples")
    offset = np.asarray(density_offset, dtype=float)
    if offset.shape != backend.grid_shape:
        raise GeometryError(
            f"offset shape {offset.shape} does not match grid "
            f"{backend.grid_shape}")
    size = backend.grid_shape[0]
    mean = offset.mean()
    if abs(mean) > 1e-13 * max(1.0, np.abs(offset).max()):
        raise GeometryError(
            "density offset must have zero mean to be a Hessian; got mean "
            f"{mean:.3e}")
    delta = backend.deltas[0]
    freq = np.fft.rfftfreq(size, d=delta)
    # Symbol of the central second difference: -(2 - 2 cos(2 pi f dx))/dx^2.
    symbol = -(2.0 - 2.0 * np.cos(2.0 * np.pi * freq * delta)) / delta**2
    rhs_hat = np.fft.rfft(offset - mean)
    psi_hat = np.zeros_like(rhs_hat)
    psi_hat[1:] = rhs_hat[1:] / (0.25 * symbol[1:])
    return np.fft.irfft(psi_hat, n=size)
