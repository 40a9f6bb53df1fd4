"""Analytic oracle: geodesics of spheres with constant signal.

For a centered sphere carrying a constant signal, driven by a constant radial
momentum density and a constant functional momentum, the joint flow reduces
to three scalar ODEs on (radius, signal, momentum). The radial coupling
chi(r) is the closed-form spherical self-convolution of a unit Gaussian
deformation kernel of width sigma. This module integrates those ODEs
independently of the mesh pipeline and provides the vertex-momenta
discretization used to cross-validate the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import lumped_vertex_weights
from .fshape import DiscreteFshape


@dataclass(frozen=True)
class SphereState:
    """Radius, constant signal value, radial momentum density, signal momentum."""

    radius: float
    signal: float
    momentum: float
    signal_momentum: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")


def chi(r: float, sigma: float):
    """Spherical self-coupling of a unit Gaussian kernel of width sigma.

    chi(r) is the surface integral over the unit sphere of
    k((2 r^2) (1 - <m, m'>)) <m, m'>, which reduces (Funk-Hecke, with the
    2 pi normalization fixed by the F = 1 case) to the closed form

        chi(r) = 2 pi (sigma^2/r^2) (1 + exp(-2 r^2/sigma^2))
                 * (1 - (sigma^2/r^2) tanh(r^2/sigma^2)),   r > 0.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or sigma <= 0:
        raise ValueError("chi requires r > 0 and sigma > 0")
    z = (r / sigma) ** 2
    out = (2.0 * np.pi / z) * (1.0 + np.exp(-2.0 * z)) * (1.0 - np.tanh(z) / z)
    return out if out.ndim else float(out)


def chi_prime(r: float, sigma: float):
    """Analytic derivative of chi w.r.t. the radius."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or sigma <= 0:
        raise ValueError("chi_prime requires r > 0 and sigma > 0")
    z = (r / sigma) ** 2
    a = 1.0 / z
    b = 1.0 + np.exp(-2.0 * z)
    c = 1.0 - np.tanh(z) / z
    da = -1.0 / z**2
    db = -2.0 * np.exp(-2.0 * z)
    sech2 = 1.0 / np.cosh(z) ** 2
    dc = np.tanh(z) / z**2 - sech2 / z
    dpsi = da * b * c + a * db * c + a * b * dc
    out = 2.0 * np.pi * dpsi * 2.0 * r / sigma**2
    return out if out.ndim else float(out)


def sphere_rhs(
    state: SphereState, gamma_V: float, gamma_f: float, sigma: float
) -> tuple[float, float, float]:
    """Time derivatives (d radius, d signal, d momentum)."""
    r, rho, pf = state.radius, state.momentum, state.signal_momentum
    dr = chi(r, sigma) * rho / gamma_V
    df = pf / (gamma_f * r**2)
    drho = -0.5 * chi_prime(r, sigma) * rho**2 / gamma_V + pf**2 / (gamma_f * r**3)
    return dr, df, drho


def integrate_sphere(
    state0: SphereState,
    gamma_V: float,
    gamma_f: float,
    sigma: float,
    n_steps: int,
) -> list[SphereState]:
    """RK4 path of the sphere ODEs on [0, 1]; signal momentum stays constant.

    Raises RuntimeError if the radius reaches zero during integration.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    if gamma_V <= 0 or gamma_f <= 0 or sigma <= 0:
        raise ValueError("gamma_V, gamma_f and sigma must be positive")
    dt = 1.0 / n_steps
    pf = state0.signal_momentum
    y = np.array([state0.radius, state0.signal, state0.momentum])
    path = [state0]

    def rhs(yv):
        if yv[0] <= 0:
            raise RuntimeError("sphere radius reached zero during integration")
        st = SphereState(yv[0], yv[1], yv[2], pf)
        dr, df, drho = sphere_rhs(st, gamma_V, gamma_f, sigma)
        return np.array([dr, df, drho])

    for _ in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if y[0] <= 0:
            raise RuntimeError("sphere radius reached zero during integration")
        path.append(SphereState(y[0], y[1], y[2], pf))
    return path


def sphere_vertex_momenta(
    fs: DiscreteFshape, momentum: float, signal_momentum: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vertex momenta discretizing the constant sphere momentum densities.

    The continuous densities live on the unit sphere; the lumped vertex areas
    of the mesh (radius r0) divided by r0^2 are their quadrature weights:

        p0[k] = momentum * (area_k / r0^2) * outward_unit_k
        pf[k] = signal_momentum * area_k / r0^2

    For a unit-radius mesh this is the plain lumped-area scaling.
    """
    norms = np.linalg.norm(fs.vertices, axis=1)
    if np.any(norms <= 0):
        raise ValueError("mesh vertices must be away from the origin")
    r0 = float(norms.mean())
    outward = fs.vertices / norms[:, None]
    areas = lumped_vertex_weights(fs)
    p0 = momentum * (areas / r0**2)[:, None] * outward
    pf = signal_momentum * areas / r0**2
    return p0, pf


def mean_radius(vertices: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(vertices, float), axis=1).mean())
