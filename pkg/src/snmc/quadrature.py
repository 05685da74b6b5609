"""Product angular quadrature on the unit sphere for z-symmetric transport.

The set combines N Gauss-Legendre polar cosines mu in (0, 1) with N equally
spaced azimuths, placed on the upper hemisphere; weights are doubled so that
hemisphere sums represent full-sphere integrals of z-symmetric integrands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FOUR_PI = 4.0 * np.pi

# |Omega_x| or |Omega_y| below this is treated as axis-aligned (breaks sweeps).
AXIS_TOL = 1e-12


@dataclass(frozen=True)
class QuadratureSet:
    """Ordinates and weights; ordinate q = j*n_polar + l pairs polar node j with azimuth l."""

    n_polar: int
    omega: np.ndarray  # (n_ordinates, 3) unit vectors, all with Omega_z > 0
    weight: np.ndarray  # (n_ordinates,), sums to 4*pi

    @property
    def n_ordinates(self) -> int:
        return self.omega.shape[0]


def product_quadrature(n: int) -> QuadratureSet:
    """Level-n product set with n^2 upper-hemisphere ordinates.

    Azimuths sit at 2*pi*(l + 1/2)/n, so no ordinate is axis-aligned when n is
    a multiple of 4.
    """
    if n < 1:
        raise ValueError(f"quadrature level must be >= 1, got {n}")
    nodes, gl_weights = np.polynomial.legendre.leggauss(n)
    mu = 0.5 * (nodes + 1.0)  # polar cosines Omega_z, ascending in (0, 1)
    v = 0.5 * gl_weights  # sum to 1
    phi = 2.0 * np.pi * (np.arange(n) + 0.5) / n

    mu_q = np.repeat(mu, n)
    v_q = np.repeat(v, n)
    phi_q = np.tile(phi, n)
    sin_theta = np.sqrt(1.0 - mu_q * mu_q)
    omega = np.column_stack(
        [sin_theta * np.cos(phi_q), sin_theta * np.sin(phi_q), mu_q]
    )
    weight = 2.0 * (2.0 * np.pi / n) * v_q
    return QuadratureSet(n_polar=n, omega=omega, weight=weight)


def angular_average(quad: QuadratureSet, values: np.ndarray) -> np.ndarray:
    """(1/4pi) * sum_q w_q * values_q along the leading (ordinate) axis."""
    return np.tensordot(quad.weight, values, axes=(0, 0)) / FOUR_PI


def has_axis_aligned(quad: QuadratureSet) -> bool:
    planar = np.abs(quad.omega[:, :2])
    return bool(np.any(planar < AXIS_TOL))
