"""
Barenblatt profile of the porous medium equation :math:`u_t = \\Delta(u^2)`
and its exponent match with QOT plan supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .geometry import unit_sphere_area
from .scaling_theory import K_eps_N

__all__ = [
    "BarenblattProfile",
    "FreeBoundaryError",
    "barenblatt_value",
    "constant_from_mass",
    "profile_mass",
    "pme_residual",
    "support_radius",
    "fit_power_law",
    "support_radius_comparison",
]


class FreeBoundaryError(ValueError):
    """Finite-difference stencil touches the edge of the support."""


@dataclass(frozen=True)
class BarenblattProfile:
    """:math:`u(x,t) = \\max\\{0, t^{-d/(2+d)}(c - k\\|x\\|^2 t^{-2/(2+d)})\\}`, ``k = 1/(4(d+2))``.

    ``profile_constant`` is ``c``; use :meth:`from_mass` to build the profile
    carrying a given total mass.
    """

    d: int
    profile_constant: float

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not self.profile_constant > 0:
            raise ValueError("profile constant must be positive")

    @classmethod
    def from_mass(cls, mass, d):
        return cls(d, constant_from_mass(mass, d))

    @property
    def k_coeff(self):
        return 1.0 / (4.0 * (self.d + 2))

    @property
    def mass(self):
        d, c, k = self.d, self.profile_constant, self.k_coeff
        return c ** ((d + 2) / 2.0) * k ** (-d / 2.0) * unit_sphere_area(d - 1) * 2.0 / (d * (d + 2))


def barenblatt_value(profile, x, t):
    """Profile value at points ``x`` (shape ``(..., d)`` or scalar for d=1) and time ``t > 0``."""
    if not t > 0:
        raise ValueError("t must be positive")
    d = profile.d
    x = np.asarray(x, dtype=float)
    r2 = x**2 if (d == 1 and (x.ndim == 0 or x.shape[-1] != 1)) else (x**2).sum(axis=-1)
    inner = profile.profile_constant - profile.k_coeff * r2 * t ** (-2.0 / (2 + d))
    return np.maximum(0.0, t ** (-d / (2.0 + d)) * inner)


def constant_from_mass(mass, d):
    """Invert :math:`m = c^{(d+2)/2} k^{-d/2} |S^{d-1}|\\,2/(d(d+2))` for ``c``."""
    if not mass > 0:
        raise ValueError("mass must be positive")
    k = 1.0 / (4.0 * (d + 2))
    unit = k ** (-d / 2.0) * unit_sphere_area(d - 1) * 2.0 / (d * (d + 2))
    return (mass / unit) ** (2.0 / (d + 2))


def support_radius(profile, t):
    """Radius :math:`\\sqrt{c/k}\\,t^{1/(2+d)}` of the support at time ``t``."""
    return np.sqrt(profile.profile_constant / profile.k_coeff) * t ** (1.0 / (2.0 + profile.d))


def profile_mass(profile, t, tol=1e-10):
    """Mass at time ``t`` by adaptive radial quadrature over the support."""
    d = profile.d
    S = unit_sphere_area(d - 1)
    R = support_radius(profile, t)

    def radial(rho):
        val = barenblatt_value(profile, np.array([rho] + [0.0] * (d - 1)), t)
        return S * rho ** (d - 1) * float(val)

    m, _ = integrate.quad(radial, 0.0, R, epsabs=tol, epsrel=1e-13, limit=200)
    return m


def pme_residual(profile, x, t, h):
    """Central-difference residual :math:`|u_t - \\Delta(u^2)|` at ``(x, t)``.

    Raises
    ------
    FreeBoundaryError
        If the stencil is not strictly inside the support at ``t - h``.
    """
    d = profile.d
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise ValueError(f"x must have {d} coordinates")
    if not t - h > 0:
        raise ValueError("need t > h")
    dist = np.linalg.norm(x)
    if dist - h > support_radius(profile, t + h):
        return 0.0  # the stencil only sees the zero function
    if dist + h >= support_radius(profile, t - h):
        raise FreeBoundaryError("stencil crosses the free boundary")
    u0 = barenblatt_value(profile, x, t)
    ut = (barenblatt_value(profile, x, t + h) - barenblatt_value(profile, x, t - h)) / (2 * h)
    lap = 0.0
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        up = barenblatt_value(profile, x + e, t) ** 2
        dn = barenblatt_value(profile, x - e, t) ** 2
        lap += (up - 2 * u0**2 + dn) / h**2
    return float(abs(ut - lap))


def fit_power_law(x, y):
    """Least-squares slope and intercept of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def support_radius_comparison(profile, constants, eps_grid, N, t_grid):
    """Fitted growth exponents of the PME support and the QOT plan support.

    The PME radius grows like :math:`t^{1/(d+2)}` and the QOT support radius
    :math:`\\sqrt{K_{\\varepsilon,N}}` like :math:`\\varepsilon^{1/(d+2)}`.

    Returns
    -------
    list of tuple
        ``(quantity, exponent_fitted, exponent_expected, abs_error)`` rows.
    """
    d = profile.d
    expected = 1.0 / (d + 2)
    r_pme = [support_radius(profile, t) for t in t_grid]
    r_qot = [np.sqrt(K_eps_N(constants, e, N)) for e in eps_grid]
    s_pme, _ = fit_power_law(t_grid, r_pme)
    s_qot, _ = fit_power_law(eps_grid, r_qot)
    return [
        ("pme_support_radius_vs_t", s_pme, expected, abs(s_pme - expected)),
        ("qot_support_radius_vs_eps", s_qot, expected, abs(s_qot - expected)),
    ]
