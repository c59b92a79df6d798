"""
Closed-form scaling of QOT potentials and the asymptotic moment expansions
behind them.

Distances are plain squared Euclidean distances throughout this module
(cost scale ``gamma = 1``); see :func:`qotlap.qot_solver.potential_hint`
for the conversion to other cost scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, stats
from scipy.special import gammaln

from .geometry import Sphere, Torus, align_frame, make_rng, unit_sphere_area

__all__ = [
    "ScalingConstants",
    "EpsilonWindow",
    "ExpansionTerms",
    "CircleThreshold",
    "continuous_exponent",
    "K_eps_N",
    "admissible_epsilon_window",
    "order_statistic_moment",
    "order_statistic_partial_sum",
    "order_statistic_monte_carlo",
    "circle_threshold",
    "circle_closed_form",
    "constraint_expansion",
    "constraint_statistic",
    "ball_moment_expansion",
    "local_covariance_leading",
    "fourth_moment_leading",
    "sphere_moment_constant",
    "sphere_moment_quadrature",
    "sample_local",
    "mc_ball_moment",
    "mc_local_covariance",
    "mc_fourth_moment",
    "bandwidth_equivalent",
    "spectral_epsilon_schedule",
]


class CapViolation(ValueError):
    """Radius too large for the small-ball expansions to be meaningful."""


@dataclass(frozen=True)
class ScalingConstants:
    """Geometry constants of a uniformly sampled d-manifold.

    Parameters
    ----------
    d : int
        Intrinsic dimension.
    vol : float
        Riemannian volume of the manifold.
    sphere_area : float
        :math:`|S^{d-1}|`.
    """

    d: int
    vol: float
    sphere_area: float

    @classmethod
    def from_manifold(cls, manifold):
        return cls(manifold.intrinsic_dim, manifold.volume, manifold.sphere_area)

    @property
    def kappa_d(self):
        return (self.vol * self.d / self.sphere_area) ** (2.0 / self.d)

    @property
    def C_d(self):
        """Constant making the leading constraint term exactly one."""
        d = self.d
        return (self.vol / self.sphere_area * d * (d + 2) / 2.0) ** (2.0 / (d + 2))

    @property
    def C_d_kappa_form(self):
        """:math:`(2\\kappa_d/(d+2))^{2/(d+2)}`, kept for comparison only.

        It differs from :attr:`C_d`; only :attr:`C_d` balances the
        constraints and reproduces the equispaced-circle threshold.
        """
        return (2.0 * self.kappa_d / (self.d + 2)) ** (2.0 / (self.d + 2))

    @property
    def alpha(self):
        return continuous_exponent(self.d)

    def K(self, eps, N):
        return K_eps_N(self, eps, N)


def continuous_exponent(d):
    """Exponent ``2 / (2 + d)`` of the potential in the regularisation."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return 2.0 / (2.0 + d)


def K_eps_N(constants, eps, N):
    """First-order value of :math:`u_i + u_j`: ``C_d eps^(2/(d+2)) N^(-4/(d+2))``."""
    eps = np.asarray(eps, dtype=float)
    N = np.asarray(N, dtype=float)
    if np.any(eps <= 0) or np.any(N <= 0):
        raise ValueError("eps and N must be positive")
    d = constants.d
    out = constants.C_d * eps ** (2.0 / (d + 2)) * N ** (-4.0 / (d + 2))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EpsilonWindow:
    """Open interval ``N^(1-2/d) < eps < N^2``."""

    lower: float
    upper: float

    def __iter__(self):
        return iter((self.lower, self.upper))

    def is_admissible(self, eps):
        return bool(self.lower < eps < self.upper)

    __contains__ = is_admissible


def admissible_epsilon_window(d, N):
    if d < 1 or N < 2:
        raise ValueError("need d >= 1 and N >= 2")
    return EpsilonWindow(float(N) ** (1.0 - 2.0 / d), float(N) ** 2)


def order_statistic_moment(j, N, d):
    """:math:`E[U_{(j:N)}^{2/d}]` for uniform order statistics.

    Evaluated as a log-Gamma ratio,
    :math:`\\Gamma(2/d + j)\\Gamma(N+1) / (\\Gamma(2/d + N + 1)\\Gamma(j))`.
    """
    j = np.asarray(j)
    if np.any(j < 1) or np.any(j > N):
        raise ValueError("need 1 <= j <= N")
    a = 2.0 / d
    logm = gammaln(a + j) + gammaln(N + 1.0) - gammaln(a + N + 1.0) - gammaln(j)
    out = np.exp(logm)
    return float(out) if out.ndim == 0 else out


class PartialSum(NamedTuple):
    exact: float
    leading: float


def order_statistic_partial_sum(k, N, d):
    """Sum of the first ``k`` moments and its leading-order approximation.

    The approximation is :math:`(N+1)^{-2/d} \\tfrac{d}{d+2} k^{(d+2)/d}`.
    """
    if not 1 <= k <= N:
        raise ValueError("need 1 <= k <= N")
    exact = float(np.sum(order_statistic_moment(np.arange(1, k + 1), N, d)))
    leading = (N + 1.0) ** (-2.0 / d) * d / (d + 2.0) * k ** ((d + 2.0) / d)
    return PartialSum(exact, leading)


def order_statistic_monte_carlo(N, d, jmax, reps, seed, chunk=100_000):
    """Monte Carlo means and standard errors of :math:`U_{(j:N)}^{2/d}`, j <= jmax.

    Returns
    -------
    mean, se : ndarray, shape (jmax,)
    """
    rng = make_rng(seed)
    s1 = np.zeros(jmax)
    s2 = np.zeros(jmax)
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        U = rng.random((m, N))
        U = np.partition(U, jmax - 1, axis=1)[:, :jmax]
        U.sort(axis=1)
        V = U ** (2.0 / d)
        s1 += V.sum(axis=0)
        s2 += (V**2).sum(axis=0)
        done += m
    mean = s1 / reps
    var = (s2 / reps - mean**2) * reps / (reps - 1)
    return mean, np.sqrt(var / reps)


class CircleThreshold(NamedTuple):
    k_exact: int
    y_exact: float
    k_closed: float
    y_closed: float
    n_active: int


def circle_closed_form(N, eps):
    """Approximate neighbour count and threshold for N equispaced points."""
    k = (3.0 * eps * N / (16.0 * np.pi**2)) ** (1.0 / 3.0)
    return k, 4.0 * np.pi**2 / N**2 * k**2


def circle_threshold(N, eps):
    """Solve :math:`\\sum_j (y - D_j)_+ = \\varepsilon/N` on N equispaced points.

    ``D_j`` runs over the squared distances from one point to all ``N``
    points (itself included). The root is found by a scan over the sorted
    breakpoints. ``k_exact`` is the number of active neighbours on each
    side.

    Raises
    ------
    ValueError
        If the threshold reaches the squared diameter 4.
    """
    if N < 2 or eps <= 0:
        raise ValueError("need N >= 2 and eps > 0")
    j = np.arange(N)
    D = np.sort((2.0 * np.sin(np.pi * j / N)) ** 2)
    target = eps / N
    csum = np.cumsum(D)
    # with m active entries: m*y - csum[m-1] = target, valid if D[m-1] <= y <= D[m]
    m = np.arange(1, N + 1)
    y = (target + csum) / m
    upper = np.append(D[1:], np.inf)
    ok = np.flatnonzero((y >= D) & (y <= upper))
    if ok.size == 0:
        raise ValueError("no threshold found")
    i = ok[0]
    y_exact = float(y[i])
    if y_exact >= 4.0:
        raise ValueError("threshold exceeds the squared circle diameter")
    n_active = int(np.count_nonzero(D < y_exact))
    k_closed, y_closed = circle_closed_form(N, eps)
    return CircleThreshold((n_active - 1) // 2, y_exact, float(k_closed), float(y_closed), n_active)


@dataclass(frozen=True)
class ExpansionTerms:
    """Grouped terms of :math:`E[\\tfrac{N+1}{\\varepsilon}\\sum_{j=0}^N (K - \\|X_j - x_0\\|^2)_+]`.

    ``leading`` is normalised with :math:`N^2` so it is exactly one at
    :math:`K = K_{\\varepsilon,N}`; the finite-sample factor ``(N+1)/N`` is
    applied in :attr:`total`. ``remainder_order`` is the magnitude
    :math:`N(N+1)\\varepsilon^{-1}K^{2+d/2}` of the neglected terms.
    """

    self_term: float
    leading: float
    finite_sample_factor: float
    curvature_correction: float
    remainder_order: float

    @property
    def total(self):
        return self.self_term + self.finite_sample_factor * self.leading + self.curvature_correction

    def rows(self):
        return [
            ("self_term", self.self_term, "O(N/(eps) K)"),
            ("leading", self.leading, "O(1)"),
            ("finite_sample_factor", self.finite_sample_factor, "1+O(1/N)"),
            ("curvature_correction", self.curvature_correction, "O(K)"),
            ("remainder_order", self.remainder_order, "O(K^2)"),
        ]


def _cap(manifold, radius, check_cap):
    if check_cap and radius > 0.5 * manifold.min_curvature_radius:
        raise CapViolation(
            f"radius {radius:.4g} exceeds half the minimal curvature radius "
            f"({manifold.min_curvature_radius:.4g})"
        )


def constraint_expansion(constants, curvature, K, eps, N, manifold=None, check_cap=True):
    """Plug-in expansion of the constraint at a constant potential sum ``K``.

    Parameters
    ----------
    constants : ScalingConstants
    curvature : CurvatureData
        Curvature at the base point (scalar curvature and omega are used).
    K, eps, N : float
    manifold : optional
        Used only for the radius cap ``sqrt(K) <= 0.5 * min curvature radius``.

    Notes
    -----
    The scalar curvature enters with a minus sign, as in the volume of small
    geodesic balls. With that sign the second-order terms cancel exactly on
    round spheres, where the ambient-ball measure is a pure power law.
    """
    if manifold is not None:
        _cap(manifold, math.sqrt(K), check_cap)
    d = constants.d
    S, vol = constants.sphere_area, constants.vol
    base = K ** (1.0 + d / 2.0) / eps
    leading = N**2 * base * S / vol * (1.0 / d - 1.0 / (d + 2))
    bracket = -curvature.scalar_curvature * K / 6.0 + d * (d + 2) * curvature.omega * K / 24.0
    correction = N * (N + 1.0) * base * S / (d * (d + 2) * vol) * bracket
    return ExpansionTerms(
        self_term=(N + 1.0) * K / eps,
        leading=leading,
        finite_sample_factor=(N + 1.0) / N,
        curvature_correction=correction,
        remainder_order=N * (N + 1.0) / eps * K ** (2.0 + d / 2.0),
    )


def constraint_statistic(cloud, K, eps, base_index=0):
    """Empirical :math:`\\tfrac{n}{\\varepsilon}\\sum_j (K - \\|X_j - X_0\\|^2)_+` for an n-point cloud."""
    X = cloud.points
    x0 = X[base_index]
    D = ((X - x0) ** 2).sum(axis=1)
    return X.shape[0] / eps * float(np.clip(K - D, 0.0, None).sum())


def ball_moment_expansion(manifold, x0, f, r, order=2, check_cap=True):
    """Small-ball expansion of :math:`E[f(X)\\,1\\{\\|X - x_0\\| \\le r\\}]`.

    ``order=0`` returns the leading term
    :math:`|S^{d-1}| f(x_0) r^d / (d\\,\\mathrm{vol})`; ``order=2`` adds the
    :math:`r^{d+2}` term with :math:`\\Delta f`, scalar curvature and
    :math:`\\omega`. ``f`` is a :class:`~qotlap.geometry.ScalarField`.
    """
    _cap(manifold, r, check_cap)
    x0 = manifold.check_on_manifold(x0)
    d, vol, S = manifold.intrinsic_dim, manifold.volume, manifold.sphere_area
    f0 = float(f.value(x0))
    lead = S / (d * vol) * f0 * r**d
    if order == 0:
        return lead
    lap = manifold.laplace_beltrami(f, x0)
    s = manifold.scalar_curvature(x0)
    om = manifold.omega(x0)
    second = S / (d * (d + 2)) * (lap / (2 * vol) - s * f0 / (6 * vol) + d * (d + 2) * om * f0 / (24 * vol))
    return lead + second * r ** (d + 2)


def local_covariance_leading(manifold, x0, f, r, check_cap=True):
    """Leading term of :math:`E[f(X)(X-x_0)(X-x_0)^\\top 1_{B_r}]` in the aligned frame."""
    _cap(manifold, r, check_cap)
    x0 = manifold.check_on_manifold(x0)
    d, p = manifold.intrinsic_dim, manifold.ambient_dim
    c = manifold.sphere_area / (d * (d + 2) * manifold.volume) * float(f.value(x0)) * r ** (d + 2)
    P = np.zeros((p, p))
    P[:d, :d] = np.eye(d)
    return c * P


def sphere_moment_constant(d, k, l, m, n):
    """:math:`\\int_{S^{d-1}} \\theta_k\\theta_l\\theta_m\\theta_n\\,d\\theta` (0-based indices).

    Indices ``>= d`` refer to normal directions and give zero.
    """
    idx = (k, l, m, n)
    if any(i < 0 for i in idx):
        raise ValueError("indices must be nonnegative")
    if any(i >= d for i in idx):
        return 0.0
    delta = lambda a, b: 1.0 if a == b else 0.0
    pairs = delta(k, l) * delta(m, n) + delta(k, m) * delta(l, n) + delta(k, n) * delta(l, m)
    return unit_sphere_area(d - 1) * pairs / (d * (d + 2))


def sphere_moment_quadrature(d, k, l, m, n):
    """Quadrature route to :func:`sphere_moment_constant`, ``d <= 3``."""
    idx = (k, l, m, n)
    if any(i >= d for i in idx):
        return 0.0
    if d == 1:
        return 2.0  # theta = +-1
    if d == 2:
        def g(t):
            th = (math.cos(t), math.sin(t))
            return th[k] * th[l] * th[m] * th[n]

        val, _ = integrate.quad(g, 0.0, 2 * np.pi, epsabs=1e-13, epsrel=1e-13, limit=200)
        return val
    if d == 3:
        def g(phi, t):
            th = (math.sin(t) * math.cos(phi), math.sin(t) * math.sin(phi), math.cos(t))
            return th[k] * th[l] * th[m] * th[n] * math.sin(t)

        val, _ = integrate.dblquad(g, 0.0, np.pi, 0.0, 2 * np.pi, epsabs=1e-13, epsrel=1e-13)
        return val
    raise ValueError("quadrature cross-check implemented for d <= 3")


def fourth_moment_leading(manifold, x0, f, r, k, l, m, n, check_cap=True):
    """Leading term :math:`f(x_0) r^{d+4} C_{klmn} / ((d+4)\\mathrm{vol})`, aligned frame, 0-based."""
    _cap(manifold, r, check_cap)
    x0 = manifold.check_on_manifold(x0)
    d = manifold.intrinsic_dim
    C = sphere_moment_constant(d, k, l, m, n)
    return float(f.value(x0)) * r ** (d + 4) * C / ((d + 4) * manifold.volume)


def sample_local(manifold, x0, r, n, rng, antithetic=True):
    """Uniform samples on :math:`M \\cap B_r(x_0)` and the measure of that set.

    On spheres the ambient ball cuts out a geodesic cap, which is sampled
    exactly (the polar coordinate has a truncated Beta law). Other
    manifolds fall back to plain uniform sampling of the whole manifold, in
    which case the returned weight is ``1`` and callers must apply the
    indicator themselves.

    Returns
    -------
    points : ndarray, shape (n, p)
    measure : float
        Probability of the ball under the uniform law (1 for the fallback).
    exact_cap : bool
    """
    x0 = np.asarray(x0, dtype=float)
    if isinstance(manifold, Sphere):
        rho = manifold.radius
        d = manifold.d
        c = 1.0 - r**2 / (2.0 * rho**2)
        if c > 0.0:
            half = n // 2 if antithetic else n
            beta = stats.beta(0.5, d / 2.0)
            tail = beta.sf(c * c)
            w = beta.isf(rng.random(half) * tail)
            z = np.sqrt(w)
            T = manifold.principal_directions(x0)
            g = rng.standard_normal((half, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            e = x0 / rho
            side = np.sqrt(np.clip(1.0 - z * z, 0.0, None))[:, None]
            pts = rho * (z[:, None] * e + side * (g @ T))
            if antithetic:
                pts_b = rho * (z[:, None] * e - side * (g @ T))
                pts = np.vstack([pts, pts_b])
            return pts, 0.5 * tail, True
    if isinstance(manifold, Torus):
        from .geometry import torus_rejection_angles

        u, v, _ = torus_rejection_angles(manifold.R, manifold.r, n, rng)
        return manifold.embed(u, v), 1.0, False
    if isinstance(manifold, Sphere):
        g = rng.standard_normal((n, manifold.p))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return manifold.radius * g, 1.0, False
    raise TypeError(f"unsupported manifold kind: {type(manifold).__name__}")


def _mc(manifold, x0, r, n, seed, integrand):
    rng = make_rng(seed)
    x0 = np.asarray(x0, dtype=float)
    pts, measure, exact = sample_local(manifold, x0, r, n, rng)
    vals = integrand(pts)
    if not exact:
        inside = ((pts - x0) ** 2).sum(axis=1) <= r * r
        vals = vals * inside.reshape((-1,) + (1,) * (vals.ndim - 1))
    m = pts.shape[0]
    if exact and m % 2 == 0:
        # antithetic pairs are averaged before estimating the variance
        half = m // 2
        vals = 0.5 * (vals[:half] + vals[half:])
        m = half
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(m)
    return measure * mean, measure * se


def mc_ball_moment(manifold, x0, f, r, n, seed):
    """Monte Carlo estimate and standard error of :math:`E[f(X) 1_{B_r(x_0)}]`."""
    return _mc(manifold, x0, r, n, seed, lambda P: np.asarray(f.value(P), dtype=float))


def mc_local_covariance(manifold, x0, f, r, n, seed):
    """Monte Carlo :math:`E[f(X)(X-x_0)(X-x_0)^\\top 1_{B_r}]` in the aligned frame."""
    A = align_frame(manifold, x0)

    def integrand(P):
        Y = A.apply(P)
        return np.asarray(f.value(P), dtype=float)[:, None, None] * Y[:, :, None] * Y[:, None, :]

    return _mc(manifold, x0, r, n, seed, integrand)


def mc_fourth_moment(manifold, x0, f, r, k, l, m, n_idx, n, seed):
    """Monte Carlo fourth moment in the aligned frame (0-based indices)."""
    A = align_frame(manifold, x0)

    def integrand(P):
        Y = A.apply(P)
        return np.asarray(f.value(P), dtype=float) * Y[:, k] * Y[:, l] * Y[:, m] * Y[:, n_idx]

    return _mc(manifold, x0, r, n, seed, integrand)


def bandwidth_equivalent(eps, N, d):
    """Epanechnikov bandwidth :math:`h = (\\varepsilon N^{-2})^{1/(2+d)}` of the QOT kernel."""
    if eps <= 0 or N <= 0:
        raise ValueError("eps and N must be positive")
    return (eps / float(N) ** 2) ** (1.0 / (2.0 + d))


def spectral_epsilon_schedule(N, d):
    """Regularisation schedule for spectral convergence, intrinsic dimension ``d >= 2``.

    :math:`\\varepsilon = N^{(3d+2)/(2d(d+2))} (\\log N)^{p_d (d+2)/2}` with
    ``p_d = 3/4`` for ``d = 2`` and ``1/d`` otherwise.
    """
    if d < 2:
        raise ValueError("the schedule requires intrinsic dimension d >= 2")
    if N < 3:
        raise ValueError("need N >= 3")
    p_d = 0.75 if d == 2 else 1.0 / d
    return float(N) ** ((3.0 * d + 2.0) / (2.0 * d * (d + 2.0))) * math.log(N) ** (p_d * (d + 2.0) / 2.0)
