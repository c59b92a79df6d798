"""
Manifolds, uniform samplers, cost matrices and analytic curvature.

Three manifold kinds are supported, all of them hypersurfaces of their
ambient space: the round sphere :math:`S^d \\subset \\mathbb{R}^{d+1}`, the
ring torus in :math:`\\mathbb{R}^3` and the unit circle carrying an
equispaced point set. Curvature quantities are closed forms so they can
serve as ground truth in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import gammaln

__all__ = [
    "Sphere",
    "Torus",
    "EquispacedCircle",
    "ManifoldSpec",
    "PointCloud",
    "CurvatureData",
    "FrameAlignment",
    "ScalarField",
    "make_rng",
    "cell_seed",
    "sample_sphere",
    "sample_torus",
    "torus_rejection_angles",
    "equispaced_circle",
    "with_base_point",
    "cost_matrix",
    "align_frame",
    "test_function",
    "unit_sphere_area",
]

ON_MANIFOLD_TOL = 1e-9


def unit_sphere_area(k):
    """Surface area of the unit sphere :math:`S^k \\subset \\mathbb{R}^{k+1}`.

    ``unit_sphere_area(0) == 2`` (two points).
    """
    if k < 0:
        raise ValueError("sphere dimension must be >= 0")
    return float(2.0 * np.exp(0.5 * (k + 1) * np.log(np.pi) - gammaln(0.5 * (k + 1))))


def make_rng(seed):
    """PCG64 generator; all randomness in the package goes through here."""
    return np.random.Generator(np.random.PCG64(seed))


def cell_seed(seed, index):
    """Derive the 64-bit seed of grid cell ``index`` from a run seed.

    The stream of cell ``i`` only depends on ``(seed, i)``, so results do
    not depend on execution order or worker count.
    """
    ss = np.random.SeedSequence([int(seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _frame_from_normal(normal):
    # orthonormal completion of a unit normal, preferring coordinate axes
    p = normal.shape[0]
    order = np.argsort(np.abs(normal), kind="stable")
    basis = []
    for k in order:
        v = np.zeros(p)
        v[k] = 1.0
        v -= (v @ normal) * normal
        for b in basis:
            v -= (v @ b) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            basis.append(v / nv)
        if len(basis) == p - 1:
            break
    return np.array(basis)


@dataclass(frozen=True)
class CurvatureData:
    """Curvature snapshot of a hypersurface at one point.

    ``principal_curvatures`` are taken with respect to ``normal``, with the
    convention :math:`\\mathbb{I}(\\theta,\\theta) = (\\sum_i k_i \\theta_i^2)\\,n`
    in the principal frame ``tangent_basis``.
    """

    vol: float
    sphere_area: float
    scalar_curvature: float
    omega: float
    mean_II: np.ndarray
    principal_curvatures: np.ndarray
    normal: np.ndarray
    tangent_basis: np.ndarray


class _Hypersurface:
    """Shared curvature algebra for codimension-one manifolds."""

    d: int
    p: int

    @property
    def intrinsic_dim(self):
        return self.d

    @property
    def ambient_dim(self):
        return self.p

    @property
    def sphere_area(self):
        """:math:`|S^{d-1}|`, the area of the unit sphere of a tangent space."""
        return unit_sphere_area(self.d - 1)

    def check_on_manifold(self, x, tol=ON_MANIFOLD_TOL):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.p,):
            raise ValueError(f"expected a point of R^{self.p}, got shape {x.shape}")
        res = abs(float(self.residual(x[None, :])[0]))
        if not res <= tol:
            raise ValueError(f"point {x} is off the manifold (residual {res:.3e})")
        return x

    def principal_curvatures(self, x):
        raise NotImplementedError

    def principal_directions(self, x):
        raise NotImplementedError

    def unit_normal(self, x):
        raise NotImplementedError

    def scalar_curvature(self, x):
        k = self.principal_curvatures(x)
        return float(k.sum() ** 2 - (k**2).sum())

    def omega(self, x):
        """Sphere average of :math:`\\|\\mathbb{I}_x(\\theta,\\theta)\\|^2`."""
        k = self.principal_curvatures(x)
        d = self.d
        return float((k.sum() ** 2 + 2.0 * (k**2).sum()) / (d * (d + 2)))

    def mean_second_fundamental(self, x):
        """Sphere average of :math:`\\mathbb{I}_x(\\theta,\\theta)` as a p-vector."""
        return self.principal_curvatures(x).mean() * self.unit_normal(x)

    def laplace_beltrami(self, field_, x):
        """Laplace-Beltrami of the restriction of an ambient C^2 field at x.

        Uses :math:`\\Delta_M g = \\mathrm{tr}_T \\nabla^2 g + d\\,\\langle \\nabla g, \\mathfrak{N}\\rangle`.
        """
        x = np.asarray(x, dtype=float)
        T = self.principal_directions(x)
        H = field_.hessian(x)
        tan = float(np.trace(T @ H @ T.T))
        return tan + self.d * float(field_.gradient(x) @ self.mean_second_fundamental(x))

    def curvature_at(self, x):
        x = self.check_on_manifold(x)
        return CurvatureData(
            vol=self.volume,
            sphere_area=self.sphere_area,
            scalar_curvature=self.scalar_curvature(x),
            omega=self.omega(x),
            mean_II=self.mean_second_fundamental(x),
            principal_curvatures=self.principal_curvatures(x),
            normal=self.unit_normal(x),
            tangent_basis=self.principal_directions(x),
        )

    @property
    def min_curvature_radius(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Sphere(_Hypersurface):
    """Round sphere :math:`S^d` of the given radius centred at the origin."""

    d: int
    radius: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("sphere dimension must be a positive integer")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def p(self):
        return self.d + 1

    @property
    def volume(self):
        return unit_sphere_area(self.d) * self.radius**self.d

    @property
    def min_curvature_radius(self):
        return float(self.radius)

    def residual(self, points):
        points = np.atleast_2d(points)
        return np.linalg.norm(points, axis=1) - self.radius

    def unit_normal(self, x):
        x = np.asarray(x, dtype=float)
        return x / np.linalg.norm(x)

    def principal_curvatures(self, x):
        return np.full(self.d, -1.0 / self.radius)

    def principal_directions(self, x):
        return _frame_from_normal(self.unit_normal(x))


@dataclass(frozen=True)
class Torus(_Hypersurface):
    """Ring torus with major radius ``R`` and minor radius ``r`` about the z-axis.

    Parametrisation: :math:`((R + r\\cos v)\\cos u, (R + r\\cos v)\\sin u, r\\sin v)`.
    """

    R: float = 1.0
    r: float = 0.5

    def __post_init__(self):
        if not (self.R > self.r > 0):
            raise ValueError("torus radii must satisfy R > r > 0")

    d = 2
    p = 3

    @property
    def volume(self):
        return 4.0 * np.pi**2 * self.R * self.r

    @property
    def min_curvature_radius(self):
        return float(min(self.r, self.R - self.r))

    def residual(self, points):
        points = np.atleast_2d(points)
        rho = np.hypot(points[:, 0], points[:, 1])
        return (rho - self.R) ** 2 + points[:, 2] ** 2 - self.r**2

    def embed(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        rho = self.R + self.r * np.cos(v)
        return np.stack([rho * np.cos(u), rho * np.sin(u), self.r * np.sin(v)], axis=-1)

    def angles(self, x):
        x = np.asarray(x, dtype=float)
        u = np.arctan2(x[1], x[0])
        v = np.arctan2(x[2], np.hypot(x[0], x[1]) - self.R)
        return u, v

    def unit_normal(self, x):
        u, v = self.angles(x)
        return np.array([np.cos(v) * np.cos(u), np.cos(v) * np.sin(u), np.sin(v)])

    def principal_curvatures(self, x):
        # order matches principal_directions: (parallel, meridian)
        _, v = self.angles(x)
        return np.array(
            [-np.cos(v) / (self.R + self.r * np.cos(v)), -1.0 / self.r]
        )

    def principal_directions(self, x):
        u, v = self.angles(x)
        parallel = np.array([-np.sin(u), np.cos(u), 0.0])
        meridian = np.array([-np.sin(v) * np.cos(u), -np.sin(v) * np.sin(u), np.cos(v)])
        return np.array([parallel, meridian])


@dataclass(frozen=True)
class EquispacedCircle(Sphere):
    """Unit circle carrying ``n`` equispaced points."""

    n: int = 0
    d: int = field(default=1, init=False)
    radius: float = field(default=1.0, init=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("an equispaced circle needs n >= 2 points")


ManifoldSpec = Union[Sphere, Torus, EquispacedCircle]


@dataclass(frozen=True)
class PointCloud:
    """Points on a manifold, stored as an ``(n, p)`` read-only array.

    ``base_point_index`` marks the distinguished point :math:`x_0` when the
    cloud was built by :func:`with_base_point` (always index 0).
    """

    points: np.ndarray
    manifold: ManifoldSpec
    seed: Optional[int] = None
    base_point_index: Optional[int] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim != 2 or pts.shape[1] != self.manifold.ambient_dim:
            pts = pts.reshape(-1, self.manifold.ambient_dim)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def base_point(self):
        if self.base_point_index is None:
            raise ValueError("cloud has no distinguished base point")
        return self.points[self.base_point_index]

    def transformed(self, alignment):
        """Apply a rigid motion; the manifold tag is kept for reference."""
        return PointCloud(
            alignment.apply(self.points), self.manifold, self.seed, self.base_point_index
        )


def sample_sphere(d, n, seed):
    """Sample ``n`` i.i.d. uniform points on the unit sphere :math:`S^d`.

    Standard Gaussian vectors in :math:`\\mathbb{R}^{d+1}` are normalised.

    Parameters
    ----------
    d : int
        Intrinsic dimension, ``d >= 1``.
    n : int
        Number of points.
    seed : int
        Seed of the PCG64 stream.

    Returns
    -------
    PointCloud
    """
    manifold = Sphere(d)
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = make_rng(seed)
    x = rng.standard_normal((n, d + 1))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return PointCloud(x, manifold, seed)


def torus_rejection_angles(R, r, n, rng):
    """Area-uniform torus angles by rejection.

    Proposals are uniform on :math:`[0, 2\\pi)^2` and are accepted with
    probability :math:`(R + r\\cos v)/(R + r)`.

    Returns
    -------
    u, v : ndarray, shape (n,)
    n_proposed : int
    """
    us, vs = [], []
    got = 0
    proposed = 0
    while got < n:
        m = max(64, int(1.3 * (n - got) * (R + r) / R) + 16)
        u = rng.uniform(0.0, 2 * np.pi, m)
        v = rng.uniform(0.0, 2 * np.pi, m)
        keep = rng.uniform(0.0, 1.0, m) * (R + r) < R + r * np.cos(v)
        idx = np.flatnonzero(keep)
        need = n - got
        if idx.size >= need:
            proposed += int(idx[need - 1]) + 1
            idx = idx[:need]
        else:
            proposed += m
        us.append(u[idx])
        vs.append(v[idx])
        got += idx.size
    if n == 0:
        return np.empty(0), np.empty(0), 0
    return np.concatenate(us), np.concatenate(vs), proposed


def sample_torus(R, r, n, seed):
    """Sample ``n`` points uniformly (w.r.t. area) on the torus ``Torus(R, r)``."""
    manifold = Torus(R, r)
    if n < 0:
        raise ValueError("n must be nonnegative")
    u, v, _ = torus_rejection_angles(R, r, n, make_rng(seed))
    return PointCloud(manifold.embed(u, v).reshape(n, 3), manifold, seed)


def equispaced_circle(n):
    """Points :math:`(\\cos(2\\pi j/n), \\sin(2\\pi j/n))`, ``j = 0..n-1``."""
    manifold = EquispacedCircle(n)
    t = 2 * np.pi * np.arange(n) / n
    return PointCloud(np.column_stack([np.cos(t), np.sin(t)]), manifold)


def with_base_point(cloud, x0):
    """Prepend the fixed point ``x0`` to a cloud, giving ``n + 1`` points.

    Raises
    ------
    ValueError
        If ``x0`` violates the manifold equation by more than 1e-9.
    """
    x0 = cloud.manifold.check_on_manifold(x0)
    pts = np.vstack([x0[None, :], cloud.points])
    return PointCloud(pts, cloud.manifold, cloud.seed, base_point_index=0)


def cost_matrix(cloud, gamma=1.0):
    """Cost ``gamma * ||x_i - x_j||^2``.

    Differences are formed coordinate by coordinate so the result is exactly
    symmetric with an exactly zero diagonal. ``gamma = 1/2`` gives the
    classical half squared distance.
    """
    if gamma not in (0.5, 1.0):
        raise ValueError("gamma must be 1/2 or 1")
    x = cloud.points if isinstance(cloud, PointCloud) else np.atleast_2d(cloud)
    n = x.shape[0]
    C = np.zeros((n, n))
    for k in range(x.shape[1]):
        diff = x[:, k][:, None] - x[:, k][None, :]
        C += diff * diff
    if gamma != 1.0:
        C *= gamma
    return C


@dataclass(frozen=True)
class FrameAlignment:
    """Rigid motion ``y = rotation @ (x - x0)`` putting ``x0`` at the origin.

    Rows of ``rotation`` are the principal directions at ``x0`` followed by
    the unit normal, so the tangent space becomes ``span(e_1..e_d)`` and the
    second fundamental form is diagonal in the new coordinates.
    """

    rotation: np.ndarray
    translation: np.ndarray
    tangent_dim: int
    principal_curvatures: np.ndarray

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def apply_vector(self, v):
        return self.rotation @ np.asarray(v, dtype=float)

    def apply_matrix(self, M):
        return self.rotation @ np.asarray(M, dtype=float) @ self.rotation.T

    def second_fundamental_form(self):
        """Shape operator at ``x0`` in aligned tangent coordinates."""
        return np.diag(self.principal_curvatures)


def align_frame(manifold, x0):
    """Alignment at ``x0`` making the tangent and principal axes coordinate axes."""
    if not isinstance(manifold, (Sphere, Torus)):
        raise TypeError(f"unsupported manifold kind: {type(manifold).__name__}")
    x0 = manifold.check_on_manifold(x0)
    T = manifold.principal_directions(x0)
    n = manifold.unit_normal(x0)
    Q = np.vstack([T, n[None, :]])
    return FrameAlignment(
        rotation=Q,
        translation=-Q @ x0,
        tangent_dim=manifold.intrinsic_dim,
        principal_curvatures=manifold.principal_curvatures(x0),
    )


@dataclass(frozen=True)
class ScalarField:
    """A C^2 function on the ambient space with analytic derivatives.

    ``value`` accepts a single point or an ``(n, p)`` array.
    """

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.value(x)


def _quadratic(name, weights):
    w = np.asarray(weights, dtype=float)

    def value(x):
        x = np.asarray(x, dtype=float)
        return (x**2 * w[: x.shape[-1]]).sum(axis=-1)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        return 2.0 * w[: x.shape[-1]] * x

    def hessian(x):
        return np.diag(2.0 * w[: np.asarray(x).shape[-1]])

    return ScalarField(name, value, gradient, hessian)


def test_function(name, **params):
    """Look up a named test field.

    ``paper_quadratic``
        :math:`3x^2 + 5y^2 + 7z^2`.
    ``unit_quadratic``
        :math:`\\|x\\|^2` (up to ten coordinates).
    ``constant``
        ``value`` keyword, default 1.
    ``coordinate_linear``
        the ``axis`` coordinate, default 0.
    """
    if name == "paper_quadratic":
        return _quadratic(name, [3.0, 5.0, 7.0])
    if name == "unit_quadratic":
        return _quadratic(name, np.ones(10))
    if name == "constant":
        c = float(params.get("value", 1.0))
        return ScalarField(
            name,
            lambda x: np.full(np.asarray(x).shape[:-1], c) if np.ndim(x) > 1 else c,
            lambda x: np.zeros(np.asarray(x).shape[-1]),
            lambda x: np.zeros((np.asarray(x).shape[-1],) * 2),
        )
    if name == "coordinate_linear":
        axis = int(params.get("axis", 0))

        def grad(x):
            g = np.zeros(np.asarray(x).shape[-1])
            g[axis] = 1.0
            return g

        return ScalarField(
            name,
            lambda x: np.asarray(x, dtype=float)[..., axis],
            grad,
            lambda x: np.zeros((np.asarray(x).shape[-1],) * 2),
        )
    raise KeyError(f"unknown test function {name!r}")


test_function.__test__ = False  # keep pytest from collecting the re-export
