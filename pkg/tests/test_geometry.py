"""Tests for manifolds, samplers, costs and curvature."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from qotlap.geometry import (
    Sphere,
    Torus,
    align_frame,
    cell_seed,
    cost_matrix,
    equispaced_circle,
    make_rng,
    sample_sphere,
    sample_torus,
    test_function as field,
    torus_rejection_angles,
    unit_sphere_area,
    with_base_point,
)


def test_unit_sphere_area_closed_forms():
    assert_allclose(unit_sphere_area(0), 2.0)
    assert_allclose(unit_sphere_area(1), 2 * np.pi)
    assert_allclose(unit_sphere_area(2), 4 * np.pi)
    assert_allclose(unit_sphere_area(3), 2 * np.pi**2)


def test_volumes():
    assert_allclose(Sphere(1).volume, 2 * np.pi)
    assert_allclose(Sphere(2).volume, 4 * np.pi)
    assert_allclose(Sphere(3).volume, 2 * np.pi**2)
    assert_allclose(Torus(1.0, 0.5).volume, 2 * np.pi**2)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_sphere_samples_unit_norm(d):
    X = sample_sphere(d, 500, 3).points
    assert X.shape == (500, d + 1)
    assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-12)


def test_sphere_sampler_deterministic():
    a = sample_sphere(2, 100, 7).points
    b = sample_sphere(2, 100, 7).points
    assert_array_equal(a, b)
    assert not np.array_equal(a, sample_sphere(2, 100, 8).points)


def test_sphere_mean_near_zero():
    X = sample_sphere(2, 20000, 1).points
    # each coordinate has variance 1/3, so the mean has sd ~ 0.004
    assert np.abs(X.mean(axis=0)).max() < 0.02


def test_torus_samples_on_surface():
    T = Torus(1.0, 0.5)
    X = sample_torus(1.0, 0.5, 2000, 5).points
    assert_allclose(T.residual(X), 0.0, atol=1e-12)


def test_torus_rejection_acceptance_rate():
    # acceptance probability of the (R + r cos v)/(R + r) rule is R/(R + r) = 2/3
    rng = make_rng(0)
    _, _, proposed = torus_rejection_angles(1.0, 0.5, 20000, rng)
    assert abs(20000 / proposed - 2.0 / 3.0) < 0.01


def test_torus_angle_density():
    # the marginal of v has density (1 + 0.5 cos v)/(2 pi)
    u, v, _ = torus_rejection_angles(1.0, 0.5, 200000, make_rng(1))
    assert abs(np.mean(np.cos(v)) - 0.25) < 0.01
    assert abs(np.mean(np.cos(u))) < 0.01


def test_torus_rejects_bad_radii():
    with pytest.raises(ValueError):
        Torus(0.5, 0.5)


def test_equispaced_circle():
    X = equispaced_circle(8).points
    assert_allclose(X[2], [0.0, 1.0], atol=1e-15)
    D = cost_matrix(X)
    assert_allclose(D[0, 1], (2 * np.sin(np.pi / 8)) ** 2)


def test_cost_matrix_symmetric_and_gamma():
    X = sample_sphere(2, 50, 2).points
    C = cost_matrix(X)
    assert_array_equal(C, C.T)
    assert_array_equal(np.diag(C), 0.0)
    assert_allclose(cost_matrix(X, gamma=0.5), 0.5 * C)
    with pytest.raises(ValueError):
        cost_matrix(X, gamma=2.0)


def test_with_base_point_prepends():
    cloud = sample_sphere(2, 10, 0)
    x0 = np.array([0.0, 0.0, 1.0])
    c = with_base_point(cloud, x0)
    assert c.n == 11
    assert_array_equal(c.points[0], x0)
    assert_array_equal(c.points[1:], cloud.points)
    with pytest.raises(ValueError):
        with_base_point(cloud, np.array([0.0, 0.0, 1.1]))


def test_point_cloud_read_only():
    cloud = sample_sphere(1, 5, 0)
    with pytest.raises(ValueError):
        cloud.points[0, 0] = 1.0


def test_cell_seed_distinct():
    seeds = {cell_seed(0, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert cell_seed(3, 4) == cell_seed(3, 4)


class TestCurvature:
    def test_sphere_curvatures(self):
        S = Sphere(2)
        x = np.array([0.0, 0.0, 1.0])
        assert_allclose(S.scalar_curvature(x), 2.0)
        # omega = ((sum k)^2 + 2 sum k^2) / (d (d+2)) with k = (-1, -1)
        assert_allclose(S.omega(x), (4 + 4) / 8)
        assert_allclose(S.mean_second_fundamental(x), [0.0, 0.0, -1.0])

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_sphere_scalar_curvature_general(self, d):
        x = np.zeros(d + 1)
        x[0] = 1.0
        assert_allclose(Sphere(d).scalar_curvature(x), d * (d - 1))

    def test_torus_inner_equator(self):
        T = Torus(1.0, 0.5)
        x0 = np.array([0.0, 0.5, 0.0])
        assert_allclose(T.unit_normal(x0), [0.0, -1.0, 0.0], atol=1e-15)
        assert_allclose(sorted(T.principal_curvatures(x0)), [-2.0, 2.0])
        assert_allclose(T.mean_second_fundamental(x0), 0.0, atol=1e-15)
        # Gaussian curvature k1 k2 = -4, scalar curvature twice that
        assert_allclose(T.scalar_curvature(x0), -8.0)

    def test_torus_outer_equator_gaussian(self):
        T = Torus(1.0, 0.5)
        x0 = T.embed(0.3, 0.0)
        K = np.prod(T.principal_curvatures(x0))
        # Gaussian curvature cos v / (r (R + r cos v))
        assert_allclose(K, 1.0 / (0.5 * 1.5))

    def test_torus_gauss_bonnet(self):
        # the integral of the Gaussian curvature over the torus vanishes
        T = Torus(1.0, 0.5)
        v = np.linspace(0, 2 * np.pi, 2001)
        K = np.cos(v) / (0.5 * (1 + 0.5 * np.cos(v)))
        dA = 0.5 * (1 + 0.5 * np.cos(v))
        assert abs(np.trapezoid(K * dA, v)) < 1e-10
        assert T.min_curvature_radius == 0.5


class TestAlignment:
    @pytest.mark.parametrize(
        "manifold, x0",
        [(Sphere(2), np.array([0.6, 0.0, 0.8])), (Torus(1.0, 0.5), np.array([0.0, 0.5, 0.0]))],
    )
    def test_base_to_origin_and_orthogonal(self, manifold, x0):
        A = align_frame(manifold, x0)
        assert_allclose(A.apply(x0[None, :]), 0.0, atol=1e-15)
        assert_allclose(A.rotation @ A.rotation.T, np.eye(3), atol=1e-14)
        assert_allclose(A.apply_vector(manifold.unit_normal(x0)), [0, 0, 1], atol=1e-14)

    def test_graph_is_quadratic_in_aligned_frame(self):
        # nearby points satisfy y_n ~ 1/2 sum k_i y_i^2
        T = Torus(1.0, 0.5)
        x0 = np.array([0.0, 0.5, 0.0])
        A = align_frame(T, x0)
        u, v = np.meshgrid(np.linspace(-0.01, 0.01, 5), np.pi + np.linspace(-0.01, 0.01, 5))
        Y = A.apply(T.embed(np.pi / 2 + u.ravel(), v.ravel()))
        pred = 0.5 * (A.principal_curvatures * Y[:, :2] ** 2).sum(axis=1)
        assert_allclose(Y[:, 2], pred, atol=1e-5)

    def test_rejects_unknown(self):
        with pytest.raises(TypeError):
            align_frame(object(), np.zeros(3))


class TestFields:
    def test_paper_quadratic(self):
        f = field("paper_quadratic")
        x = np.array([1.0, 2.0, 3.0])
        assert_allclose(f(x), 3 + 20 + 63)
        assert_allclose(f.gradient(x), [6, 20, 42])
        assert_allclose(f.hessian(x), np.diag([6, 10, 14]))

    def test_batch_and_named(self):
        X = np.ones((4, 3))
        assert_allclose(field("unit_quadratic")(X), 3.0)
        assert_allclose(field("constant", value=2.5)(X), 2.5)
        assert_allclose(field("coordinate_linear", axis=1)(np.arange(6.0).reshape(2, 3)), [1, 4])
        with pytest.raises(KeyError):
            field("nope")

    def test_laplace_beltrami_sphere_harmonic(self):
        # x_3 restricted to S^2 is a degree-1 harmonic: eigenvalue -2
        S = Sphere(2)
        f = field("coordinate_linear", axis=2)
        x = np.array([0.6, 0.0, 0.8])
        assert_allclose(S.laplace_beltrami(f, x), -2.0 * 0.8, atol=1e-12)

    def test_laplace_beltrami_torus_quadratic(self):
        # ||x||^2 = R^2 + r^2 + 2 R r cos v on the torus; in the (u, v) chart
        # its Laplacian at v = pi is 2 R / r
        T = Torus(1.0, 0.5)
        x0 = np.array([0.0, 0.5, 0.0])
        assert_allclose(T.laplace_beltrami(field("unit_quadratic"), x0), 4.0, atol=1e-12)

