import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbminmax.geometry import (ManifoldPair, OutsideTube, ellipsoid, flat_subspace, normal_deviation,
                               normal_deviation_constant, projection_differential_norm, solid, sphere,
                               unit_ball_pair)

coords = st.floats(-2.0, 2.0, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.tuples(coords, coords, coords))
def test_sphere_projection_is_radial(x):
    x = np.array(x)
    if not 0.5 < np.linalg.norm(x) < 1.5:
        return
    y = sphere().project(x[None])[0]
    np.testing.assert_allclose(y, x / np.linalg.norm(x), atol=1e-14)


def test_sphere_projection_rejects_points_outside_tube():
    with pytest.raises(OutsideTube):
        sphere().project(np.array([[0.1, 0.0, 0.0]]))


@settings(max_examples=30, deadline=None)
@given(st.tuples(coords, coords, coords))
def test_ellipsoid_projection_satisfies_kkt(x):
    a = np.array([1.2, 1.0, 0.7])
    E = ellipsoid(a)
    x = np.array(x)
    # stay inside the tube of reach min(a)^2/max(a)
    y0 = x / np.sqrt(np.sum(x * x / a**2)) if np.linalg.norm(x) > 1e-3 else a * [1, 0, 0]
    x = y0 + 0.2 * (x - y0) / max(np.linalg.norm(x - y0), 1.0)
    y = E.project(x[None], check=False)[0]
    assert abs(np.sum(y * y / a**2) - 1.0) < 1e-10
    n = y / a**2
    r = x - y
    # x − y is parallel to the normal at y
    assert np.linalg.norm(np.cross(r, n)) <= 1e-8 * max(np.linalg.norm(n), 1.0)


def test_flat_subspace_projection_zeroes_trailing_coordinates():
    F = flat_subspace(2, 4)
    x = np.array([[1.0, -2.0, 3.0, 4.0]])
    np.testing.assert_array_equal(F.project(x), [[1.0, -2.0, 0.0, 0.0]])


def test_solid_ball_projection_clamps():
    B = unit_ball_pair(3).N
    inside = np.array([[0.3, 0.1, -0.2]])
    np.testing.assert_allclose(B.project(inside), inside)
    np.testing.assert_allclose(B.project(np.array([[0.0, 3.0, 0.0]])), [[0.0, 1.0, 0.0]], atol=1e-12)


def test_tangent_basis_is_orthonormal_and_tangent():
    rng = np.random.default_rng(1)
    for M in (sphere(), ellipsoid([1.3, 1.0, 0.8])):
        Y = M.sample(20, rng)
        T = M.tangent_basis(Y)
        N = M.normal(Y)
        np.testing.assert_allclose(np.einsum("nji,njk->nik", T, T), np.broadcast_to(np.eye(2), (20, 2, 2)),
                                   atol=1e-10)
        assert np.max(np.abs(np.einsum("nji,nj->ni", T, N))) < 1e-8


def test_sphere_normal_deviation_constant_is_half_inverse_radius():
    # for chords of a sphere of radius R the normal part of p − q is |p − q|²/(2R)
    assert normal_deviation_constant(sphere(2.0)) == pytest.approx(0.25)
    p, q = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    assert normal_deviation(sphere(), p, q) == pytest.approx(np.sum((p - q) ** 2) / 2)


def test_projection_differential_of_sphere_scales_by_inverse_distance():
    # Dπ(x) = (I − x̂x̂ᵀ)/|x| so its norm is 1/|x|
    x = np.array([0.0, 0.0, 1.2])
    assert projection_differential_norm(sphere(), x) == pytest.approx(1 / 1.2, rel=1e-6)


def test_pair_requires_base_point_on_constraint():
    S = sphere()
    with pytest.raises(ValueError):
        ManifoldPair(solid(S), S, np.array([0.0, 0.0, 0.5]))
    assert unit_ball_pair(3).check_inclusion() < 1e-12
