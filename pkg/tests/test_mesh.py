import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbminmax.mesh import (DiskMap, FamilyError, NotOrthogonal, OutsideDisk, Overlap, build_disk_mesh,
                           build_graded_mesh, build_half_disk_mesh, make_ball_family, read_off, region_energy,
                           scale_family, triangle_gradients, write_off)


@pytest.fixture(scope="module")
def disk():
    return build_disk_mesh(0.1)


def test_disk_mesh_area_and_quality(disk):
    # inscribed polygon area is below π by O(h²)
    assert np.pi - 0.02 < disk.total_area() < np.pi
    assert disk.min_angle() > 20.0
    r = np.linalg.norm(disk.vertices[disk.boundary_loop], axis=1)
    np.testing.assert_allclose(r, 1.0, atol=1e-12)


def test_half_disk_mesh_has_diameter_and_arc():
    m = build_half_disk_mesh(0.1)
    assert np.pi / 2 - 0.02 < m.total_area() < np.pi / 2
    assert np.all(m.vertices[:, 1] >= -1e-14)
    np.testing.assert_allclose(m.vertices[m.segment_vertices, 1], 0.0, atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(m.vertices[m.arc_vertices], axis=1), 1.0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_p1_gradients_exact_on_linear_functions(a, b, c):
    m = build_disk_mesh(0.2)
    x, y = m.vertices.T
    G = triangle_gradients(m, (a * x + b * y + c)[:, None])
    np.testing.assert_allclose(G[:, 0, 0], a, atol=1e-9)
    np.testing.assert_allclose(G[:, 1, 0], b, atol=1e-9)


def test_interpolation_reproduces_linear_functions(disk):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.6, 0.6, (50, 2))
    x, y = disk.vertices.T
    vals = np.stack([2 * x - y, x + 3 * y + 1], axis=1)
    got = disk.interpolate(vals, pts)
    np.testing.assert_allclose(got, np.stack([2 * pts[:, 0] - pts[:, 1], pts[:, 0] + 3 * pts[:, 1] + 1], 1),
                               atol=1e-12)


def test_graded_mesh_refines_near_centre():
    c = np.array([0.3, 0.1])
    m = build_graded_mesh(0.1, [c], 0.005)
    assert np.pi - 0.03 < m.total_area() < np.pi
    assert m.local_h(c[None])[0] < 0.02
    assert m.local_h(np.array([[-0.6, -0.3]]))[0] > 0.05
    assert m.min_angle() > 15.0
    hm = build_graded_mesh(0.1, [np.array([1.0, 0.0])], 0.005, domain="half_disk")
    assert hm.domain == "half_disk"
    assert np.pi / 2 - 0.03 < hm.total_area() < np.pi / 2


def test_off_round_trip(tmp_path, disk):
    p = tmp_path / "d.off"
    write_off(disk, p)
    back = read_off(p)
    np.testing.assert_allclose(back.vertices, disk.vertices)
    np.testing.assert_array_equal(back.triangles, disk.triangles)


def test_half_ball_orthogonality_and_snap():
    r = 0.3
    a = np.sqrt(1 + r * r)
    f = make_ball_family([{"kind": "half", "center": [a + 1e-8, 0.0], "radius": r}])
    (c, rr), = f.half_balls
    assert np.dot(c, c) == pytest.approx(1 + rr * rr, abs=1e-14)
    with pytest.raises(NotOrthogonal):
        make_ball_family([{"kind": "half", "center": [a + 0.1, 0.0], "radius": r}])


def test_family_validation_errors():
    with pytest.raises(OutsideDisk):
        make_ball_family([("interior", (0.8, 0.0), 0.3)])
    with pytest.raises(Overlap):
        make_ball_family([("interior", (0.0, 0.0), 0.3), ("interior", (0.5, 0.0), 0.3)])
    with pytest.raises(FamilyError):
        make_ball_family([("interior", (0.0, 0.0), -0.1)])
    # two half-balls whose circles meet outside the disk still overlap inside it
    r = 0.5
    s = np.sqrt(1 + r * r)
    with pytest.raises(Overlap):
        make_ball_family([("half", (s, 0.0), r), ("half", (s * np.cos(0.8), s * np.sin(0.8)), r)])


def test_scaling_composes_and_keeps_orthogonality():
    r = 0.4
    s = np.sqrt(1 + r * r)
    f = make_ball_family([("half", (0.0, s), r), ("interior", (-0.3, -0.2), 0.2)])
    g = scale_family(scale_family(f, 0.5), 0.5)
    h = scale_family(f, 0.25)
    for (a1, r1, _), (a2, r2, _) in zip(g.balls, h.balls):
        np.testing.assert_allclose(a1, a2)
        assert r1 == pytest.approx(r2)
    (c, rr), = g.half_balls
    assert np.dot(c, c) == pytest.approx(1 + rr * rr)


def test_region_energy_of_linear_map_on_ball(disk):
    # u = (x, 0): density ½ on every triangle, so the energy is ½·(area of covered triangles)
    x = disk.vertices[:, 0]
    u = DiskMap(disk, np.stack([x, 0 * x], 1))
    f = make_ball_family([("interior", (0.0, 0.0), 0.5)])
    mask = f.triangle_mask(disk)
    assert region_energy(u, f) == pytest.approx(0.5 * disk.areas[mask].sum())
