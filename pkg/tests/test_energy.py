import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbminmax.energy import (NonzeroTrace, angular_radial_split, area, conformality_defect, dirichlet_energy,
                             energy_report, hardy_disk, hardy_half_disk, hopf_differential, mass_matrix,
                             stiffness_matrix)
from fbminmax.mesh import DiskMap, build_disk_mesh, build_half_disk_mesh


@pytest.fixture(scope="module")
def disk():
    return build_disk_mesh(0.05)


def linear_map(mesh, A):
    return DiskMap(mesh, mesh.vertices @ np.asarray(A, dtype=float).T)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_linear_map_energy_area_and_hopf(entries):
    mesh = build_disk_mesh(0.2)
    A = np.array(entries).reshape(3, 2)
    u = linear_map(mesh, A)
    S = mesh.total_area()
    ux, uy = A[:, 0], A[:, 1]
    # oracle: E = ½|A|²·|Ω|, area = |ux × uy|·|Ω|, φ constant
    assert dirichlet_energy(u) == pytest.approx(0.5 * np.sum(A * A) * S, rel=1e-10, abs=1e-12)
    assert area(u) == pytest.approx(np.linalg.norm(np.cross(ux, uy)) * S, rel=1e-10, abs=1e-12)
    phi = ux @ ux - uy @ uy - 2j * (ux @ uy)
    assert hopf_differential(u).interior_l1 == pytest.approx(abs(phi) * S, rel=1e-10, abs=1e-12)
    assert conformality_defect(u) >= -1e-12


def test_identity_is_conformal(disk):
    u = linear_map(disk, [[1, 0], [0, 1], [0, 0]])
    assert conformality_defect(u) == pytest.approx(0.0, abs=1e-12)
    assert hopf_differential(u).interior_l1 == pytest.approx(0.0, abs=1e-12)


def test_stretched_map_defect(disk):
    # (2x, y): E = 5|Ω|/2, area = 2|Ω|, defect |Ω|/2, |φ| = 3
    u = linear_map(disk, [[2, 0], [0, 1], [0, 0]])
    S = disk.total_area()
    assert conformality_defect(u) == pytest.approx(S / 2)
    assert hopf_differential(u).interior_l1 == pytest.approx(3 * S)


def test_stiffness_and_mass_matrices(disk):
    x, y = disk.vertices.T
    f = x * x - y + 0.5
    K = stiffness_matrix(disk)
    M = mass_matrix(disk)
    assert f @ K @ f == pytest.approx(2 * dirichlet_energy(DiskMap(disk, f[:, None])))
    assert np.ones(disk.n_vertices) @ M @ np.ones(disk.n_vertices) == pytest.approx(disk.total_area())
    np.testing.assert_allclose(K @ np.ones(disk.n_vertices), 0.0, atol=1e-10)


def test_hardy_quotients_of_test_function():
    # u = 1 − r²: ∫_I (1−x²) dx = 4/3 and (π/2)∫_{𝔻₊} 4r² = π²/2;
    # on 𝔻: ¼∫(1+r)² = 17π/24 and ∫4r² = 2π
    hm = build_half_disk_mesh(0.025)
    x, y = hm.vertices.T
    lhs, rhs = hardy_half_disk(DiskMap(hm, 1 - x * x - y * y))
    assert lhs == pytest.approx(4 / 3, rel=0.01)
    assert rhs == pytest.approx(np.pi**2 / 2, rel=0.01)
    dm = build_disk_mesh(0.025)
    x, y = dm.vertices.T
    lhs, rhs = hardy_disk(DiskMap(dm, 1 - x * x - y * y))
    assert lhs == pytest.approx(17 * np.pi / 24, rel=0.01)
    assert rhs == pytest.approx(2 * np.pi, rel=0.01)


def test_hardy_requires_vanishing_trace(disk):
    x = disk.vertices[:, 0]
    with pytest.raises(NonzeroTrace):
        hardy_disk(DiskMap(disk, x + 2))
    hm = build_half_disk_mesh(0.1)
    with pytest.raises(NonzeroTrace):
        hardy_half_disk(DiskMap(hm, np.ones(hm.n_vertices)))


def test_angular_radial_split_of_identity(disk):
    # for the identity ∂_r u = e_r and r⁻¹∂_θ u = e_θ: each part equals the annulus area
    u = linear_map(disk, [[1, 0], [0, 1]])
    ang, rad = angular_radial_split(u, (0, 0), 0.2, 0.6)
    assert ang == pytest.approx(rad, rel=1e-12)
    from fbminmax.energy import annulus_mask
    m = annulus_mask(disk, (0, 0), 0.2, 0.6)
    assert ang == pytest.approx(disk.areas[m].sum(), rel=1e-12)
    assert ang + rad == pytest.approx(2 * dirichlet_energy(u, m), rel=1e-12)


def test_energy_report_keys(disk):
    rep = energy_report(linear_map(disk, [[1, 0], [0, 1], [0, 0]]))
    assert set(rep) == {"dirichlet_energy", "area", "conformality_defect", "hopf_differential"}
