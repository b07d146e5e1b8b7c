import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad

from fbminmax.analysis import (Bubble, EmptyRange, ScaleBelowMesh, angular_energy_fraction, boundary_bubble_map,
                               decompose, detect_concentration, energy_identity_check, interior_bubble_energy,
                               interior_bubble_map, neck_profile, phi, phi_inv, rescale, separation,
                               stereographic_disk_area, write_neck_csv)
from fbminmax.energy import dirichlet_energy
from fbminmax.mesh import DiskMap, build_disk_mesh, build_graded_mesh

angles = st.floats(0, 2 * np.pi)


@settings(max_examples=40, deadline=None)
@given(angles, st.floats(0, 0.99), angles)
def test_boundary_chart_maps_disk_to_upper_half_plane(ta, r, tz):
    a = np.exp(1j * ta)
    z = r * np.exp(1j * tz)
    w = phi(a, z)
    assert w.imag >= -1e-12
    assert abs(phi_inv(a, w) - z) < 1e-9
    assert abs(phi(a, a)) < 1e-15


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 20.0))
def test_centred_cap_area(rho):
    # |w| < ρ maps to the cap {z < (ρ²−1)/(ρ²+1)} of area 4πρ²/(1+ρ²)
    assert stereographic_disk_area(0.0, rho) == pytest.approx(4 * np.pi * rho**2 / (1 + rho**2), rel=1e-12)


@pytest.mark.parametrize("c,rho", [(0.7 + 0.2j, 0.5), (-2.0 + 1.0j, 1.5), (0.3j, 3.0)])
def test_offset_cap_area_against_quadrature(c, rho):
    # area element of inverse stereographic projection: 4/(1+|w|²)²
    val, _ = dblquad(lambda s, r: 4 / (1 + abs(c + r * np.exp(1j * s)) ** 2) ** 2 * r, 0, rho, 0, 2 * np.pi,
                     epsabs=1e-11)
    assert stereographic_disk_area(c, rho) == pytest.approx(val, rel=1e-8)


@pytest.fixture(scope="module")
def bubble():
    c = np.array([0.2, -0.1])
    nu = 0.02
    mesh = build_graded_mesh(0.05, [c], 0.1 * nu)
    return c, nu, interior_bubble_map(mesh, c, nu)


def test_bubble_map_energy_matches_closed_form(bubble):
    c, nu, u = bubble
    assert dirichlet_energy(u) == pytest.approx(interior_bubble_energy(c, nu), rel=0.01)


def test_detects_single_interior_concentration(bubble):
    c, nu, u = bubble
    dets = detect_concentration(u)
    assert len(dets) == 1
    assert dets[0].kind == "interior"
    assert np.linalg.norm(dets[0].center - c) < nu


def test_detects_two_boundary_concentrations():
    a = np.array([[1.0, 0.0], [-0.6, 0.8]])
    m = build_graded_mesh(0.05, a, 0.002)
    u = boundary_bubble_map(m, a, [0.02, 0.03])
    dets = detect_concentration(u)
    assert sorted(d.kind for d in dets) == ["boundary", "boundary"]
    for d in dets:
        assert np.min(np.linalg.norm(a - d.center, axis=1)) < 0.05
    d = decompose(u)
    # each boundary bubble is a flat disk of energy π
    for b in d.boundary_bubbles:
        assert b.energy == pytest.approx(np.pi, rel=0.02)


def test_rescale_of_linear_map_is_exact():
    mesh = build_disk_mesh(0.02)
    u = DiskMap(mesh, mesh.vertices.copy())
    b, nu = np.array([0.3, 0.1]), 0.2
    v = rescale(u, b, nu, h_ref=0.1)
    np.testing.assert_allclose(v.values, b + nu * v.mesh.vertices, atol=1e-12)
    with pytest.raises(ScaleBelowMesh):
        rescale(u, b, 0.01)


def test_neck_profile_identity_and_csv(bubble, tmp_path):
    c, nu, u = bubble
    prof = neck_profile(u, c, nu, 2.0)
    assert prof.rows
    for r in prof.rows:
        assert abs(r["angular"] + r["radial"] - 2 * r["total"]) <= 1e-12
        assert r["r_in"] < r["r_out"]
    p = tmp_path / "annuli.csv"
    write_neck_csv(prof, p)
    assert p.read_text().splitlines()[0].split(",")[:3] == ["r_in", "r_out", "total"]
    with pytest.raises(EmptyRange):
        angular_energy_fraction(u, c, 0.1, 0.2)


def test_separation_formula():
    b1 = Bubble(np.array([0.0, 0.0]), 0.1, 0.2, "interior", 1.0, None)
    b2 = Bubble(np.array([0.3, 0.4]), 0.4, 0.2, "interior", 1.0, None)
    # |Δc|/(λ1+λ2) + λ1/λ2 + λ2/λ1 = 0.5/0.5 + 0.25 + 4
    assert separation(b1, b2) == pytest.approx(5.25)


def test_decomposition_ledger_and_negative_control(bubble, tmp_path):
    c, nu, u = bubble
    d = decompose(u)
    assert len(d.interior_bubbles) == 1 and not d.boundary_bubbles
    led = d.ledger()
    assert led["consistent"]
    res = energy_identity_check([u], d)[0]
    assert res < 0.05 * dirichlet_energy(u)
    ctrl = d.without(0)
    omitted = d.bubbles[0].energy
    assert energy_identity_check([u], ctrl)[0] == pytest.approx(omitted, rel=0.1)
    p = tmp_path / "b.json"
    d.to_json(p)
    back = json.loads(p.read_text())
    assert back["interior_bubbles"][0]["energy"] == pytest.approx(omitted)
