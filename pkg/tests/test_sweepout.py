import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbminmax.energy import area, conformality_defect, dirichlet_energy
from fbminmax.harmonic import SolverConfig, replace
from fbminmax.mesh import DiskMap, build_disk_mesh, make_ball_family
from fbminmax.suites import flat_pair, sphere_pair
from fbminmax.sweepout import (MinmaxConfig, ToleranceUnreachable, TighteningConfig, _interval_cover,
                               argmax_ambiguous, constant_sweepout, ellipsoid_sweepout, load_checkpoint,
                               minmax_run, parameter_grid, perturb_nonharmonic, perturb_slice,
                               perturbation_distance, plateau_map, mollify, reparametrize_quasiconformal,
                               save_checkpoint, select_family, single_slice_step, tau_for_dim, tighten,
                               unit_ball_sweepout, validate_sweepout, width_estimate)


@pytest.fixture(scope="module")
def mesh05():
    return build_disk_mesh(0.05)


@pytest.fixture(scope="module")
def ball_sweepout(mesh05):
    return unit_ball_sweepout(mesh05, 7, 1.5)


def free_map(mesh, vals):
    return DiskMap(mesh, vals, flat_pair(), np.zeros(mesh.n_vertices, dtype=bool))


def test_tau_and_grids():
    assert tau_for_dim(1) == 2 and tau_for_dim(2) == 5
    g1 = parameter_grid(1, 5)
    np.testing.assert_allclose(g1[:, 0], [-1, -0.5, 0, 0.5, 1])
    g2 = parameter_grid(2, 5)
    assert np.all(np.linalg.norm(g2, axis=1) <= 1 + 1e-12)


def test_unit_ball_sweepout_is_valid_with_known_slice_energies(ball_sweepout):
    s = ball_sweepout
    assert validate_sweepout(s)["valid"]
    # stretched slices |x|^{γ−1}x: energy π(1−t²)(γ²+1)/(2γ), area π(1−t²)
    t = s.grid[:, 0]
    exact_E = np.pi * (1 - t * t) * (1.5**2 + 1) / 3.0
    np.testing.assert_allclose(s.energies(), exact_E, rtol=0.02, atol=1e-12)
    A, E, tmax = width_estimate(s)
    assert A == pytest.approx(np.pi, rel=0.01)
    assert tmax[0] == 0.0
    assert not argmax_ambiguous(s)


def test_constant_sweepout_has_zero_width(mesh05):
    s = constant_sweepout(mesh05, sphere_pair())
    A, E, _ = width_estimate(s)
    assert A == pytest.approx(0.0, abs=1e-20) and E == pytest.approx(0.0, abs=1e-20)
    res = minmax_run(s, 2)
    assert res.width == pytest.approx(0.0, abs=1e-20)


def test_plateau_map_pieces():
    rho = 0.2
    p = np.array([[0.05, 0.0], [0.0, 0.15], [0.3, 0.4]])
    np.testing.assert_allclose(plateau_map(p, rho), [[0.1, 0.0], [0.0, 0.2], [0.3, 0.4]])


def test_perturbed_identity_has_exact_plateau(mesh05):
    # on the annulus ρ/2 ≤ r < ρ the perturbed slice is the mollified slice at ρx/|x|,
    # on r < ρ/2 it is the mollified slice at 2x, and it is untouched on r ≥ 1/2
    rho = 0.24
    X = mesh05.vertices
    u = free_map(mesh05, np.column_stack([X, np.zeros(len(X))]))
    v = perturb_slice(u, rho)
    w = mollify(u, 0.25 * rho * rho)
    r = np.linalg.norm(X, axis=1)
    ann = (r >= rho / 2) & (r < rho)
    core = r < rho / 2
    far = r >= 0.5
    np.testing.assert_allclose(v.values[ann], mesh05.interpolate(w.values, rho * X[ann] / r[ann, None]),
                               atol=1e-12)
    np.testing.assert_allclose(v.values[core], mesh05.interpolate(w.values, 2 * X[core]), atol=1e-12)
    np.testing.assert_allclose(v.values[far], u.values[far], atol=1e-14)
    # the heat step fixes linear maps up to a boundary layer, so the plateau is close to ρx/|x|
    np.testing.assert_allclose(v.values[ann, :2], rho * X[ann] / r[ann, None], atol=2e-3)
    # the plateau is not harmonic: replacement on a ball around it lowers the energy
    f = make_ball_family([("interior", (0.0, 0.0), 0.4)])
    assert dirichlet_energy(v) - dirichlet_energy(replace(v, f)) > 1e-3


def test_perturbation_distance_tracks_tolerance():
    m = build_disk_mesh(0.025)
    s = unit_ball_sweepout(m, 5, 1.0)
    for eps in (0.5, 0.25):
        p = perturb_nonharmonic(s, eps)
        assert perturbation_distance(s, p) <= eps
        assert validate_sweepout(p)["valid"]
    with pytest.raises(ToleranceUnreachable):
        perturb_nonharmonic(s, 1e-4)


def test_reparametrization_reduces_defect_and_keeps_area(mesh05):
    X = mesh05.vertices
    u = free_map(mesh05, np.column_stack([2 * X[:, 0], X[:, 1], np.zeros(len(X))]))
    v, info = reparametrize_quasiconformal(u, return_info=True)
    assert conformality_defect(v) < 0.2 * conformality_defect(u)
    assert abs(area(v) - area(u)) <= 2 * mesh05.h * dirichlet_energy(u)
    np.testing.assert_allclose(v.values[mesh05.is_boundary][:, 2], 0.0)


def test_reparametrization_leaves_conformal_maps(mesh05):
    X = mesh05.vertices
    u = free_map(mesh05, np.column_stack([X, np.zeros(len(X))]))
    v = reparametrize_quasiconformal(u)
    assert np.max(np.abs(v.values - u.values)) < 1e-6


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=25), st.data())
def test_interval_cover_covers_with_multiplicity_two(pts, data):
    pts = np.unique(np.array(pts))
    radii = np.array(data.draw(st.lists(st.floats(0.01, 0.8), min_size=len(pts), max_size=len(pts))))
    chosen = _interval_cover(pts, radii)
    cover = np.array([[abs(p - pts[i]) <= radii[i] + 1e-12 for i in chosen] for p in pts])
    assert np.all(cover.sum(axis=1) >= 1)
    assert np.all(cover.sum(axis=1) <= 2)


def test_selection_targets_concentrated_energy(mesh05):
    # a sphere-valued map whose gradient is concentrated near p
    p = np.array([0.4, 0.2])
    X = mesh05.vertices
    d2 = np.sum((X - p) ** 2, axis=1)
    bump = np.exp(-d2 / 0.01)
    v = np.column_stack([0.4 * bump, 0.2 * bump * (X[:, 0] - p[0]) / 0.1, np.ones(len(X))])
    u = DiskMap(mesh05, v / np.linalg.norm(v, axis=1, keepdims=True), sphere_pair(),
                np.zeros(len(X), dtype=bool))
    cfg = TighteningConfig()
    fam, drop = select_family(u, cfg.eps0, 1.0, cfg, SolverConfig(), np.random.default_rng(0), clamped=True)
    assert fam is not None and drop > 0
    assert fam.contains(p[None])[0]


def test_single_slice_step_realises_half_of_best(mesh05):
    X = mesh05.vertices
    z = 0.3 * np.sin(3 * X[:, 0]) * np.cos(2 * X[:, 1]) * (1 - np.sum(X * X, 1))
    u = free_map(mesh05, np.column_stack([0.7 * X, z]))
    st_ = single_slice_step(u, TighteningConfig(), SolverConfig(), np.random.default_rng(0))
    assert st_["drop"] >= 0.5 * st_["best_random_drop"]
    assert dirichlet_energy(st_["map"]) == pytest.approx(dirichlet_energy(u) - st_["drop"], rel=1e-9)


def test_tightening_does_not_raise_energy(ball_sweepout):
    out, rep = tighten(ball_sweepout)
    assert np.all(out.energies() <= ball_sweepout.energies() + 1e-12)
    assert rep.max_energy_after <= rep.max_energy_before
    assert all(r >= 0 for _, r in rep.psi_samples)
    assert validate_sweepout(out)["valid"]


def test_minmax_on_ellipsoid_stays_below_smallest_flat_section():
    m = build_disk_mesh(0.05)
    a = (1.2, 1.2, 0.8)
    s = ellipsoid_sweepout(m, a, axis=0, n_grid=7)
    res = minmax_run(s, 2, MinmaxConfig(iters=2))
    assert np.all(np.diff(res.max_energy_series) <= 0)
    assert res.width <= np.pi * a[1] * a[2]


def test_checkpoint_round_trip(tmp_path, ball_sweepout):
    p = tmp_path / "ck.npz"
    save_checkpoint(ball_sweepout, p)
    back = load_checkpoint(p, ball_sweepout.pair)
    np.testing.assert_array_equal(back.grid, ball_sweepout.grid)
    for a, b in zip(back.slices, ball_sweepout.slices):
        np.testing.assert_array_equal(a.values, b.values)
