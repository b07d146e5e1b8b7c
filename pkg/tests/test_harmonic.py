import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from fbminmax.energy import dirichlet_energy, stiffness_matrix
from fbminmax.harmonic import (CurvesEqual, DataMismatch, EnergyAboveThreshold, NoAgreementPoint, SolverConfig,
                               circle_energy, clamped_region, convexity_check, courant_lebesgue_radius,
                               exchange_check, extension_build, extension_rho, reflect_extend, reflect_values,
                               replace, solve_constrained)
from fbminmax.mesh import DiskMap, build_disk_mesh, build_half_disk_mesh, make_ball_family
from fbminmax.suites import _small_sphere_map, flat_pair, sphere_pair

TIGHT = SolverConfig(tol_grad=1e-11, max_iters=2000)


@pytest.fixture(scope="module")
def disk():
    return build_disk_mesh(0.05)


def flat_map(mesh, vals):
    return DiskMap(mesh, vals, flat_pair(), np.zeros(mesh.n_vertices, dtype=bool))


def test_flat_clamped_solve_matches_direct_linear_solve(disk):
    # oracle: discrete harmonic extension via a sparse direct solve of K u = 0
    x, y = disk.vertices.T
    g = np.stack([x * x - y * y, x * y, np.exp(x) * np.cos(y)], 1)
    u0 = g.copy()
    inner = ~disk.is_boundary
    u0[inner] = 0.0
    res = solve_constrained(flat_map(disk, u0), clamped_region(flat_map(disk, u0)), TIGHT)
    K = stiffness_matrix(disk).tocsr()
    I, B = np.flatnonzero(inner), np.flatnonzero(~inner)
    ref = u0.copy()
    ref[I] = spla.spsolve(K[I][:, I].tocsc(), -K[I][:, B] @ u0[B])
    np.testing.assert_allclose(res.values, ref, atol=1e-7)
    # and the discrete solution approximates the exact harmonic functions
    assert np.max(np.abs(res.values - g)) < 5e-3


def test_sphere_solve_reduces_energy_and_stays_on_target(disk):
    rng = np.random.default_rng(3)
    u0 = _small_sphere_map(disk, rng, sphere_pair())
    res = solve_constrained(u0, clamped_region(u0))
    assert res.energy <= dirichlet_energy(u0) + 1e-12
    assert res.in_uniqueness_regime
    np.testing.assert_allclose(np.linalg.norm(res.values, axis=1), 1.0, atol=1e-10)
    bd = disk.is_boundary
    np.testing.assert_array_equal(res.values[bd], u0.values[bd])


def test_energy_threshold_enforced(disk):
    x, y = disk.vertices.T
    v = np.stack([x, y, np.sqrt(np.clip(1 - x * x - y * y, 0, 1))], 1)
    u = DiskMap(disk, v / np.linalg.norm(v, axis=1, keepdims=True), sphere_pair(),
                np.zeros(disk.n_vertices, dtype=bool))
    with pytest.raises(EnergyAboveThreshold):
        solve_constrained(u, clamped_region(u))
    res = solve_constrained(u, clamped_region(u), override=True)
    assert not res.in_uniqueness_regime


def test_replacement_only_changes_the_family(disk):
    rng = np.random.default_rng(5)
    u = _small_sphere_map(disk, rng, sphere_pair(), energy_range=(0.2, 0.3))
    f = make_ball_family([("interior", (0.2, 0.1), 0.3)])
    v = replace(u, f)
    outside = ~f.contains(disk.vertices)
    np.testing.assert_array_equal(v.values[outside], u.values[outside])
    assert dirichlet_energy(v) <= dirichlet_energy(u) + 1e-12


def test_convexity_residual_is_exact_for_flat_targets(disk):
    # u harmonic and flat: ∫|∇v|² − ∫|∇u|² = ∫|∇(v−u)|², so the residual equals ½∫|∇(v−u)|²
    x, y = disk.vertices.T
    g = np.stack([x * x - y * y, 2 * x * y, x], 1)
    u0 = flat_map(disk, g)
    u = u0.with_values(solve_constrained(u0, clamped_region(u0), TIGHT).values)
    bump = ((1 - x * x - y * y) * np.sin(3 * x + y))[:, None] * np.array([[1.0, -0.5, 0.2]])
    v = u.with_values(u.values + bump)
    expected = dirichlet_energy(u.with_values(bump))  # ½∫|∇(v−u)|²
    assert convexity_check(u, v) == pytest.approx(expected, rel=1e-6)
    with pytest.raises(DataMismatch):
        convexity_check(u, u.with_values(u.values + 0.1))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 3.0))
def test_extension_rho_closed_form(beta):
    # f a great circle, g its rotation by β about the x-axis; they agree at θ = 0.
    # |f'|² = |g'|² = 1 and |f' − g'|² = (2 − 2cos β) cos²θ, so ρ² = (2 − 2cos β)/32.
    f = lambda t: np.stack([np.cos(t), np.sin(t), 0 * t], 1)  # noqa: E731
    g = lambda t: np.stack([np.cos(t), np.sin(t) * np.cos(beta), np.sin(t) * np.sin(beta)], 1)  # noqa: E731
    rho, a, b = extension_rho(f, g)
    assert b == pytest.approx(4 * np.pi, rel=1e-9)
    assert a == pytest.approx(np.pi * (2 - 2 * np.cos(beta)), rel=1e-8)
    assert rho == pytest.approx(np.sqrt((2 - 2 * np.cos(beta)) / 32), rel=1e-8)


def test_extension_errors():
    pair = sphere_pair()
    f = lambda t: np.stack([np.cos(t), np.sin(t), 0 * t], 1)  # noqa: E731
    with pytest.raises(CurvesEqual):
        extension_build(f, f, 1.0, "full", pair)
    g = lambda t: np.stack([np.cos(t) * 0.6, np.sin(t) * 0.6, 0.8 + 0 * t], 1)  # noqa: E731
    with pytest.raises(NoAgreementPoint):
        extension_build(f, g, 1.0, "full", pair)


def test_reflection_is_c1_across_the_diameter():
    fn = lambda x, y: np.stack([np.sin(x + 2 * y), x * y + y], -1)  # noqa: E731
    x = np.linspace(-0.8, 0.8, 9)
    e = 1e-6
    above = reflect_values(fn, x, np.full_like(x, e))
    below = reflect_values(fn, x, np.full_like(x, -e))
    at = reflect_values(fn, x, np.zeros_like(x))
    np.testing.assert_allclose(above, below, atol=1e-5)
    # one-sided y-derivatives agree: d/dy[−3u(x,−y) + 4u(x,−y/2)] = 3u_y − 2u_y = u_y
    np.testing.assert_allclose((above - at) / e, (at - below) / e, atol=1e-4)


def test_reflect_extend_energy_constant():
    hm = build_half_disk_mesh(0.05)
    x, y = hm.vertices.T
    u = DiskMap(hm, np.stack([x, y * y], 1))
    r = reflect_extend(u)
    assert r.map.mesh.domain == "disk"
    assert 1.0 < r.constant < 50.0


def test_courant_lebesgue_on_identity(disk):
    # identity: ∫|∂_θ u|² dθ = 2π r², minimised at the inner radius; ∫_annulus |∇u|² = 2π(r2² − r1²)
    u = DiskMap(disk, disk.vertices.copy())
    e, _ = circle_energy(u, (0, 0), 0.5)
    assert e == pytest.approx(2 * np.pi * 0.25, rel=1e-3)
    cl = courant_lebesgue_radius(u, (0, 0), 0.2, 0.6)
    assert cl.radius == pytest.approx(0.2)
    assert cl.annulus_energy == pytest.approx(2 * np.pi * (0.36 - 0.04), rel=0.03)
    # oscillation bound holds whenever r2/r1 ≥ 2
    assert cl.oscillation_sq <= cl.oscillation_bound


def test_exchange_check_reports_finite_residuals(disk):
    rng = np.random.default_rng(11)
    u = _small_sphere_map(disk, rng, sphere_pair(), energy_range=(0.05, 0.1))
    f1 = make_ball_family([("interior", (-0.3, 0.0), 0.25)])
    f2 = make_ball_family([("interior", (0.3, 0.1), 0.3)])
    rep = exchange_check(u, f1, f2)
    assert not rep.violation
    assert rep.residual1 >= 0 and rep.residual2 >= 0
