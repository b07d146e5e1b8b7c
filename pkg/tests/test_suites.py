"""Reduced-size runs of the verification suites (the full sizes run in the acceptance tests)."""
import numpy as np
import pytest

from fbminmax import suites
from fbminmax.harmonic import SolverConfig
from fbminmax.mesh import build_disk_mesh


@pytest.mark.parametrize("kind", ["half_disk", "disk"])
def test_hardy_suite(kind):
    r = suites.hardy_suite(kind, n_fields=20, hs=(0.05, 0.025))
    assert r["pass"], r
    assert r["n_fields"] == 20
    assert r["min_margin"] >= 0


def test_convexity_suite():
    r = suites.convexity_suite(n_solves=3, n_competitors=3, n_flat=2)
    assert r["pass"], r
    assert r["max_energy"] <= 0.3


def test_uniqueness_suite():
    r = suites.uniqueness_suite(n_problems=1, n_inits=2)
    assert r["pass"], r
    assert len(r["distances"][0]) == 8


def test_exchange_suite():
    r = suites.exchange_suite(n_configs=4)
    assert r["pass"], r


def test_extension_suite():
    # structural properties only; stability of the fitted K is an acceptance check
    r = suites.extension_suite(n_pairs=10)
    assert r["max_rho_rel_error"] < 1e-8
    assert r["max_K_variation_across_R"] < 1e-9
    assert r["K_min"] > 0


def test_regularity_suite():
    r = suites.regularity_suite(n_solves=2, hs=(0.1, 0.05))
    assert r["pass"], r


def test_bubble_suite():
    r = suites.bubble_suite(scales=(0.08, 0.04))
    assert r["pass"], r
    assert r["n_interior_bubbles"] == 1


def test_small_sphere_maps_hit_their_energy_window():
    rng = np.random.default_rng(0)
    from fbminmax.energy import dirichlet_energy
    m = build_disk_mesh(0.1)
    for _ in range(5):
        u = suites._small_sphere_map(m, rng, suites.sphere_pair(), energy_range=(0.1, 0.2))
        assert 0.1 - 1e-6 <= dirichlet_energy(u) <= 0.2 + 1e-6
        np.testing.assert_allclose(np.linalg.norm(u.values, axis=1), 1.0)


def test_rho_oracle_matches_solver_formula():
    from fbminmax.harmonic import extension_rho
    rng = np.random.default_rng(4)
    f, g, df, dg = suites.random_curve_pair(rng)
    rho = extension_rho(f, g, "full", 400)[0]
    assert suites.rho_oracle(df, dg, "full", 4000) == pytest.approx(rho, rel=1e-6)
