"""Randomized verification suites shared by the acceptance tests and the ``verify`` CLI mode.

Each suite returns a plain dict with a boolean ``pass`` entry, the measured
residuals and the knobs it ran with, so that reports are JSON-serialisable.
"""

from __future__ import annotations

import logging
import time

import numpy as np

from .analysis import (boundary_bubble_map, decompose, energy_identity_check, interior_bubble_energy,
                       interior_bubble_map, neck_profile)
from .energy import dirichlet_energy, hardy_disk, hardy_half_disk
from .geometry import ManifoldPair, flat_subspace, sphere, unit_ball_pair
from .harmonic import (SolverConfig, clamped_region, convexity_check, epsilon_regularity_check, exchange_check,
                       extension_build, extension_rho, solve_constrained, whole_region)
from .mesh import (DiskMap, FamilyError, build_disk_mesh, build_graded_mesh, build_half_disk_mesh, constant_map,
                   make_ball_family, region_energy)
from .sweepout import MinmaxConfig, minmax_run, slice_diagnostics, unit_ball_sweepout

log = logging.getLogger(__name__)

NORTH = np.array([0.0, 0.0, 1.0])


def _poly_features(x, y, order: int) -> np.ndarray:
    return np.stack([x**i * y**j for i in range(order + 1) for j in range(order + 1 - i)], axis=1)


def random_smooth(x, y, rng: np.random.Generator, p: int, order: int = 3, scale: float = 1.0) -> np.ndarray:
    """Random polynomial field ``R² → R^p`` of total degree ``order``."""
    F = _poly_features(x, y, order)
    C = rng.normal(size=(F.shape[1], p)) / (1 + np.arange(F.shape[1]))[:, None]
    return scale * F @ C


def sphere_pair() -> ManifoldPair:
    S = sphere(1.0, 3)
    return ManifoldPair(S, S, NORTH)


def flat_pair() -> ManifoldPair:
    return ManifoldPair(flat_subspace(3, 3), flat_subspace(2, 3), np.zeros(3))


def _small_sphere_map(mesh, rng, pair, energy_range=(0.05, 0.25), clamped=True) -> DiskMap:
    """``π_{S²}(e₃ + s·ξ)`` with ``ξ`` a random polynomial and ``s`` tuned into ``energy_range``."""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    target = rng.uniform(*energy_range)
    constrained = np.zeros(mesh.n_vertices, dtype=bool) if clamped else None

    def make(s):
        v = NORTH + s * xi
        return DiskMap(mesh, v / np.linalg.norm(v, axis=1, keepdims=True), pair, constrained)

    # the energy saturates as s grows; redraw ξ until the target is reachable
    while True:
        xi = random_smooth(x, y, rng, 3, order=2)
        xi[:, 2] = 0.0
        lo, hi = 0.0, 1.0
        while dirichlet_energy(make(hi)) < target and hi < 1e3:
            hi *= 2
        if dirichlet_energy(make(hi)) >= target:
            break
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if dirichlet_energy(make(mid)) < target else (lo, mid)
    return make(lo)


# ---------------------------------------------------------------------------
# Hardy inequalities
# ---------------------------------------------------------------------------
def _hardy_fields(mesh, rng, n, kind):
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    r2 = x * x + y * y
    zero = mesh.boundary_loop if kind == "disk" else mesh.arc_vertices
    for k in range(n):
        if k % 2 == 0:
            v = (1 - r2) * random_smooth(x, y, rng, 1, order=rng.integers(0, 6))[:, 0]
        else:
            v = rng.normal(size=mesh.n_vertices) * rng.uniform(0.1, 2.0)
        v[zero] = 0.0
        yield DiskMap(mesh, v[:, None])


def hardy_suite(kind: str = "half_disk", n_fields: int = 1000, hs=(0.05, 0.025), seed: int = 0,
                tol: float = 1e-6) -> dict:
    """Random admissible fields plus the test function ``1 − r²`` against its exact values."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    if kind == "half_disk":
        build, fn, oracle = build_half_disk_mesh, hardy_half_disk, (4.0 / 3.0, np.pi**2 / 2)
    else:
        build, fn, oracle = build_disk_mesh, hardy_disk, (17 * np.pi / 24, 2 * np.pi)
    worst_margin, worst_ratio, count = np.inf, 0.0, 0
    test_fn = {}
    per = n_fields // len(hs)
    for h in hs:
        mesh = build(h)
        for u in _hardy_fields(mesh, rng, per, "disk" if kind == "disk" else "half"):
            lhs, rhs = fn(u)
            worst_margin = min(worst_margin, rhs + tol - lhs)
            worst_ratio = max(worst_ratio, lhs / rhs if rhs > 0 else 0.0)
            count += 1
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        lhs, rhs = fn(DiskMap(mesh, (1 - x * x - y * y)[:, None]))
        test_fn[str(h)] = [lhs, rhs]
    finest = test_fn[str(min(hs))]
    rel = [abs(finest[0] - oracle[0]) / oracle[0], abs(finest[1] - oracle[1]) / oracle[1]]
    ok = bool(worst_margin >= 0 and max(rel) < 0.01)
    return {"pass": ok, "kind": kind, "n_fields": count, "min_margin": float(worst_margin),
            "max_ratio": float(worst_ratio), "test_function": test_fn, "oracle": list(oracle),
            "test_function_rel_error": rel, "runtime_s": time.perf_counter() - t0}


# ---------------------------------------------------------------------------
# energy convexity
# ---------------------------------------------------------------------------
def _competitor(u: DiskMap, rng, amp: float) -> DiskMap:
    x, y = u.mesh.vertices[:, 0], u.mesh.vertices[:, 1]
    bump = (1 - x * x - y * y)[:, None] * random_smooth(x, y, rng, u.p, order=3)
    bump /= max(np.max(np.abs(bump)), 1e-300)
    v = u.values + amp * bump
    v = u.pair.N.project(v, check=False)
    d = ~np.zeros(u.mesh.n_vertices, bool)
    d[u.mesh.boundary_loop] = False
    out = u.with_values(np.where(d[:, None], v, u.values))
    return out


def convexity_suite(n_solves: int = 100, n_competitors: int = 10, h: float = 0.05, seed: int = 0,
                    tol: float = 1e-8, flat_tol: float = 1e-10, n_flat: int = 10,
                    config: SolverConfig = SolverConfig()) -> dict:
    """Sphere-target Dirichlet solves with ``E ≤ ε₀`` against random competitors; flat Pythagoras."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    mesh = build_disk_mesh(h)
    pair = sphere_pair()
    worst, energies = np.inf, []
    for _ in range(n_solves):
        u0 = _small_sphere_map(mesh, rng, pair)
        res = solve_constrained(u0, clamped_region(u0), config)
        u = u0.with_values(res.values)
        energies.append(res.energy)
        for _ in range(n_competitors):
            v = _competitor(u, rng, rng.uniform(0.02, 0.3))
            worst = min(worst, convexity_check(u, v))
    fp = flat_pair()
    worst_flat = 0.0
    for _ in range(n_flat):
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        u0 = DiskMap(mesh, random_smooth(x, y, rng, 3), fp, np.zeros(mesh.n_vertices, bool))
        res = solve_constrained(u0, clamped_region(u0), config)
        u = u0.with_values(res.values)
        for _ in range(n_competitors):
            v = _competitor(u, rng, rng.uniform(0.05, 1.0))
            Ev, Eu = 2 * dirichlet_energy(v), 2 * dirichlet_energy(u)
            Ed = 2 * dirichlet_energy(u.with_values(v.values - u.values))
            worst_flat = max(worst_flat, abs((Ev - Eu) - Ed))
    ok = bool(worst >= -tol and worst_flat <= flat_tol and max(energies) <= config.eps0)
    return {"pass": ok, "n_solves": n_solves, "n_competitors": n_competitors, "min_residual": float(worst),
            "max_energy": float(max(energies)), "max_flat_pythagoras_error": float(worst_flat),
            "runtime_s": time.perf_counter() - t0}


# ---------------------------------------------------------------------------
# uniqueness / continuity
# ---------------------------------------------------------------------------
def uniqueness_suite(n_problems: int = 5, n_inits: int = 3, h: float = 0.05, seed: int = 0, tol: float = 1e-6,
                     config: SolverConfig = SolverConfig()) -> dict:
    """Random initial guesses agree; perturbing data by ``2^{-j}`` moves the solution monotonically less."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    mesh = build_disk_mesh(h)
    pair = sphere_pair()
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    interior = ~mesh.is_boundary
    max_dup, monotone, dists_all = 0.0, True, []
    for _ in range(n_problems):
        u0 = _small_sphere_map(mesh, rng, pair)
        reg = clamped_region(u0)
        base = solve_constrained(u0, reg, config).values
        for _ in range(n_inits):
            init = u0.values.copy()
            noise = 0.05 * rng.normal(size=init.shape)
            init[interior] = pair.N.project(init[interior] + noise[interior], check=False)
            other = solve_constrained(u0, reg, config, init=init).values
            max_dup = max(max_dup, float(np.max(np.linalg.norm(other - base, axis=1))))
        eta = random_smooth(x, y, rng, 3, order=2)
        eta /= np.max(np.abs(eta))
        d = []
        for j in range(1, 9):
            v = u0.values + 0.1 * 2.0**-j * eta
            us = u0.with_values(v / np.linalg.norm(v, axis=1, keepdims=True))
            sol = solve_constrained(us, clamped_region(us), config).values
            d.append(float(np.max(np.linalg.norm(sol - base, axis=1))))
        dists_all.append(d)
        monotone &= bool(np.all(np.diff(d) < 0))
    ok = bool(max_dup <= tol and monotone)
    return {"pass": ok, "max_duplicate_distance": max_dup, "monotone": monotone, "distances": dists_all,
            "runtime_s": time.perf_counter() - t0}


# ---------------------------------------------------------------------------
# exchange inequalities
# ---------------------------------------------------------------------------
def _random_family(u: DiskMap, rng, budget: float, max_tries: int = 200):
    for _ in range(max_tries):
        k = rng.integers(1, 3)
        spec = []
        for _ in range(k):
            if rng.uniform() < 0.5:
                r = rng.uniform(0.15, 0.4)
                rr = rng.uniform(0, 1 - r - 0.02)
                a = rng.uniform(0, 2 * np.pi)
                spec.append({"kind": "interior", "center": [rr * np.cos(a), rr * np.sin(a)], "radius": r})
            else:
                r = rng.uniform(0.2, 0.5)
                a = rng.uniform(0, 2 * np.pi)
                s = np.sqrt(1 + r * r)
                spec.append({"kind": "half", "center": [s * np.cos(a), s * np.sin(a)], "radius": r})
        try:
            f = make_ball_family(spec)
        except FamilyError:
            continue
        if region_energy(u, f) <= budget:
            return f
    return None


def exchange_suite(n_configs: int = 50, h: float = 0.05, seed: int = 0, kappa_floor: float = 0.05,
                   config: SolverConfig = SolverConfig()) -> dict:
    """Both exchange inequalities with measured ``κ`` on random ``(u, 𝓑₁, 𝓑₂)`` with family energy ``≤ ε₀/3``."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    mesh = build_disk_mesh(h)
    pair = unit_ball_pair(3)
    rows, violations = [], 0
    while len(rows) < n_configs:
        u = _small_sphere_map(mesh, rng, pair, (0.1, 0.3), clamped=False)
        f1 = _random_family(u, rng, config.eps0 / 3)
        f2 = _random_family(u, rng, config.eps0 / 3)
        if f1 is None or f2 is None:
            continue
        rep = exchange_check(u, f1, f2, kappa_floor, config)
        violations += int(rep.violation)
        rows.append({"kappa_max1": rep.kappa_max1, "kappa_max2": rep.kappa_max2, "residual1": rep.residual1,
                     "residual2": rep.residual2, "violation": rep.violation})
    k = [min(r["kappa_max1"], r["kappa_max2"]) for r in rows]
    return {"pass": violations == 0, "n_configs": n_configs, "violations": violations, "kappa_floor": kappa_floor,
            "min_kappa_max": float(np.min(k)), "min_residual": float(min(min(r["residual1"], r["residual2"]) for r in rows)),
            "runtime_s": time.perf_counter() - t0}


# ---------------------------------------------------------------------------
# extension lemma
# ---------------------------------------------------------------------------
def random_curve_pair(rng: np.random.Generator, n_modes: int = 3, amp: float = 0.3, gap: float = 0.15):
    """Curves ``f, g`` on the unit sphere agreeing at ``θ = 0``, with analytic ``θ``-derivatives.

    Returns ``(f, g, df, dg)``; each maps angles ``(n,)`` to ``(n, 3)``.
    """
    A = rng.normal(size=(n_modes, 2, 3)) * amp / (1 + np.arange(n_modes))[:, None, None]
    Bc = rng.normal(size=(n_modes, 2, 3)) * gap / (1 + np.arange(n_modes))[:, None, None]
    A[..., 2] = 0.0
    ks = np.arange(1, n_modes + 1)

    def trig(t, C):
        t = np.asarray(t, dtype=float)[:, None]
        return np.cos(ks * t) @ C[:, 0] + np.sin(ks * t) @ C[:, 1]

    def dtrig(t, C):
        t = np.asarray(t, dtype=float)[:, None]
        return (-ks * np.sin(ks * t)) @ C[:, 0] + (ks * np.cos(ks * t)) @ C[:, 1]

    def raw_f(t):
        return NORTH + trig(t, A)

    def raw_df(t):
        return dtrig(t, A)

    def raw_g(t):
        w = (1 - np.cos(np.asarray(t, dtype=float)))[:, None]
        return raw_f(t) + w * trig(t, Bc)

    def raw_dg(t):
        t = np.asarray(t, dtype=float)
        w = (1 - np.cos(t))[:, None]
        return raw_df(t) + np.sin(t)[:, None] * trig(t, Bc) + w * dtrig(t, Bc)

    def normed(c, dc):
        def val(t):
            v = c(t)
            return v / np.linalg.norm(v, axis=1, keepdims=True)

        def der(t):
            v, dv = c(t), dc(t)
            n = np.linalg.norm(v, axis=1, keepdims=True)
            vh = v / n
            return (dv - np.sum(vh * dv, axis=1, keepdims=True) * vh) / n

        return val, der

    f, df = normed(raw_f, raw_df)
    g, dg = normed(raw_g, raw_dg)
    return f, g, df, dg


def rho_oracle(df, dg, kind: str = "full", n: int = 4000) -> float:
    """Closed-form ratio from analytic derivatives and a composite trapezoid rule."""
    span = np.pi if kind == "half" else 2 * np.pi
    t = np.linspace(0, span, n + 1)
    w = np.full(n + 1, span / n)
    if kind == "half":
        w[0] = w[-1] = span / (2 * n)
    else:
        t, w = t[:-1], w[:-1]
    a = np.sum(w * np.sum((df(t) - dg(t)) ** 2, axis=1))
    b = np.sum(w * (np.sum(df(t) ** 2, axis=1) + np.sum(dg(t) ** 2, axis=1)))
    return float(np.sqrt(a / (8 * b)))


def extension_suite(n_pairs: int = 50, Rs=(0.5, 1.0, 2.0), seed: int = 0, rho_tol: float = 1e-8,
                    stability: float = 0.25) -> dict:
    """``ρ`` against the closed formula and stability of the fitted constant ``K``.

    ``K`` is fitted as the largest measured ratio ``∫|∇w|² / (√a √b)``; it is
    required to agree within ``±stability`` when fitted separately for each
    ``R`` and on each half of the curve pairs.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    S = sphere(1.0, 3)
    pair = ManifoldPair(S, S, NORTH)
    rho_err, K = 0.0, np.zeros((n_pairs, len(Rs)))
    for i in range(n_pairs):
        f, g, df, dg = random_curve_pair(rng)
        rho, _, _ = extension_rho(f, g, "full")
        rho_err = max(rho_err, abs(rho - rho_oracle(df, dg)) / rho)
        for j, R in enumerate(Rs):
            res = extension_build(f, g, R, "full", pair)
            K[i, j] = res.K_measured
    K_fit = float(K.max())
    fits = [float(K[:, j].max()) for j in range(len(Rs))]
    half = n_pairs // 2
    fits += [float(K[:half].max()), float(K[half:].max())]
    spread = max(abs(k / K_fit - 1) for k in fits)
    scale_var = float(np.max(np.abs(K / K[:, [list(Rs).index(1.0) if 1.0 in Rs else 0]] - 1)))
    ok = bool(rho_err <= rho_tol and spread <= stability)
    return {"pass": ok, "n_pairs": n_pairs, "R": list(Rs), "max_rho_rel_error": float(rho_err), "K_fit": K_fit,
            "K_fits": fits, "K_spread": float(spread), "max_K_variation_across_R": scale_var,
            "K_min": float(K.min()), "runtime_s": time.perf_counter() - t0}


# ---------------------------------------------------------------------------
# ε-regularity
# ---------------------------------------------------------------------------
def regularity_suite(n_solves: int = 20, hs=(0.1, 0.05, 0.025), seed: int = 0, radius: float = 0.5,
                     max_variation: float = 0.1, config: SolverConfig = SolverConfig()) -> dict:
    """Half-disk free-boundary solves (data on the arc, free on the diameter) across refinements.

    The boundedness surrogate is ``sup_{𝔻₊∩𝔻_r}|∇u| / ‖∇u‖_{L²}``; its relative
    change between consecutive refinements must stay below ``max_variation``.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    pair = unit_ball_pair(3)
    meshes = [build_half_disk_mesh(h) for h in hs]
    ratios = np.zeros((n_solves, len(hs)))
    energies = np.zeros((n_solves, len(hs)))
    for i in range(n_solves):
        C = rng.normal(size=(6, 2)) * 0.3 / (1 + np.arange(6))[:, None]
        target = rng.uniform(0.02, 0.2)
        for j, mesh in enumerate(meshes):
            x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
            F = _poly_features(x, y, 2)
            xi = np.zeros((mesh.n_vertices, 3))
            xi[:, :2] = F @ C
            scale = np.sqrt(target / max(0.5 * np.sum(C**2), 1e-12))

            def make(s):
                v = NORTH + s * xi
                return DiskMap(mesh, v / np.linalg.norm(v, axis=1, keepdims=True), pair)

            u0 = make(scale)
            res = solve_constrained(u0, whole_region(u0), config, override=True)
            u = u0.with_values(res.values)
            ratios[i, j] = epsilon_regularity_check(u, radius)
            energies[i, j] = res.energy
    var = np.abs(np.diff(ratios, axis=1)) / ratios[:, 1:]
    ok = bool(np.max(var) < max_variation)
    return {"pass": ok, "n_solves": n_solves, "h": list(hs), "max_relative_variation": float(np.max(var)),
            "per_refinement_max_variation": np.max(var, axis=0).tolist(), "max_energy": float(energies.max()),
            "ratios_mean": ratios.mean(axis=0).tolist(), "runtime_s": time.perf_counter() - t0}


# ---------------------------------------------------------------------------
# bubbles and energy identity
# ---------------------------------------------------------------------------
def bubble_suite(scales=(0.08, 0.04, 0.02, 0.01), center=(0.2, -0.1), h: float = 0.05, rel_tol: float = 0.05,
                 control_tol: float = 0.1, neck_tol: float = 1e-12) -> dict:
    """Synthetic interior and boundary bubble sequences: identity residual, negative control, neck identity."""
    t0 = time.perf_counter()
    center = np.asarray(center, dtype=float)
    seq = [interior_bubble_map(build_graded_mesh(h, [center], 0.1 * s), center, s) for s in scales]
    last = seq[-1]
    base = constant_map(last.mesh, NORTH)
    d = decompose(last, base=base)
    res = energy_identity_check(seq, d)
    total = dirichlet_energy(last)
    n_int = len(d.interior_bubbles)
    rel = float(res[-1] / total)
    ctrl = d.without(0) if d.bubbles else d
    ctrl_res = float(energy_identity_check([last], ctrl)[0])
    omitted = d.bubbles[0].energy if d.bubbles else 0.0
    ctrl_rel = abs(ctrl_res - omitted) / omitted if omitted else np.inf
    # two boundary bubbles of a Blaschke product, base measured from the map itself
    a = np.array([[1.0, 0.0], [-0.6, 0.8]])
    bm = build_graded_mesh(h, a, 0.002)
    bmap = boundary_bubble_map(bm, a, [0.02, 0.03])
    db = decompose(bmap)
    b_rel = float(energy_identity_check([bmap], db)[0] / dirichlet_energy(bmap))
    # neck table identity: angular + radial = 2 × total on each annulus
    prof = neck_profile(last, center, scales[-1], 2.0)
    neck_err = max(abs(r["angular"] + r["radial"] - 2 * r["total"]) for r in prof.rows)
    ok = bool(n_int == 1 and rel < rel_tol and ctrl_rel < control_tol and neck_err <= neck_tol
              and len(db.boundary_bubbles) == 2 and b_rel < rel_tol)
    return {"pass": ok, "scales": list(scales), "residuals": res.tolist(), "relative_residual": rel,
            "exact_energy": interior_bubble_energy(center, scales[-1]), "total_energy": total,
            "n_interior_bubbles": n_int, "control_residual": ctrl_res, "omitted_energy": omitted,
            "control_relative_error": float(ctrl_rel), "boundary_relative_residual": b_rel,
            "n_boundary_bubbles": len(db.boundary_bubbles), "neck_identity_error": float(neck_err),
            "decomposition": d.to_dict(), "runtime_s": time.perf_counter() - t0}


# ---------------------------------------------------------------------------
# unit-ball width benchmark
# ---------------------------------------------------------------------------
def width_benchmark(h: float = 0.05, grid_size: int = 9, gamma: float = 1.5, iters: int = 50, seed: int = 0,
                    eps0: float = 0.3, rel_tol: float = 0.05, defect_tol: float = 0.02 * np.pi,
                    hopf_tol: float = 0.05, callback=None) -> dict:
    """``N = B³``, ``M = S²``: the flat-disk sweepout with stretched slices ``|x|^{γ−1}x``."""
    t0 = time.perf_counter()
    from .sweepout import TighteningConfig
    mesh = build_disk_mesh(h)
    s = unit_ball_sweepout(mesh, grid_size, gamma)
    cfg = MinmaxConfig(iters=iters, tightening=TighteningConfig(eps0=eps0, seed=seed), solver=SolverConfig(eps0=eps0))
    res = minmax_run(s, iters, cfg, callback)
    E = np.asarray(res.max_energy_series)
    monotone = bool(np.all(np.diff(E) <= 0))
    diag = slice_diagnostics(res.sequence[-1])
    rel = abs(res.width - np.pi) / np.pi
    ok = bool(rel < rel_tol and monotone and diag["defect"] < defect_tol and diag["hopf_interior_l1"] < hopf_tol)
    return {"pass": ok, "width": res.width, "relative_error": rel, "monotone": monotone,
            "iterations": len(res.accepted), "max_energy_series": res.max_energy_series,
            "max_area_series": res.max_area_series, "final_slice": diag, "summary": res.summary(),
            "runtime_s": time.perf_counter() - t0, "result": res}
