"""Sweepouts of disk maps, their regularisation, covering-based tightening and the min-max driver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import (area, conformality_defect, dirichlet_energy, energy_density, hopf_differential, mass_matrix,
                     stiffness_matrix)
from .geometry import ManifoldPair, smoothstep5, unit_ball_pair
from .harmonic import (DEFAULT_SOLVER, EnergyAboveThreshold, SolverConfig, SolverError, replace)
from .mesh import (BallFamily, DiskMap, DiskMesh, Overlap, FamilyError,
                   make_ball_family, region_energy, scale_family)

log = logging.getLogger(__name__)


class ToleranceUnreachable(RuntimeError):
    pass


class CoverFailure(RuntimeError):
    pass


class MeshTangled(RuntimeError):
    pass


def tau_for_dim(dim: int) -> int:
    """Covering multiplicity used for parameter balls of dimension 1 or 2."""
    if dim == 1:
        return 2
    if dim == 2:
        return 5
    raise ValueError("parameter dimension must be 1 or 2")


# ---------------------------------------------------------------------------
# data model
# ---------------------------------------------------------------------------
@dataclass(eq=False)
class Sweepout:
    """Family of disk maps sampled on a grid of the parameter ball ``𝔹^{dim}``."""

    parameter_dim: int
    grid: np.ndarray  # (n, dim)
    slices: list
    base_index: int
    pair: ManifoldPair
    label: str = ""

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float).reshape(len(self.slices), self.parameter_dim)

    @property
    def mesh(self) -> DiskMesh:
        return self.slices[0].mesh

    @property
    def boundary_mask(self) -> np.ndarray:
        return np.linalg.norm(self.grid, axis=1) >= 1.0 - 1e-12

    @property
    def spacing(self) -> float:
        if len(self.grid) < 2:
            return 1.0
        from scipy.spatial import cKDTree
        d, _ = cKDTree(self.grid).query(self.grid, k=2)
        return float(np.min(d[:, 1]))

    def neighbors(self) -> list[tuple[int, int]]:
        if len(self.grid) < 2:
            return []
        from scipy.spatial import cKDTree
        return sorted(cKDTree(self.grid).query_pairs(1.5 * self.spacing))

    def copy(self) -> "Sweepout":
        return Sweepout(self.parameter_dim, self.grid.copy(), [s.copy() for s in self.slices], self.base_index,
                        self.pair, self.label)

    def energies(self) -> np.ndarray:
        return np.array([dirichlet_energy(s) for s in self.slices])

    def areas(self) -> np.ndarray:
        return np.array([area(s) for s in self.slices])

    def interpolate(self, t) -> DiskMap:
        """Piecewise-linear (dim 1) or nearest-neighbour blend (dim 2) slice at parameter ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.parameter_dim == 1:
            g = self.grid[:, 0]
            order = np.argsort(g)
            g = g[order]
            k = int(np.clip(np.searchsorted(g, t[0]) - 1, 0, len(g) - 2))
            lam = (t[0] - g[k]) / (g[k + 1] - g[k])
            a, b = self.slices[order[k]], self.slices[order[k + 1]]
            vals = (1 - lam) * a.values + lam * b.values
        else:
            d = np.linalg.norm(self.grid - t, axis=1)
            idx = np.argsort(d)[:3]
            w = 1.0 / np.maximum(d[idx], 1e-12)
            w /= w.sum()
            vals = sum(wi * self.slices[i].values for wi, i in zip(w, idx))
        s0 = self.slices[0]
        out = s0.with_values(vals)
        out.values = self.pair.N.project(out.values, check=False)
        c = out.constrained
        out.values[c] = self.pair.M.project(out.values[c], check=False)
        return out


def _slice_distance(a: DiskMap, b: DiskMap) -> float:
    """Energy + sup distance ``‖∇(a−b)‖_{L²} + sup|a−b|``."""
    d = a.with_values(a.values - b.values)
    return float(np.sqrt(2 * dirichlet_energy(d)) + a.sup_distance(b))


def parameter_grid(dim: int, n: int) -> np.ndarray:
    """Uniform grid of the closed parameter ball (odd ``n`` so that 0 is a node)."""
    if dim == 1:
        return np.linspace(-1.0, 1.0, n)[:, None]
    s = np.linspace(-1.0, 1.0, n)
    X, Y = np.meshgrid(s, s)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    inside = pts[np.linalg.norm(pts, axis=1) < 1.0 - 1e-9]
    m = max(8, 2 * n)
    ang = 2 * np.pi * np.arange(m) / m
    ring = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return np.concatenate([inside, ring])


def sweepout_from_function(mesh: DiskMesh, pair: ManifoldPair, fn: Callable, dim: int = 1, n_grid: int = 11,
                           base_index: Optional[int] = None, label: str = "") -> Sweepout:
    """Build a sweepout from ``fn(t, x, y) -> (n_vertices, p)``."""
    grid = parameter_grid(dim, n_grid)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    slices = [DiskMap(mesh, np.asarray(fn(t if dim > 1 else t[0], x, y), dtype=float), pair) for t in grid]
    if base_index is None:
        bd = np.flatnonzero(np.linalg.norm(grid, axis=1) >= 1.0 - 1e-12)
        base_index = int(bd[-1]) if len(bd) else 0
    return Sweepout(dim, grid, slices, base_index, pair, label)


def constant_sweepout(mesh: DiskMesh, pair: ManifoldPair, dim: int = 1, n_grid: int = 5) -> Sweepout:
    m0 = pair.m0
    return sweepout_from_function(mesh, pair, lambda t, x, y: np.tile(m0, (len(x), 1)), dim, n_grid,
                                  label="constant")


def unit_ball_sweepout(mesh: DiskMesh, n_grid: int = 11, gamma: float = 1.0,
                       pair: Optional[ManifoldPair] = None) -> Sweepout:
    """Horizontal flat disks of the unit ball, ``σ_t(x) = (√(1−t²)·|x|^{γ−1}x, t)``.

    ``γ = 1`` gives conformal slices of energy ``π(1−t²)``; other values give
    energy ``π(1−t²)(γ²+1)/(2γ)`` with unchanged area.
    """
    pair = pair or unit_ball_pair(3)

    def fn(t, x, y):
        r = np.hypot(x, y)
        s = np.sqrt(max(1.0 - t * t, 0.0)) * np.where(r > 0, r ** (gamma - 1.0), 0.0 if gamma > 1 else 1.0)
        return np.stack([s * x, s * y, np.full_like(x, t)], axis=1)

    sw = sweepout_from_function(mesh, pair, fn, 1, n_grid, label=f"unit_ball_flat(gamma={gamma})")
    sw.base_index = int(np.argmax(sw.grid[:, 0]))  # t = 1, the constant north pole
    return sw


def ellipsoid_sweepout(mesh: DiskMesh, semi_axes, axis: int = 2, n_grid: int = 11,
                       pair: Optional[ManifoldPair] = None) -> Sweepout:
    """Flat cross-sections of a solid ellipsoid orthogonal to coordinate ``axis``."""
    from .geometry import ellipsoid, solid
    a = np.asarray(semi_axes, dtype=float)
    if pair is None:
        E = ellipsoid(a)
        m0 = np.zeros(3)
        m0[axis] = a[axis]
        pair = ManifoldPair(solid(E), E, m0)
    others = [i for i in range(3) if i != axis]

    def fn(t, x, y):
        s = np.sqrt(max(1.0 - t * t, 0.0))
        out = np.zeros((len(x), 3))
        out[:, others[0]] = a[others[0]] * s * x
        out[:, others[1]] = a[others[1]] * s * y
        out[:, axis] = a[axis] * t
        return out

    sw = sweepout_from_function(mesh, pair, fn, 1, n_grid, label=f"ellipsoid_flat(axis={axis})")
    sw.base_index = int(np.argmax(sw.grid[:, 0]))
    return sw


# ---------------------------------------------------------------------------
# validation and width
# ---------------------------------------------------------------------------
def validate_sweepout(s: Sweepout, modulus_bound: Optional[float] = None, tol: float = 1e-8) -> dict:
    """Check endpoint constancy, base point, admissibility and adjacent-slice continuity.

    The continuity modulus (largest energy+sup distance between grid neighbours)
    is always reported; it is only flagged when ``modulus_bound`` is given.
    """
    violations = []
    for i in np.flatnonzero(s.boundary_mask):
        v = s.slices[i].values
        if np.max(np.ptp(v, axis=0)) > tol:
            violations.append({"kind": "nonconstant_endpoint", "index": int(i)})
        elif s.pair.M.residual(v[:1])[0] > tol:
            violations.append({"kind": "endpoint_off_M", "index": int(i)})
    b = s.slices[s.base_index].values
    if np.max(np.abs(b - s.pair.m0)) > tol:
        violations.append({"kind": "base_point", "index": int(s.base_index)})
    for i, sl in enumerate(s.slices):
        if not sl.is_valid(1e-6):
            violations.append({"kind": "inadmissible", "index": i, **sl.violations()})
    mod = 0.0
    for i, j in s.neighbors():
        mod = max(mod, _slice_distance(s.slices[i], s.slices[j]))
    if modulus_bound is not None and mod > modulus_bound:
        violations.append({"kind": "continuity", "modulus": mod})
    return {"valid": not violations, "violations": violations, "modulus": mod}


def width_estimate(s: Sweepout) -> tuple[float, float, np.ndarray]:
    """``(max area, max energy, parameter of the max-energy slice)``."""
    E, A = s.energies(), s.areas()
    if np.max(E) <= 0:
        return 0.0, 0.0, s.grid[s.base_index]
    return float(A.max()), float(E.max()), s.grid[int(np.argmax(E))]


# ---------------------------------------------------------------------------
# mollify-and-plateau regularisation
# ---------------------------------------------------------------------------
def plateau_map(points: np.ndarray, rho: float) -> np.ndarray:
    """``Φ_ρ``: doubling on ``r ≤ ρ/2``, constant radius ``ρ`` on ``[ρ/2, ρ]``, identity beyond."""
    pts = np.asarray(points, dtype=float)
    r = np.linalg.norm(pts, axis=-1, keepdims=True)
    safe = np.where(r > 0, r, 1.0)
    out = np.where(r <= rho / 2, 2 * pts, np.where(r <= rho, rho * pts / safe, pts))
    return out


def _cutoff(r: np.ndarray) -> np.ndarray:
    """1 on ``r ≤ 1/4``, 0 on ``r ≥ 1/2``."""
    return 1.0 - smoothstep5((r - 0.25) / 0.25)


def mollify(u: DiskMap, t_heat: float) -> DiskMap:
    """One implicit heat step near the centre, blended out before ``r = 1/2``, then projected to ``N``."""
    if t_heat <= 0:
        return u.copy()
    mesh = u.mesh
    K = stiffness_matrix(mesh)
    Ml = sp.diags(np.asarray(mass_matrix(mesh).sum(axis=1)).ravel())
    heat = spla.spsolve((Ml + t_heat * K).tocsc(), Ml @ u.values).reshape(u.values.shape)
    th = _cutoff(np.linalg.norm(mesh.vertices, axis=1))[:, None]
    vals = th * heat + (1 - th) * u.values
    vals = u.pair.N.project(vals, check=False) if u.pair is not None else vals
    return u.with_values(vals)


def plateau_compose(u: DiskMap, rho: float) -> DiskMap:
    """``u ∘ Φ_ρ`` sampled at the vertices (exactly ``r``-independent on the plateau annulus)."""
    mesh = u.mesh
    X = mesh.vertices
    inner = np.linalg.norm(X, axis=1) < rho
    vals = u.values.copy()
    if np.any(inner):
        src = plateau_map(X[inner], rho)
        v = mesh.interpolate(u.values, src)
        vals[inner] = u.pair.N.project(v, check=False) if u.pair is not None else v
    return u.with_values(vals)


def _is_constant(u: DiskMap, tol: float = 1e-12) -> bool:
    return float(np.max(np.ptp(u.values, axis=0))) <= tol


def perturb_slice(u: DiskMap, rho: float) -> DiskMap:
    if _is_constant(u):
        return u.copy()
    return plateau_compose(mollify(u, 0.25 * rho * rho), rho)


def perturb_nonharmonic(s: Sweepout, eps: float, rho_max: float = 0.24, min_rho_cells: float = 2.0,
                        bisect_steps: int = 12) -> Sweepout:
    """Mollify each slice near the centre and compose with the plateau map ``Φ_ρ``.

    ``ρ`` is the largest value in ``[min_rho_cells·h, rho_max]`` (found by
    bisection) for which every slice moves by at most ``eps`` in energy+sup
    distance; the lower end keeps the plateau annulus at least
    ``min_rho_cells/2`` mesh cells wide.

    Raises
    ------
    ToleranceUnreachable
        If even the smallest resolvable ``ρ`` moves some slice by more than ``eps``.
    """
    h = s.mesh.h
    rho_min = min_rho_cells * h
    if rho_min > rho_max:
        raise ToleranceUnreachable(f"mesh too coarse (h={h}) to resolve a plateau below rho={rho_max}")

    def worst(rho):
        return max(_slice_distance(perturb_slice(sl, rho), sl) for sl in s.slices)

    if worst(rho_min) > eps:
        raise ToleranceUnreachable(f"perturbation with rho={rho_min:.3g} exceeds eps={eps:.3g}")
    lo, hi = rho_min, rho_max
    if worst(hi) <= eps:
        lo = hi
    else:
        for _ in range(bisect_steps):
            mid = 0.5 * (lo + hi)
            if worst(mid) <= eps:
                lo = mid
            else:
                hi = mid
    out = s.copy()
    out.slices = [perturb_slice(sl, lo) for sl in s.slices]
    out.label = f"{s.label}+plateau(rho={lo:.4g})"
    return out


def perturbation_distance(a: Sweepout, b: Sweepout) -> float:
    return max(_slice_distance(x, y) for x, y in zip(a.slices, b.slices))


# ---------------------------------------------------------------------------
# quasi-conformal reparametrisation
# ---------------------------------------------------------------------------
def _domain_energy_and_grad(Y: np.ndarray, T: np.ndarray, W: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Dirichlet energy of the P1 map with vertex values ``W`` on the domain mesh ``(Y, T)``.

    With ``D = [y1−y0, y2−y0]`` and ``J = W_e D⁻¹``, the triangle energy is
    ``¼ det D ‖J‖²`` and ``∂/∂D = ¼ det D (‖J‖² I − 2JᵀJ) D⁻ᵀ``.
    Returns ``(energy, gradient, min det)``.
    """
    y0, y1, y2 = Y[T[:, 0]], Y[T[:, 1]], Y[T[:, 2]]
    D = np.stack([y1 - y0, y2 - y0], axis=2)  # (nt, 2, 2), columns are edges
    det = D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0]
    mindet = float(det.min())
    if mindet <= 0:
        return np.inf, np.zeros_like(Y), mindet
    Dinv = np.stack([np.stack([D[:, 1, 1], -D[:, 0, 1]], 1), np.stack([-D[:, 1, 0], D[:, 0, 0]], 1)], 1) / det[:, None, None]
    We = np.stack([W[T[:, 1]] - W[T[:, 0]], W[T[:, 2]] - W[T[:, 0]]], axis=2)  # (nt, p, 2)
    J = We @ Dinv
    JJ = np.einsum("tpi,tpj->tij", J, J)
    nJ = np.trace(JJ, axis1=1, axis2=2)
    energy = float(np.sum(0.25 * det * nJ))
    gD = 0.25 * det[:, None, None] * (nJ[:, None, None] * np.eye(2) - 2 * JJ) @ np.transpose(Dinv, (0, 2, 1))
    G = np.zeros_like(Y)
    np.add.at(G, T[:, 1], gD[:, :, 0])
    np.add.at(G, T[:, 2], gD[:, :, 1])
    np.add.at(G, T[:, 0], -gD[:, :, 0] - gD[:, :, 1])
    return energy, G, mindet


def reparametrize_quasiconformal(u: DiskMap, n_steps: int = 60, rtol: float = 1e-7,
                                 return_info: bool = False):
    """Pre-compose ``u`` with a mesh diffeomorphism reducing ``E(u) − Area(u)``.

    Vertex values are kept while domain vertices move (boundary vertices along
    the circle, three of them fixed), which leaves the image area unchanged;
    the result is resampled onto the original mesh.  Steps that invert a
    triangle are rejected.
    """
    mesh = u.mesh
    if _is_constant(u) or mesh.domain != "disk":
        return (u.copy(), {"steps": 0}) if return_info else u.copy()
    X = mesh.vertices
    T = mesh.triangles
    W = u.values
    bl = mesh.boundary_loop
    nb = len(bl)
    fixed = bl[[0, nb // 3, (2 * nb) // 3]]
    is_b = mesh.is_boundary
    nv = mesh.n_vertices
    interior = np.flatnonzero(~is_b)
    mb_idx = np.flatnonzero(~np.isin(bl, fixed))
    moving_b = bl[mb_idx]
    ni, nm = len(interior), len(moving_b)
    Phat = sp.kron((stiffness_matrix(mesh) + 1e-2 * mass_matrix(mesh)).tocsr(), sp.identity(2)).tocsr()

    def basis(Y):
        # reduced coordinates z = (interior x, y interleaved, boundary angles) -> displacement of Y (2nv)
        rows = np.concatenate([2 * interior, 2 * interior + 1, 2 * moving_b, 2 * moving_b + 1])
        cols = np.concatenate([2 * np.arange(ni), 2 * np.arange(ni) + 1, 2 * ni + np.arange(nm), 2 * ni + np.arange(nm)])
        data = np.concatenate([np.ones(2 * ni), -Y[moving_b, 1], Y[moving_b, 0]])
        return sp.csr_matrix((data, (rows, cols)), shape=(2 * nv, 2 * ni + nm))

    Y = X.copy()
    ang = np.arctan2(X[bl, 1], X[bl, 0])
    f, G, _ = _domain_energy_and_grad(Y, T, W)
    f0 = f
    steps = 0
    for _ in range(n_steps):
        B = basis(Y)
        gz = B.T @ G.ravel()
        dz = -spla.spsolve((B.T @ Phat @ B).tocsc(), gz)
        slope = float(gz @ dz)
        if not slope < 0:
            break
        dY = (B @ dz).reshape(nv, 2)
        dang = dz[2 * ni:]
        scale = min(1.0, 0.5 * mesh.h / max(np.max(np.abs(dY)), 1e-300))
        t = scale
        accepted = False
        while t > 1e-8 * scale:
            Yn = Y.copy()
            Yn[interior] += t * dY[interior]
            an = ang.copy()
            an[mb_idx] += t * dang
            Yn[bl] = np.stack([np.cos(an), np.sin(an)], axis=1)
            fn, Gn, md = _domain_energy_and_grad(Yn, T, W)
            if md > 0 and fn <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        steps += 1
        rel = (f - fn) / max(f, 1e-300)
        Y, ang, f, G = Yn, an, fn, Gn
        if rel < rtol:
            break
    # resample onto the original vertices: new(x) = W-interpolant on the deformed mesh at x
    deformed = DiskMesh(Y, T, bl, mesh.h, mesh.domain)
    vals = deformed.interpolate(W, X)
    if u.pair is not None:
        vals = u.pair.N.project(vals, check=False)
        c = u.constrained
        vals[c] = u.pair.M.project(vals[c], check=False)
    vals[fixed] = W[fixed]
    out = u.with_values(vals)
    if conformality_defect(out) > conformality_defect(u):
        out = u.copy()
        steps = 0
    info = {"steps": steps, "domain_energy_before": f0, "domain_energy_after": f}
    return (out, info) if return_info else out


# ---------------------------------------------------------------------------
# families and tightening
# ---------------------------------------------------------------------------
@dataclass
class TighteningConfig:
    eps0: float = 0.3
    high_energy_fraction: float = 0.5
    interior_radii: tuple = (0.1, 0.16, 0.25)
    half_radii: tuple = (0.15, 0.25, 0.4)
    n_interior_centers: int = 24
    n_half_centers: int = 12
    max_balls: int = 8
    psi_families: int = 2
    seed: int = 0


@dataclass
class TighteningReport:
    max_energy_before: float
    max_energy_after: float
    max_area: float
    argmax: list
    drops: list
    families: list
    psi_samples: list = field(default_factory=list)
    skipped: int = 0

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class FamilyPlan:
    """Families ``B_j``, their parameter balls ``C_j`` and cutoffs ``r_j`` on the grid."""

    families: list  # BallFamily per j
    centers: list  # grid index t_j
    radii: np.ndarray  # radius of C_j
    cutoffs: np.ndarray  # (m, n_grid) values r_j(t)
    multiplicity: int
    tau: int
    scale: float  # support factor s (2C_j by default)
    selection_drops: list


def _candidate_balls(mesh: DiskMesh, cfg: TighteningConfig, rng: np.random.Generator,
                     clamped: bool = False, density: Optional[np.ndarray] = None) -> list[tuple[str, np.ndarray, float]]:
    """Uniformly placed interior balls and half-balls of the configured radii.

    With a per-triangle energy ``density`` the same number of interior centres
    is added at triangle barycentres drawn with probability proportional to
    their energy, so concentrated energy is never missed by the random placement.
    """
    out = []
    h = mesh.h
    weights = None
    if density is not None:
        w = np.asarray(density) * mesh.areas
        if w.sum() > 0:
            weights = w / w.sum()
    for r in cfg.interior_radii:
        if r < 2 * h:
            continue
        n = cfg.n_interior_centers // len(cfg.interior_radii) + 1
        for _ in range(n):
            rr = np.sqrt(rng.uniform(0, 1)) * (1 - r - 1e-3)
            a = rng.uniform(0, 2 * np.pi)
            out.append(("interior", np.array([rr * np.cos(a), rr * np.sin(a)]), float(r)))
        if weights is not None:
            for k in rng.choice(len(weights), size=n, p=weights):
                c = mesh.barycenters[k].copy()
                lim = 1 - r - 1e-3
                nc = np.linalg.norm(c)
                if nc > lim:
                    c *= lim / nc
                out.append(("interior", c, float(r)))
    if not clamped and mesh.domain == "disk":
        for r in cfg.half_radii:
            if r < 2 * h:
                continue
            for _ in range(cfg.n_half_centers // len(cfg.half_radii) + 1):
                a = rng.uniform(0, 2 * np.pi)
                out.append(("half", np.sqrt(1 + r * r) * np.array([np.cos(a), np.sin(a)]), float(r)))
    return out


def _family(balls, label="") -> BallFamily:
    return make_ball_family([{"kind": k, "center": c, "radius": r} for k, c, r in balls], label)


def select_family(u: DiskMap, threshold: float, shrink: float, cfg: TighteningConfig,
                  solver: SolverConfig, rng: np.random.Generator, clamped: bool = False):
    """Greedy disjoint family with region energy ``≤ threshold`` maximising the drop of ``H(u, shrink·B)``.

    Returns ``(family, drop)`` or ``(None, 0.0)``.
    """
    E0 = dirichlet_energy(u)
    scored = []
    for kind, c, r in _candidate_balls(u.mesh, cfg, rng, clamped, energy_density(u)):
        # shrink the ball until its energy fits the threshold
        while r >= 2 * u.mesh.h:
            try:
                fam = _family([(kind, c, r)])
            except FamilyError:
                break
            if region_energy(u, fam) <= threshold:
                break
            r *= 0.7
            if kind == "half":
                c = c / np.linalg.norm(c) * np.sqrt(1 + r * r)
        else:
            continue
        try:
            fam = _family([(kind, c, r)])
        except FamilyError:
            continue
        if region_energy(u, fam) > threshold:
            continue
        try:
            drop = E0 - dirichlet_energy(replace(u, scale_family(fam, shrink), solver))
        except SolverError:
            continue
        scored.append((drop, kind, c, r))
    if not scored:
        return None, 0.0
    scored.sort(key=lambda z: -z[0])
    chosen = []
    for drop, kind, c, r in scored:
        if drop <= 1e-14 or len(chosen) >= cfg.max_balls:
            break
        trial = chosen + [(kind, c, r)]
        try:
            fam = _family(trial)
        except (Overlap, FamilyError):
            continue
        e = region_energy(u, fam)
        if e <= threshold:
            chosen = trial
    if not chosen:
        return None, 0.0
    fam = _family(chosen, "greedy")
    drop = E0 - dirichlet_energy(replace(u, scale_family(fam, shrink), solver))
    return fam, float(drop)


def _interval_cover(points: np.ndarray, radii: np.ndarray) -> list[int]:
    """Greedy cover of the grid points (1-D) by intervals ``[p_i − r_i, p_i + r_i]``; multiplicity ≤ 2."""
    order = np.argsort(points)
    uncovered = list(order)
    chosen = []
    while uncovered:
        x = points[uncovered[0]]
        cands = [i for i in range(len(points)) if abs(points[i] - x) <= radii[i] + 1e-12]
        best = max(cands, key=lambda i: points[i] + radii[i])
        chosen.append(best)
        reach = points[best] + radii[best]
        uncovered = [i for i in uncovered if points[i] > reach + 1e-12]
    # drop redundant intervals (keeps multiplicity at most 2 on the line)
    changed = True
    while changed:
        changed = False
        for j in list(chosen):
            rest = [i for i in chosen if i != j]
            if rest and all(any(abs(points[k] - points[i]) <= radii[i] + 1e-12 for i in rest) for k in range(len(points))):
                chosen = rest
                changed = True
                break
    return sorted(chosen, key=lambda i: points[i])


def _disc_cover(points: np.ndarray, radii: np.ndarray) -> list[int]:
    order = np.argsort(-radii)
    covered = np.zeros(len(points), dtype=bool)
    chosen = []
    for i in order:
        if covered[i]:
            continue
        chosen.append(int(i))
        covered |= np.linalg.norm(points - points[i], axis=1) <= radii[i] + 1e-12
    return chosen


def build_tightening_families(s: Sweepout, cfg: TighteningConfig = TighteningConfig(),
                              solver: SolverConfig = DEFAULT_SOLVER, w_est: Optional[float] = None) -> FamilyPlan:
    """Families ``B_j`` with parameter balls ``C_j`` and cutoffs ``r_j`` on the grid."""
    tau = tau_for_dim(s.parameter_dim)
    E = s.energies()
    w_est = float(E.max()) if w_est is None else w_est
    n = len(s.slices)
    empty = FamilyPlan([], [], np.zeros(0), np.zeros((0, n)), 0, tau, 2.0, [])
    if w_est <= 0:
        return empty
    high = np.flatnonzero((E >= cfg.high_energy_fraction * w_est) & (E > 0))
    if len(high) == 0:
        return empty
    rng = np.random.default_rng(cfg.seed)
    thr = cfg.eps0 / 3**tau
    shrink = 1.0 / 2 ** (tau - 1)
    fams, drops, ok = {}, {}, []
    for i in high:
        fam, drop = select_family(s.slices[i], thr, shrink, cfg, solver, rng)
        if fam is None:
            if E[i] > 1e-10:
                log.debug("no admissible family at grid index %d", i)
            continue
        fams[i], drops[i] = fam, drop
        ok.append(i)
    if not ok:
        raise CoverFailure("no admissible family found for any high-energy slice (mesh too coarse?)")
    ok = np.array(ok)
    spacing = s.spacing
    # C_t: grow in grid steps while the family keeps its energy bound on 2C_t
    radii = np.zeros(len(ok))
    for k, i in enumerate(ok):
        rad = 0.49 * spacing
        for mult in (1, 2, 3):
            cand = mult * spacing
            near = np.flatnonzero(np.linalg.norm(s.grid - s.grid[i], axis=1) <= 2 * cand + 1e-12)
            if all(region_energy(s.slices[j], fams[i]) <= cfg.eps0 / 3 ** (tau - 1) for j in near):
                rad = cand
            else:
                break
        radii[k] = rad
    pts = s.grid[ok]
    if s.parameter_dim == 1:
        sel = _interval_cover(pts[:, 0], radii)
    else:
        sel = _disc_cover(pts, radii)
    centers = [int(ok[k]) for k in sel]
    crad = radii[sel]
    families = [fams[c] for c in centers]

    def cutoffs(scale):
        m = len(centers)
        R = np.zeros((m, n))
        for j in range(m):
            d = np.linalg.norm(s.grid - s.grid[centers[j]], axis=1)
            R[j] = np.clip((scale * crad[j] - d) / ((scale - 1.0) * crad[j]), 0.0, 1.0)
            for i in range(m):
                if i != j and np.linalg.norm(s.grid[centers[i]] - s.grid[centers[j]]) > crad[i] + crad[j]:
                    di = np.linalg.norm(s.grid - s.grid[centers[i]], axis=1)
                    R[j, di <= crad[i] + 1e-12] = 0.0
            R[j, s.boundary_mask] = 0.0  # endpoint slices stay constant
        return R

    scale = 2.0
    R = cutoffs(scale)
    while R.shape[0] and np.max(np.sum(R > 0, axis=0)) > tau and scale > 1.05:
        scale = 1.0 + 0.5 * (scale - 1.0)
        R = cutoffs(scale)
    mult = int(np.max(np.sum(R > 0, axis=0))) if R.shape[0] else 0
    return FamilyPlan(families, centers, crad, R, mult, tau, scale, [drops[c] for c in centers])


def tighten(s: Sweepout, plan: Optional[FamilyPlan] = None, cfg: TighteningConfig = TighteningConfig(),
            solver: SolverConfig = DEFAULT_SOLVER, psi_samples: bool = True) -> tuple[Sweepout, TighteningReport]:
    """``σ^j_t = H(σ^{j−1}_t, r_j(t) B_j)`` over all families of the plan."""
    E_before = s.energies()
    if plan is None:
        plan = build_tightening_families(s, cfg, solver)
    out = s.copy()
    skipped = 0
    for j, fam in enumerate(plan.families):
        for i in np.flatnonzero(plan.cutoffs[j] > 0):
            r = float(plan.cutoffs[j, i])
            try:
                out.slices[i] = replace(out.slices[i], scale_family(fam, r), solver)
            except EnergyAboveThreshold:
                skipped += 1
    E_after = out.energies()
    A = out.areas()
    rep = TighteningReport(
        float(E_before.max()), float(E_after.max()), float(A.max()),
        out.grid[int(np.argmax(E_after))].tolist(), (E_before - E_after).tolist(),
        [{"center_index": c, "balls": f.to_spec(), "radius": float(rr)} for c, f, rr in
         zip(plan.centers, plan.families, plan.radii)], [], skipped)
    if psi_samples and plan.families:
        rep.psi_samples = _psi_samples(s, out, cfg, solver, plan.tau)
    return out, rep


def _psi_samples(before: Sweepout, after: Sweepout, cfg: TighteningConfig, solver: SolverConfig, tau: int) -> list:
    """Pairs (energy drop of the slice, replacement residual ``∫|∇(σ_t − H(σ_t, B))|²``).

    ``B`` is a fresh greedy family on the tightened slice, selected with the
    same threshold and shrink factor as the tightening families (the smaller
    ``ε₀/3^{τ+1}``, ``2^{1−2τ}``-scaled families fall below mesh resolution).
    """
    thr = cfg.eps0 / 3**tau
    shrink = 1.0 / 2 ** (tau - 1)
    Eb, Ea = before.energies(), after.energies()
    w = Eb.max()
    rng = np.random.default_rng(cfg.seed + 1)
    out = []
    for i in np.flatnonzero(Eb >= cfg.high_energy_fraction * w):
        u = after.slices[i]
        for _ in range(cfg.psi_families):
            fam, _ = select_family(u, thr, shrink, cfg, solver, rng)
            if fam is None:
                continue
            v = replace(u, scale_family(fam, shrink), solver)
            resid = 2 * dirichlet_energy(u.with_values(u.values - v.values))
            out.append([float(Eb[i] - Ea[i]), float(resid)])
    return out


def single_slice_step(u: DiskMap, cfg: TighteningConfig = TighteningConfig(), solver: SolverConfig = DEFAULT_SOLVER,
                      rng: Optional[np.random.Generator] = None, n_random: int = 20) -> dict:
    """One replacement step in minimisation mode (trivial parameter set).

    A greedy family is compared with the best single ball of a randomized
    search; if the greedy drop is below half of that, the best ball is used
    instead, so the step always realises at least half of the best drop found.
    """
    rng = rng or np.random.default_rng(cfg.seed)
    clamped = not np.any(u.constrained)
    E0 = dirichlet_energy(u)
    best, best_fam = 0.0, None
    for kind, c, r in _candidate_balls(u.mesh, cfg, rng, clamped)[:n_random]:
        try:
            f = _family([(kind, c, r)])
            if region_energy(u, f) > cfg.eps0:
                continue
            d = E0 - dirichlet_energy(replace(u, f, solver))
        except (FamilyError, SolverError):
            continue
        if d > best:
            best, best_fam = d, f
    fam, drop = select_family(u, cfg.eps0, 1.0, cfg, solver, rng, clamped)
    if best_fam is not None and (fam is None or drop < 0.5 * best):
        fam, drop = best_fam, best
    new = replace(u, fam, solver) if fam is not None else u.copy()
    return {"map": new, "drop": float(drop), "best_random_drop": float(best), "family": fam}


# ---------------------------------------------------------------------------
# min-max driver
# ---------------------------------------------------------------------------
@dataclass
class MinmaxConfig:
    iters: int = 20
    eps_init: float = 1.0
    reparametrize: bool = True
    perturb: bool = True
    tol_stall: float = 1e-7
    stall_iters: int = 3
    tightening: TighteningConfig = field(default_factory=TighteningConfig)
    solver: SolverConfig = DEFAULT_SOLVER


@dataclass
class MinmaxResult:
    width: float
    max_energy_series: list
    max_area_series: list
    argmax_series: list
    sequence: list  # near-maximal slices u_n
    reports: list
    sweepout: Sweepout
    accepted: list

    def summary(self) -> dict:
        return {"width": self.width, "max_energy": self.max_energy_series, "max_area": self.max_area_series,
                "argmax": self.argmax_series, "accepted": self.accepted}


def minmax_run(initial: Sweepout, iters: Optional[int] = None, config: MinmaxConfig = MinmaxConfig(),
               callback: Optional[Callable] = None) -> MinmaxResult:
    """Iterate perturb → reparametrise → families → tighten, keeping max energy non-increasing.

    An iteration whose outcome raises the maximal energy is retried without the
    plateau perturbation, and discarded if it still does.
    """
    iters = config.iters if iters is None else iters
    s = initial.copy()
    A0, E0, t0 = width_estimate(s)
    e_series, a_series, t_series = [E0], [A0], [np.asarray(t0).tolist()]
    seq = [s.slices[int(np.argmax(s.energies()))].copy()]
    reports, accepted = [], []
    if E0 <= 0:
        return MinmaxResult(0.0, e_series, a_series, t_series, seq, reports, s, accepted)
    stall = 0
    for n in range(iters):
        eps = config.eps_init / 2**n
        best = None
        for use_perturb in ((True, False) if config.perturb else (False,)):
            cur = s
            if use_perturb:
                try:
                    cur = perturb_nonharmonic(s, eps)
                except ToleranceUnreachable:
                    continue
            if config.reparametrize:
                cur = cur.copy()
                cur.slices = [reparametrize_quasiconformal(sl) for sl in cur.slices]
            try:
                plan = build_tightening_families(cur, config.tightening, config.solver)
                cur, rep = tighten(cur, plan, config.tightening, config.solver)
            except CoverFailure:
                rep = None
            Emax = float(cur.energies().max())
            if Emax <= e_series[-1]:
                best = (cur, rep, use_perturb)
                break
        if best is None:
            accepted.append(False)
            e_series.append(e_series[-1])
            a_series.append(a_series[-1])
            t_series.append(t_series[-1])
            reports.append(None)
            stall += 1
        else:
            cur, rep, used = best
            drop = e_series[-1] - float(cur.energies().max())
            s = cur
            A, Emax, targ = width_estimate(s)
            e_series.append(Emax)
            a_series.append(A)
            t_series.append(np.asarray(targ).tolist())
            seq.append(s.slices[int(np.argmax(s.energies()))].copy())
            d = rep.as_dict() if rep is not None else {}
            d["perturbed"] = bool(used)
            d["tightened"] = rep is not None  # False when no admissible family covered the slices
            d["argmax_ambiguous"] = argmax_ambiguous(s)
            reports.append(d)
            accepted.append(True)
            stall = stall + 1 if drop < config.tol_stall else 0
        if callback is not None:
            callback(n, s, e_series[-1], a_series[-1])
        if stall >= config.stall_iters:
            break
    return MinmaxResult(float(min(a_series)), e_series, a_series, t_series, seq, reports, s, accepted)


def argmax_ambiguous(s: Sweepout, rel: float = 1e-3) -> bool:
    """True when a grid neighbour of the energy maximiser is within ``rel`` of the maximum."""
    E = s.energies()
    i = int(np.argmax(E))
    for a, b in s.neighbors():
        j = b if a == i else a if b == i else None
        if j is not None and E[j] >= (1 - rel) * E[i]:
            return True
    return False


def save_checkpoint(s: Sweepout, path) -> None:
    """Mesh, grid metadata and per-slice values in one ``.npz`` file."""
    m = s.mesh
    np.savez(path, vertices=m.vertices, triangles=m.triangles, boundary_loop=m.boundary_loop,
             h=m.target_edge_length, domain=m.domain, grid=s.grid, base_index=s.base_index,
             values=np.stack([sl.values for sl in s.slices]), parameter_dim=s.parameter_dim, label=s.label)


def load_checkpoint(path, pair: ManifoldPair) -> Sweepout:
    z = np.load(path, allow_pickle=False)
    mesh = DiskMesh(z["vertices"], z["triangles"], z["boundary_loop"], float(z["h"]), str(z["domain"]))
    slices = [DiskMap(mesh, v, pair) for v in z["values"]]
    return Sweepout(int(z["parameter_dim"]), z["grid"], slices, int(z["base_index"]), pair, str(z["label"]))


def slice_diagnostics(u: DiskMap) -> dict:
    hf = hopf_differential(u)
    E = dirichlet_energy(u)
    A = area(u)
    return {"energy": E, "area": A, "defect": E - A, "hopf_interior_l1": hf.interior_l1,
            "hopf_boundary_l1": hf.boundary_l1}
