"""Constrained energy minimisation, harmonic replacement and the quantitative lemmas around it.

The minimiser is an ``H¹``-preconditioned projected gradient method: at the
current iterate ``U`` the search direction ``d = T c`` lies in the product of
tangent spaces (of ``N`` at free vertices, of ``M`` at sliding vertices) and
solves ``(TᵀKT) c = −TᵀKU``; the new iterate is ``π(U + τd)`` with an Armijo
backtracking on ``τ``.  For flat targets one step is the exact solution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import annulus_mask, dirichlet_energy, stiffness_matrix
from .geometry import EmbeddedManifold, ManifoldPair, OutsideTube
from .mesh import BallFamily, DiskMap, DiskMesh, build_disk_mesh, scale_family


class SolverError(RuntimeError):
    pass


class EnergyAboveThreshold(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class DataMismatch(ValueError):
    pass


class CurvesEqual(ValueError):
    pass


class NoAgreementPoint(ValueError):
    pass


class TubeExceeded(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    eps0: float = 0.3
    tol_grad: float = 1e-8
    max_iters: int = 500
    armijo: float = 1e-4
    min_step: float = 1e-10
    eta: float = 0.5
    raise_on_noconv: bool = False


DEFAULT_SOLVER = SolverConfig()


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------
@dataclass(eq=False)
class SolveRegion:
    """Triangles to re-solve plus the classification of their vertices.

    ``dirichlet`` vertices keep their values, ``sliding`` vertices move on
    ``M`` and ``free`` vertices move on ``N``.
    """

    mesh: DiskMesh
    tri_mask: np.ndarray
    free: np.ndarray
    sliding: np.ndarray
    dirichlet: np.ndarray
    label: str = ""

    @property
    def vertices(self) -> np.ndarray:
        return np.unique(np.concatenate([self.free, self.sliding, self.dirichlet]))

    @property
    def movable(self) -> np.ndarray:
        return np.concatenate([self.free, self.sliding])


def make_region(u: DiskMap, tri_mask: np.ndarray, label: str = "") -> SolveRegion:
    mesh = u.mesh
    tri_mask = np.asarray(tri_mask, dtype=bool)
    rv = np.unique(mesh.triangles[tri_mask])
    touches = np.zeros(mesh.n_vertices, dtype=bool)
    touches[mesh.triangles[~tri_mask].ravel()] = True
    bd = mesh.is_boundary
    con = u.constrained
    t, b, c = touches[rv], bd[rv], con[rv]
    dirichlet = rv[t | (b & ~c)]
    sliding = rv[~t & b & c]
    free = rv[~t & ~b]
    return SolveRegion(mesh, tri_mask, free, sliding, dirichlet, label)


def family_region(u: DiskMap, f: BallFamily) -> SolveRegion:
    return make_region(u, f.triangle_mask(u.mesh), f.label)


def whole_region(u: DiskMap) -> SolveRegion:
    """All triangles: Dirichlet on unconstrained boundary vertices, sliding on constrained ones."""
    return make_region(u, np.ones(len(u.mesh.triangles), dtype=bool), "whole")


def clamped_region(u: DiskMap) -> SolveRegion:
    """All triangles with the whole boundary held fixed."""
    mesh = u.mesh
    rv = np.arange(mesh.n_vertices)
    bd = mesh.is_boundary
    return SolveRegion(mesh, np.ones(len(mesh.triangles), dtype=bool), rv[~bd], rv[:0], rv[bd], "clamped")


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------
@dataclass
class SolveResult:
    values: np.ndarray  # full vertex array of the updated map
    energy: float  # region energy after the solve (½ convention)
    energy_before: float
    iterations: int
    grad_norm: float
    converged: bool
    in_uniqueness_regime: bool = True
    label: str = ""

    def row(self) -> dict:
        return {"region": self.label, "iterations": self.iterations, "energy_before": self.energy_before,
                "energy_after": self.energy, "grad_norm": self.grad_norm, "converged": self.converged}


def _tangent_frames(man: EmbeddedManifold, Y: np.ndarray) -> np.ndarray:
    return man.tangent_basis(Y) if len(Y) else np.zeros((0, man.ambient_dim, 0))


def _assemble_T(frames: np.ndarray, offsets: np.ndarray, p: int, ncols: int) -> sp.csr_matrix:
    """``frames`` has shape ``(n, p, m)``; column block of vertex ``i`` starts at ``offsets[i]``."""
    n, _, m = frames.shape
    if n == 0 or m == 0:
        return sp.csr_matrix((n * p, ncols))
    vi = np.repeat(np.arange(n), p * m)
    a = np.tile(np.repeat(np.arange(p), m), n)
    j = np.tile(np.arange(m), n * p)
    rows = vi * p + a
    cols = offsets[vi] + j
    return sp.csr_matrix((frames.ravel(), (rows, cols)), shape=(n * p, ncols))


class _Problem:
    """Local data of one constrained solve."""

    def __init__(self, u: DiskMap, region: SolveRegion):
        if u.pair is None:
            raise ValueError("solving needs a DiskMap with a ManifoldPair")
        self.pair = u.pair
        self.N, self.M = u.pair.N, u.pair.M
        self.p = u.p
        idx = region.vertices
        self.idx = idx
        loc = -np.ones(u.mesh.n_vertices, dtype=int)
        loc[idx] = np.arange(len(idx))
        self.loc_free = loc[region.free]
        self.loc_slide = loc[region.sliding]
        self.loc_mov = np.concatenate([self.loc_free, self.loc_slide])
        K = stiffness_matrix(u.mesh, region.tri_mask)
        self.K = K[idx][:, idx].tocsr()
        self.Kmm = self.K[self.loc_mov][:, self.loc_mov].tocsc()
        self.nf, self.ns = len(self.loc_free), len(self.loc_slide)

    def energy(self, U: np.ndarray) -> float:
        return 0.5 * float(np.sum(U * (self.K @ U)))

    def project(self, U: np.ndarray) -> Optional[np.ndarray]:
        V = U.copy()
        if self.nf:
            Y = U[self.loc_free]
            if not np.all(self.N.in_tube(Y)):
                return None
            V[self.loc_free] = self.N.project(Y, check=False)
        if self.ns:
            Y = U[self.loc_slide]
            if not np.all(self.M.in_tube(Y)):
                return None
            V[self.loc_slide] = self.M.project(Y, check=False)
        if not np.all(np.isfinite(V)):
            return None
        return V

    def frames(self, U: np.ndarray):
        """Tangent frames at free and at sliding vertices."""
        Ff = _tangent_frames(self.N, U[self.loc_free])
        Fs = _tangent_frames(self.M, U[self.loc_slide])
        return Ff, Fs

    def tangent_matrix(self, U):
        Ff, Fs = self.frames(U)
        mf, ms = Ff.shape[2], Fs.shape[2]
        offs = np.concatenate([np.arange(self.nf) * mf, self.nf * mf + np.arange(self.ns) * ms])
        ncols = self.nf * mf + self.ns * ms
        Tf = _assemble_T(Ff, offs[: self.nf], self.p, ncols)
        Ts = _assemble_T(Fs, offs[self.nf:], self.p, ncols)
        return sp.vstack([Tf, Ts]).tocsr(), (Ff, Fs)

    def tangential_gradient(self, U, frames=None) -> np.ndarray:
        g = (self.K @ U)[self.loc_mov]
        if frames is None:
            frames = self.frames(U)
        Ff, Fs = frames
        out = np.zeros_like(g)
        if self.nf:
            gf = g[: self.nf]
            tf = np.einsum("nij,nkj,nk->ni", Ff, Ff, gf)
            if self.N.kind == "solid":
                # on the boundary of a convex body only inward descent is feasible
                tf = _solid_feasible(self.N, U[self.loc_free], gf)
            out[: self.nf] = tf
        if self.ns:
            out[self.nf:] = np.einsum("nij,nkj,nk->ni", Fs, Fs, g[self.nf:])
        return out


def _solid_feasible(N: EmbeddedManifold, Y: np.ndarray, g: np.ndarray) -> np.ndarray:
    b = N.boundary
    on = b.field(Y) >= -1e-10
    out = g.copy()
    if np.any(on):
        n = b.field_grad(Y[on])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        gn = np.sum(g[on] * n, axis=1)
        # descent direction -g points outward when gn < 0: drop that part
        out[on] -= np.minimum(gn, 0.0)[:, None] * n
    return out


def _init_values(u: DiskMap, region: SolveRegion, prob: _Problem, init) -> np.ndarray:
    U = u.values[prob.idx].copy()
    if init is None or (isinstance(init, str) and init == "input"):
        pass
    elif isinstance(init, str) and init == "harmonic_extension":
        W = _harmonic_extension(prob, U)
        P = prob.project(W)
        if P is not None:
            U = P
    else:
        arr = np.asarray(init, dtype=float)
        if arr.shape == u.values.shape:
            arr = arr[prob.idx]
        U[prob.loc_mov] = arr[prob.loc_mov]
    P = prob.project(U)
    if P is None:
        raise OutsideTube("initial values are outside the projection tubes")
    return P


def _harmonic_extension(prob: _Problem, U: np.ndarray) -> np.ndarray:
    """Componentwise flat solution with the Dirichlet data (natural condition on sliding vertices)."""
    mov = prob.loc_mov
    rest = np.setdiff1d(np.arange(len(U)), mov)
    W = U.copy()
    if len(rest) == 0:
        W[mov] = U[mov].mean(axis=0)
        return W
    rhs = -(prob.K[mov][:, rest] @ U[rest])
    W[mov] = spla.spsolve(prob.Kmm, rhs).reshape(len(mov), -1)
    return W


def solve_constrained(u: DiskMap, region: SolveRegion, config: SolverConfig = DEFAULT_SOLVER,
                      override: bool = False, init=None) -> SolveResult:
    """Minimise the Dirichlet energy on ``region`` with the map's boundary data.

    Parameters
    ----------
    u : DiskMap
        Current map; values outside the movable vertices are left untouched.
    region : SolveRegion
    config : SolverConfig
    override : bool
        Solve even when the region energy exceeds ``config.eps0``; the result
        is then flagged as outside the uniqueness regime.
    init : None, "input", "harmonic_extension" or array
        Initial values of the movable vertices.
    """
    e_in = dirichlet_energy(u, region.tri_mask)
    # flat target with flat constraint: the problem is convex, minimisers are unique at any energy
    in_regime = e_in <= config.eps0 or (u.pair is not None and u.pair.is_flat)
    if not in_regime and not override:
        raise EnergyAboveThreshold(f"region energy {e_in:.4g} exceeds eps0={config.eps0:g}")
    prob = _Problem(u, region)
    out = u.values.copy()
    if len(prob.loc_mov) == 0:
        return SolveResult(out, e_in, e_in, 0, 0.0, True, in_regime, region.label)
    U = _init_values(u, region, prob, init)
    E = prob.energy(U)
    p = prob.p
    n_mov = len(prob.loc_mov)
    has_fixed = len(region.dirichlet) > 0
    it, gnorm, converged = 0, np.inf, False
    for it in range(1, config.max_iters + 1):
        T, frames = prob.tangent_matrix(U)
        tg = prob.tangential_gradient(U, frames)
        gnorm = float(np.linalg.norm(tg))
        if gnorm < config.tol_grad:
            converged = True
            it -= 1
            break
        Kbig = sp.kron(prob.Kmm, sp.identity(p, format="csr"), format="csr")
        A = (T.T @ Kbig @ T).tocsc()
        g = (prob.K @ U)[prob.loc_mov].ravel()
        rhs = -(T.T @ g)
        if not has_fixed:
            A = A + 1e-12 * max(1.0, abs(A.diagonal()).max()) * sp.identity(A.shape[0], format="csc")
        try:
            c = spla.spsolve(A, rhs)
        except RuntimeError:
            c = spla.lsqr(A, rhs)[0]
        d = (T @ c).reshape(n_mov, p)
        slope = float(np.dot(g, d.ravel()))
        if not slope < 0:
            d = -tg
            slope = float(np.dot(g, d.ravel()))
        tau, accepted = 1.0, False
        while tau >= config.min_step:
            Ut = U.copy()
            Ut[prob.loc_mov] = U[prob.loc_mov] + tau * d
            P = prob.project(Ut)
            if P is not None:
                Et = prob.energy(P)
                if Et <= E + config.armijo * tau * slope:
                    accepted = True
                    break
            tau *= 0.5
        if not accepted:
            break
        step = np.max(np.abs(P - U))
        U, E = P, Et
        if step < 1e-15:
            break
    else:
        T, frames = prob.tangent_matrix(U)
        gnorm = float(np.linalg.norm(prob.tangential_gradient(U, frames)))
        converged = gnorm < config.tol_grad
    if not converged:
        T, frames = prob.tangent_matrix(U)
        gnorm = float(np.linalg.norm(prob.tangential_gradient(U, frames)))
        converged = gnorm < config.tol_grad
        if not converged and config.raise_on_noconv:
            raise NoConvergence(f"gradient norm {gnorm:.3g} after {it} iterations")
    out[prob.idx] = U
    return SolveResult(out, E, e_in, it, gnorm, converged, in_regime, region.label)


def replace(u: DiskMap, f: BallFamily, config: SolverConfig = DEFAULT_SOLVER, override: bool = False,
            telemetry: Optional[list] = None, init=None) -> DiskMap:
    """Harmonic replacement ``H(u, f)``: re-solve ``u`` on every ball of ``f``."""
    if len(f) == 0:
        return u.copy()
    mask = f.triangle_mask(u.mesh)
    if not np.any(mask):
        return u.copy()
    res = solve_constrained(u, make_region(u, mask, f.label), config, override, init)
    if telemetry is not None:
        telemetry.append(res.row())
    return u.with_values(res.values)


def replace_iterated(u: DiskMap, families: Sequence[BallFamily], config: SolverConfig = DEFAULT_SOLVER,
                     override: bool = False) -> DiskMap:
    """``H(u, B_1, ..., B_k) = H(H(u, B_1, ..., B_{k-1}), B_k)``."""
    for f in families:
        u = replace(u, f, config, override)
    return u


def energy_drop(u: DiskMap, f: BallFamily, config: SolverConfig = DEFAULT_SOLVER, override: bool = False) -> float:
    return dirichlet_energy(u) - dirichlet_energy(replace(u, f, config, override))


# ---------------------------------------------------------------------------
# exchange inequalities
# ---------------------------------------------------------------------------
@dataclass
class ExchangeReport:
    energies: dict
    lhs1: float
    rhs1_base: float
    lhs2: float
    rhs2_base: float
    root_term: float
    kappa_max1: float
    kappa_max2: float
    kappa_floor: float
    residual1: float
    residual2: float
    violation: bool

    def as_dict(self) -> dict:
        return {k: (v if not isinstance(v, float) or np.isfinite(v) else None) for k, v in self.__dict__.items()}


def exchange_check(u: DiskMap, f1: BallFamily, f2: BallFamily, kappa_floor: float = 0.05,
                   config: SolverConfig = DEFAULT_SOLVER, tol: float = 1e-9) -> ExchangeReport:
    """Evaluate both exchange inequalities and the largest admissible ``κ``.

    ``κ_max`` is the largest ``κ`` for which the inequality holds; a violation
    is reported when it falls below ``kappa_floor``.
    """
    half2 = scale_family(f2, 0.5)
    E0 = dirichlet_energy(u)
    u1 = replace(u, f1, config)
    E1 = dirichlet_energy(u1)
    Eh2 = dirichlet_energy(replace(u, half2, config))
    E12 = dirichlet_energy(replace(u1, f2, config))
    E2 = dirichlet_energy(replace(u, f2, config))
    E1h2 = dirichlet_energy(replace(u1, half2, config))
    root = np.sqrt(max(E0 - E1, 0.0))
    lhs1, rhs1 = E0 - Eh2, E1 - E12
    lhs2, rhs2 = E1 - E1h2, E0 - E2

    def kmax(lhs, rhs):
        gap = lhs - rhs
        if gap <= tol:
            return np.inf
        return root / gap

    k1, k2 = kmax(lhs1, rhs1), kmax(lhs2, rhs2)
    res1 = rhs1 + root / kappa_floor - lhs1
    res2 = rhs2 + root / kappa_floor - lhs2
    energies = {"E(u)": E0, "E(H(u,B1))": E1, "E(H(u,B2/2))": Eh2, "E(H(u,B1,B2))": E12,
                "E(H(u,B2))": E2, "E(H(u,B1,B2/2))": E1h2}
    return ExchangeReport(energies, lhs1, rhs1, lhs2, rhs2, float(root), float(k1), float(k2), kappa_floor,
                          float(res1), float(res2), bool(k1 < kappa_floor or k2 < kappa_floor))


# ---------------------------------------------------------------------------
# convexity
# ---------------------------------------------------------------------------
def convexity_check(u: DiskMap, v: DiskMap, region: Optional[SolveRegion] = None, tol: float = 1e-12) -> float:
    """``(∫|∇v|² − ∫|∇u|²) − ½∫|∇(v−u)|²`` over the region (whole mesh by default)."""
    if region is None:
        region = whole_region(u)
    d = region.dirichlet
    if len(d) and np.max(np.abs(u.values[d] - v.values[d])) > tol:
        raise DataMismatch("competitor does not share the Dirichlet data")
    m = region.tri_mask
    Ev = 2 * dirichlet_energy(v, m)
    Eu = 2 * dirichlet_energy(u, m)
    Ed = 2 * dirichlet_energy(u.with_values(v.values - u.values), m)
    return float((Ev - Eu) - 0.5 * Ed)


# ---------------------------------------------------------------------------
# free-boundary diagnostics
# ---------------------------------------------------------------------------
def normal_derivative(u: DiskMap, vertices: np.ndarray) -> np.ndarray:
    """One-sided difference ``(u(v) − u(v − hν)) / h`` with ``ν`` the outward normal."""
    mesh = u.mesh
    X = mesh.vertices[vertices]
    if mesh.domain == "half_disk":
        nu = np.tile([0.0, -1.0], (len(X), 1))
        on_arc = np.abs(np.linalg.norm(X, axis=1) - 1) < 1e-12
        nu[on_arc] = X[on_arc]
    else:
        nu = X / np.linalg.norm(X, axis=1, keepdims=True)
    h = mesh.h
    inner = mesh.interpolate(u.values, X - h * nu)
    return (u.values[vertices] - inner) / h


def free_boundary_residual(u: DiskMap, vertices: Optional[np.ndarray] = None) -> float:
    """Max over sliding vertices of ``|P_T ∂_ν u| / |∂_ν u|`` (tangential part w.r.t. ``M``)."""
    if vertices is None:
        vertices = np.flatnonzero(u.constrained)
    dn = normal_derivative(u, vertices)
    T = u.pair.M.tangent_basis(u.values[vertices])
    tan = np.einsum("nij,nkj,nk->ni", T, T, dn)
    nrm = np.linalg.norm(dn, axis=1)
    ok = nrm > 1e-12
    if not np.any(ok):
        return 0.0
    return float(np.max(np.linalg.norm(tan[ok], axis=1) / nrm[ok]))


# ---------------------------------------------------------------------------
# extension lemma
# ---------------------------------------------------------------------------
@dataclass
class ExtensionResult:
    rho: float  # dimensionless ratio; the annulus has thickness rho * R
    R: float
    energy: float  # ∫|∇w|² over the (half-)annulus
    diff_energy: float  # R ∫|∇_θ(f−g)|² dσ
    sum_energy: float  # R ∫(|∇_θ f|² + |∇_θ g|²) dσ
    K_measured: float
    w: Callable  # w(r, theta) -> (..., p)

    @property
    def bound_product(self) -> float:
        return float(np.sqrt(self.diff_energy) * np.sqrt(self.sum_energy))


def _theta_quadrature(kind: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    span = np.pi if kind == "half" else 2 * np.pi
    return 0.5 * span * (x + 1), 0.5 * span * w


def _d_theta(c: Callable, th: np.ndarray, step: float = 1e-5) -> np.ndarray:
    return (-c(th + 2 * step) + 8 * c(th + step) - 8 * c(th - step) + c(th - 2 * step)) / (12 * step)


def extension_rho(f: Callable, g: Callable, kind: str = "full", n_quad: int = 400) -> tuple[float, float, float]:
    """Returns ``(ρ, ∫|∂_θ(f−g)|²dθ, ∫(|∂_θf|²+|∂_θg|²)dθ)``.

    ``f`` and ``g`` are functions of the angle returning arrays ``(n, p)``.
    With ``R ∫ |∇_θ ·|² dσ = ∫ |∂_θ ·|² dθ`` the ratio is independent of ``R``.
    """
    th, w = _theta_quadrature(kind, n_quad)
    df, dg = _d_theta(f, th), _d_theta(g, th)
    a = float(np.sum(w * np.sum((df - dg) ** 2, axis=1)))
    b = float(np.sum(w * (np.sum(df * df, axis=1) + np.sum(dg * dg, axis=1))))
    return float(np.sqrt(a / (8.0 * b))), a, b


def extension_build(f: Callable, g: Callable, R: float, kind: str, pair: ManifoldPair,
                    eta: Optional[float] = None, n_quad: int = 400, n_radial: int = 40,
                    agree_tol: float = 1e-8) -> ExtensionResult:
    """Annulus map joining ``f`` on the inner circle to ``g`` on the outer one.

    ``ŵ`` interpolates linearly in ``r`` across the annulus ``R(1−ρ) ≤ r ≤ R``;
    for ``kind="half"`` the values at ``θ ∈ {0, π}`` are pulled onto ``M`` by a
    correction linear in ``θ``; finally the map is projected onto ``N``.
    """
    if kind not in ("full", "half"):
        raise ValueError("kind must be 'full' or 'half'")
    th, wq = _theta_quadrature(kind, n_quad)
    span = np.pi if kind == "half" else 2 * np.pi
    probe = np.linspace(0, span, 2001)
    gap = np.linalg.norm(f(probe) - g(probe), axis=1)
    if np.max(gap) < 1e-14:
        raise CurvesEqual("f and g coincide")
    if np.min(gap) > agree_tol:
        raise NoAgreementPoint("f and g do not agree at any point")
    if kind == "half":
        ends = np.concatenate([f(np.array([0.0, np.pi])), g(np.array([0.0, np.pi]))])
        if np.max(pair.M.residual(ends)) > 1e-8:
            raise ValueError("endpoint values must lie on M")
    rho, a, b = extension_rho(f, g, kind, n_quad)
    if eta is not None and a > eta**2:
        raise ValueError(f"smallness condition violated: {a:.3g} > eta^2 = {eta**2:.3g}")
    N, M = pair.N, pair.M

    def what(r, t):
        s = ((r / R) + rho - 1.0) / rho
        fv, gv = f(t), g(t)
        return fv + np.asarray(s)[..., None] * (gv - fv)

    def wtilde(r, t):
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        out = what(r, t)
        if kind == "half":
            for t0, wt in ((0.0, (np.pi - t) / np.pi), (np.pi, t / np.pi)):
                base = what(r, np.full_like(t, t0))
                corr = M.project(base, check=False) - base
                out = out + wt[..., None] * corr
        return out

    def w(r, t):
        r, t = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(t, dtype=float))
        flat = wtilde(r.ravel(), t.ravel())
        if not np.all(N.in_tube(flat)):
            raise TubeExceeded("interpolant leaves the tube of N")
        return N.project(flat, check=False).reshape(r.shape + (flat.shape[-1],))

    # ∫∫ (|∂_r w|² + r⁻²|∂_θ w|²) r dr dθ by tensor Gauss–Legendre quadrature
    xr, wr = np.polynomial.legendre.leggauss(n_radial)
    r0 = R * (1 - rho)
    rr = r0 + 0.5 * (R - r0) * (xr + 1)
    wr = 0.5 * (R - r0) * wr
    Rg, Tg = np.meshgrid(rr, th, indexing="ij")
    hr, ht = 1e-6 * R, 1e-6
    dr = (w(Rg + hr, Tg) - w(Rg - hr, Tg)) / (2 * hr)
    dt = (w(Rg, Tg + ht) - w(Rg, Tg - ht)) / (2 * ht)
    dens = np.sum(dr * dr, axis=-1) + np.sum(dt * dt, axis=-1) / Rg**2
    energy = float(np.sum(wr[:, None] * wq[None, :] * dens * Rg))
    K = energy / (np.sqrt(a) * np.sqrt(b))
    return ExtensionResult(rho, float(R), energy, a, b, float(K), w)


# ---------------------------------------------------------------------------
# reflection
# ---------------------------------------------------------------------------
@dataclass
class ReflectionResult:
    map: DiskMap
    constant: float  # ∫_𝔻|∇ũ|² / ∫_{𝔻₊}|∇u|²


def reflect_values(fn: Callable, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``ũ(x, y) = u(x, y)`` for ``y ≥ 0`` and ``−3u(x,−y) + 4u(x,−y/2)`` below."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    up = y >= 0
    ya = np.abs(y)
    top = np.asarray(fn(x, ya))
    low = -3.0 * top + 4.0 * np.asarray(fn(x, 0.5 * ya))
    upm = up.reshape(up.shape + (1,) * (top.ndim - up.ndim))
    return np.where(upm, top, low)


def reflect_extend(u: DiskMap, target: Optional[DiskMesh] = None) -> ReflectionResult:
    """Extend a map on the half-disk mesh to the full disk by the −3/+4 reflection."""
    if u.mesh.domain != "half_disk":
        raise ValueError("reflect_extend expects a half-disk map")
    target = target or build_disk_mesh(u.mesh.h)

    def fn(x, y):
        return u.mesh.interpolate(u.values, np.stack([x, y], axis=1))

    vals = reflect_values(fn, target.vertices[:, 0], target.vertices[:, 1])
    ext = DiskMap(target, vals)
    num = 2 * dirichlet_energy(ext)
    den = 2 * dirichlet_energy(u)
    return ReflectionResult(ext, float(num / den) if den > 0 else 0.0)


# ---------------------------------------------------------------------------
# Courant–Lebesgue
# ---------------------------------------------------------------------------
@dataclass
class CourantLebesgueResult:
    radius: float
    circle_energy: float  # ∫_0^{2π} |∂_θ u|² dθ on the chosen circle
    circle_energy_tangential: float  # ∫_{∂B_r} |r⁻¹∂_θ u|² dσ = circle_energy / r
    annulus_energy: float  # ∫_{annulus} |∇u|²
    bound: float  # annulus_energy / ln(r2/r1)
    oscillation_sq: float
    oscillation_bound: Optional[float]  # π·annulus_energy/ln 2 when r2/r1 ≥ 2
    radii: np.ndarray
    profile: np.ndarray


def circle_energy(u: DiskMap, center, r: float, n_theta: Optional[int] = None) -> tuple[float, float]:
    """``(∫|∂_θu|²dθ, max oscillation²)`` of the P1 map on the circle of radius ``r``."""
    if n_theta is None:
        n_theta = int(max(128, np.ceil(8 * 2 * np.pi * r / u.mesh.h)))
    t = 2 * np.pi * np.arange(n_theta) / n_theta
    pts = np.asarray(center, float) + r * np.stack([np.cos(t), np.sin(t)], axis=1)
    vals = u.mesh.interpolate(u.values, pts)
    diff = np.roll(vals, -1, axis=0) - vals
    e = float(np.sum(diff * diff) / (2 * np.pi / n_theta))
    span = vals.max(axis=0) - vals.min(axis=0)
    # diameter of the sampled image (exact for p = 1, upper bound up to √p otherwise)
    from scipy.spatial.distance import pdist
    osc = float(np.max(pdist(vals)) ** 2) if len(vals) > 1 and vals.shape[1] > 1 else float(np.max(span) ** 2)
    return e, osc


def courant_lebesgue_radius(u: DiskMap, center, r1: float, r2: float, n_radii: int = 48) -> CourantLebesgueResult:
    """Radius in ``[r1, r2]`` minimising ``∫|∂_θ u|² dθ`` on circles about ``center``."""
    from .energy import EmptyAnnulus

    if not 0 < r1 < r2:
        raise ValueError("need 0 < r1 < r2")
    mask = annulus_mask(u.mesh, center, r1, r2)
    if not np.any(mask):
        raise EmptyAnnulus("annulus misses the mesh")
    E_ann = 2 * dirichlet_energy(u, mask)
    radii = np.linspace(r1, r2, n_radii)
    prof = np.array([circle_energy(u, center, r)[0] for r in radii])
    k = int(np.argmin(prof))
    e, osc = circle_energy(u, center, radii[k])
    ob = float(np.pi * E_ann / np.log(2)) if r2 / r1 >= 2 else None
    return CourantLebesgueResult(float(radii[k]), e, e / radii[k], E_ann, E_ann / np.log(r2 / r1), osc, ob,
                                 radii, prof)


# ---------------------------------------------------------------------------
# ε-regularity
# ---------------------------------------------------------------------------
def epsilon_regularity_check(u: DiskMap, radius: float = 0.5) -> float:
    """``max |∇u|`` over triangles in ``{|x| < radius}`` divided by ``‖∇u‖_{L²}``.

    For half-disk meshes the inner region is ``𝔻₊ ∩ {|x| < radius}`` and the
    norm is over ``𝔻₊``.
    """
    G = u.gradients()
    dens = np.sqrt(np.sum(G * G, axis=(1, 2)))
    l2 = np.sqrt(np.sum(u.mesh.areas * dens**2))
    if l2 == 0:
        return 0.0
    inner = np.linalg.norm(u.mesh.barycenters, axis=1) < radius
    return float(np.max(dens[inner]) / l2)
