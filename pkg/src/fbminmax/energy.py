"""Energy-type functionals of P1 disk maps.

Conventions: ``E(u) = ½∫|∇u|²``; the Hardy right-hand sides use the full
``∫|∇u|²`` as in the inequalities they check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import DiskMap, DiskMesh, triangle_gradients


class NonzeroTrace(ValueError):
    pass


class EmptyAnnulus(ValueError):
    pass


# symmetric 6-point rule, exact for degree 4, all nodes strictly inside
_Q_A, _Q_B = 0.445948490915965, 0.091576213509771
_Q_WA, _Q_WB = 0.223381589678011, 0.109951743655322
QUAD_BARY = np.array([
    [_Q_A, _Q_A, 1 - 2 * _Q_A], [_Q_A, 1 - 2 * _Q_A, _Q_A], [1 - 2 * _Q_A, _Q_A, _Q_A],
    [_Q_B, _Q_B, 1 - 2 * _Q_B], [_Q_B, 1 - 2 * _Q_B, _Q_B], [1 - 2 * _Q_B, _Q_B, _Q_B],
])
QUAD_W = np.array([_Q_WA] * 3 + [_Q_WB] * 3)


@dataclass
class EnergyBreakdown:
    dirichlet: float
    area: float
    defect: float
    density: np.ndarray  # per-triangle ½|∇u|²

    def as_dict(self) -> dict:
        return {"dirichlet_energy": self.dirichlet, "area": self.area, "conformality_defect": self.defect}


def _grads(u) -> tuple[DiskMesh, np.ndarray]:
    return u.mesh, u.gradients()


def energy_density(u: DiskMap) -> np.ndarray:
    G = u.gradients()
    return 0.5 * np.sum(G * G, axis=(1, 2))


def dirichlet_energy(u: DiskMap, tri_mask=None) -> float:
    """``½∫|∇u|²`` from the per-triangle affine gradients."""
    d = energy_density(u) * u.mesh.areas
    return float(d.sum() if tri_mask is None else d[tri_mask].sum())


def area_density(u: DiskMap) -> np.ndarray:
    G = u.gradients()
    ux, uy = G[:, 0], G[:, 1]
    g = np.sum(ux * ux, 1) * np.sum(uy * uy, 1) - np.sum(ux * uy, 1) ** 2
    return np.sqrt(np.maximum(g, 0.0))


def area(u: DiskMap, tri_mask=None) -> float:
    """Area of the image counted with multiplicity: ``∫√(|u_x|²|u_y|² − ⟨u_x,u_y⟩²)``."""
    d = area_density(u) * u.mesh.areas
    return float(d.sum() if tri_mask is None else d[tri_mask].sum())


def conformality_defect(u: DiskMap) -> float:
    return dirichlet_energy(u) - area(u)


def energy_breakdown(u: DiskMap) -> EnergyBreakdown:
    E, A = dirichlet_energy(u), area(u)
    return EnergyBreakdown(E, A, E - A, energy_density(u))


@dataclass
class HopfField:
    phi: np.ndarray  # complex, per triangle
    interior_l1: float
    boundary_l1: float


def hopf_differential(u: DiskMap, collar: float | None = None) -> HopfField:
    """``φ = |u_x|² − |u_y|² − 2i⟨u_x, u_y⟩`` per triangle.

    ``interior_l1`` is ``∫_𝔻 |φ|``.  ``boundary_l1`` integrates the imaginary
    part of ``φ`` rotated to the boundary direction (``z²φ`` on the unit circle,
    ``φ`` itself along the diameter of a half-disk) over a collar of width
    ``collar`` (default ``2h``).
    """
    mesh = u.mesh
    G = u.gradients()
    ux, uy = G[:, 0], G[:, 1]
    phi = np.sum(ux * ux, 1) - np.sum(uy * uy, 1) - 2j * np.sum(ux * uy, 1)
    w = mesh.areas
    collar = 2 * mesh.h if collar is None else collar
    b = mesh.barycenters
    rb = np.linalg.norm(b, axis=1)
    z = (b[:, 0] + 1j * b[:, 1]) / np.maximum(rb, 1e-300)
    circ = rb > 1.0 - collar
    bl1 = float(np.sum(w[circ] * np.abs(np.imag(z[circ] ** 2 * phi[circ]))))
    if mesh.domain == "half_disk":
        seg = b[:, 1] < collar
        bl1 += float(np.sum(w[seg] * np.abs(np.imag(phi[seg]))))
    return HopfField(phi, float(np.sum(w * np.abs(phi))), bl1)


def stiffness_matrix(mesh: DiskMesh, tri_mask=None) -> sp.csr_matrix:
    """P1 stiffness matrix ``K_ij = ∫∇φ_i·∇φ_j`` (optionally over a triangle subset)."""
    T = mesh.triangles
    B = mesh.basis_gradients
    A = mesh.areas
    if tri_mask is not None:
        T, B, A = T[tri_mask], B[tri_mask], A[tri_mask]
    local = A[:, None, None] * np.einsum("tid,tjd->tij", B, B)
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def mass_matrix(mesh: DiskMesh) -> sp.csr_matrix:
    T, A = mesh.triangles, mesh.areas
    local = A[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None] / 12.0
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


# ---------------------------------------------------------------------------
# Hardy functionals
# ---------------------------------------------------------------------------
def _scalar_values(u) -> tuple[DiskMesh, np.ndarray]:
    vals = np.asarray(u.values, dtype=float)
    if vals.ndim == 2:
        if vals.shape[1] != 1:
            raise ValueError("Hardy functionals take scalar fields")
        vals = vals[:, 0]
    return u.mesh, vals


def _dirichlet_integral(mesh: DiskMesh, vals: np.ndarray) -> float:
    G = triangle_gradients(mesh, vals)
    return float(np.sum(mesh.areas * np.sum(G * G, axis=(1, 2))))


def hardy_disk(u: DiskMap, trace_tol: float = 1e-10) -> tuple[float, float]:
    """``(¼∫u²/(1−|x|)², ∫|∇u|²)`` for a scalar field vanishing on ``∂𝔻``.

    The weighted integral uses a degree-4 rule whose nodes lie strictly inside
    each triangle, so the singular weight is never evaluated on the boundary.
    """
    mesh, vals = _scalar_values(u)
    if mesh.domain != "disk":
        raise ValueError("hardy_disk needs a full-disk mesh")
    if np.max(np.abs(vals[mesh.boundary_loop])) > trace_tol:
        raise NonzeroTrace("field does not vanish on the boundary circle")
    V = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    pts = np.einsum("qk,tkd->tqd", QUAD_BARY, V)
    uq = np.einsum("qk,tk->tq", QUAD_BARY, vals[mesh.triangles])
    wgt = 1.0 / (1.0 - np.linalg.norm(pts, axis=2)) ** 2
    lhs = 0.25 * float(np.sum(mesh.areas[:, None] * QUAD_W[None] * uq * uq * wgt))
    return lhs, _dirichlet_integral(mesh, vals)


def hardy_half_disk(u: DiskMap, trace_tol: float = 1e-10) -> tuple[float, float]:
    """``(∫_I u²/(1−x₁²), (π/2)∫_{𝔻₊}|∇u|²)`` for a field vanishing on the arc.

    The trace integral uses the midpoint rule on the diameter edges.
    """
    mesh, vals = _scalar_values(u)
    if mesh.domain != "half_disk":
        raise ValueError("hardy_half_disk needs a half-disk mesh")
    if np.max(np.abs(vals[mesh.arc_vertices])) > trace_tol:
        raise NonzeroTrace("field does not vanish on the arc")
    seg = np.flatnonzero(np.abs(mesh.vertices[:, 1]) < 1e-14)
    seg = seg[np.argsort(mesh.vertices[seg, 0])]
    x = mesh.vertices[seg, 0]
    um = 0.5 * (vals[seg[1:]] + vals[seg[:-1]])
    xm = 0.5 * (x[1:] + x[:-1])
    lhs = float(np.sum(np.diff(x) * um * um / (1.0 - xm * xm)))
    return lhs, 0.5 * np.pi * _dirichlet_integral(mesh, vals)


# ---------------------------------------------------------------------------
# polar decomposition
# ---------------------------------------------------------------------------
def annulus_mask(mesh: DiskMesh, center, r_in: float, r_out: float) -> np.ndarray:
    d = np.linalg.norm(mesh.barycenters - np.asarray(center, dtype=float), axis=1)
    return (d >= r_in) & (d < r_out)


def angular_radial_split(u: DiskMap, center, r_in: float, r_out: float) -> tuple[float, float]:
    """``(∫|r⁻¹∂_θu|², ∫|∂_r u|²)`` over triangles whose barycentres lie in the annulus.

    Polar frames are taken at barycentres, so the two parts sum to twice the
    annulus Dirichlet energy exactly.  Around a boundary point the annulus is
    automatically clipped to the mesh.
    """
    mesh = u.mesh
    mask = annulus_mask(mesh, center, r_in, r_out)
    if not np.any(mask):
        raise EmptyAnnulus(f"no triangles in annulus {r_in} <= r < {r_out}")
    G = u.gradients()[mask]
    d = mesh.barycenters[mask] - np.asarray(center, dtype=float)
    er = d / np.linalg.norm(d, axis=1, keepdims=True)
    et = np.stack([-er[:, 1], er[:, 0]], axis=1)
    gr = np.einsum("td,tdp->tp", er, G)
    gt = np.einsum("td,tdp->tp", et, G)
    a = mesh.areas[mask]
    return float(np.sum(a * np.sum(gt * gt, 1))), float(np.sum(a * np.sum(gr * gr, 1)))


def energy_report(u: DiskMap) -> dict:
    """Scalar functionals keyed by operation name, for JSON reports."""
    br = energy_breakdown(u)
    hf = hopf_differential(u)
    return {
        "dirichlet_energy": br.dirichlet,
        "area": br.area,
        "conformality_defect": br.defect,
        "hopf_differential": {"interior_l1": hf.interior_l1, "boundary_l1": hf.boundary_l1},
    }
