"""Triangulated unit disk / half-disk, P1 maps on them, and ball families.

Meshes are built from concentric rings of nearly equally spaced points and a
Delaunay triangulation.  A :class:`DiskMap` stores one point of ``R^p`` per
vertex; gradients are the per-triangle affine gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .geometry import ManifoldPair


class MeshError(Exception):
    pass


class ResolutionTooCoarse(MeshError):
    pass


class FamilyError(ValueError):
    pass


class Overlap(FamilyError):
    pass


class NotOrthogonal(FamilyError):
    pass


class OutsideDisk(FamilyError):
    pass


ORTHO_SNAP_TOL = 1e-6


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------
@dataclass(eq=False)
class DiskMesh:
    """Triangulation of the closed unit disk (``domain="disk"``) or upper half-disk.

    For the half-disk, ``boundary_loop`` runs counter-clockwise along the arc
    ``A`` from ``(1, 0)`` to ``(-1, 0)`` and back along the segment ``I``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loop: np.ndarray
    target_edge_length: float
    domain: str = "disk"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def h(self) -> float:
        return self.target_edge_length

    @cached_property
    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three hat functions on each triangle, shape ``(nt, 3, 2)``."""
        v = self.vertices[self.triangles]
        x, y = v[:, :, 0], v[:, :, 1]
        twice = 2.0 * self.areas
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / twice[:, None]
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / twice[:, None]
        return np.stack([gx, gy], axis=2)

    @cached_property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_loop] = True
        return mask

    @cached_property
    def arc_vertices(self) -> np.ndarray:
        """Vertices on the unit circle (all boundary vertices for the full disk)."""
        b = self.boundary_loop
        return b[np.abs(np.linalg.norm(self.vertices[b], axis=1) - 1.0) < 1e-12]

    @cached_property
    def segment_vertices(self) -> np.ndarray:
        """Half-disk only: vertices on the diameter ``I`` (endpoints excluded)."""
        if self.domain != "half_disk":
            return np.zeros(0, dtype=int)
        b = self.boundary_loop
        on_axis = np.abs(self.vertices[b, 1]) < 1e-14
        not_arc = np.abs(np.linalg.norm(self.vertices[b], axis=1) - 1.0) >= 1e-12
        return b[on_axis & not_arc]

    @cached_property
    def edges(self) -> np.ndarray:
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        b = self.boundary_loop
        return np.stack([b, np.roll(b, -1)], axis=1)

    @cached_property
    def vertex_triangles(self) -> list:
        out = [[] for _ in range(self.n_vertices)]
        for t, tri in enumerate(self.triangles):
            for v in tri:
                out[v].append(t)
        return [np.asarray(o, dtype=int) for o in out]

    @cached_property
    def _tree(self) -> cKDTree:
        return cKDTree(self.barycenters)

    def min_angle(self) -> float:
        """Smallest interior angle in degrees."""
        v = self.vertices[self.triangles]
        angs = []
        for i in range(3):
            a = v[:, (i + 1) % 3] - v[:, i]
            b = v[:, (i + 2) % 3] - v[:, i]
            c = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angs.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
        return float(np.min(angs))

    def total_area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def _vtree(self) -> cKDTree:
        return cKDTree(self.vertices)

    def local_h(self, points) -> np.ndarray:
        """Longest edge among the triangles around the vertex nearest to each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _, idx = self._vtree.query(pts)
        out = np.empty(len(pts))
        for k, i in enumerate(idx):
            v = self.vertices[self.triangles[self.vertex_triangles[i]]]
            e = np.concatenate([v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]])
            out[k] = np.max(np.linalg.norm(e, axis=1))
        return out

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Containing triangle and barycentric coordinates for each point.

        Points outside the triangulated polygon are assigned to the closest
        candidate triangle with clamped (renormalised) coordinates.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(12, len(self.triangles))
        _, cand = self._tree.query(pts, k=k)
        cand = cand.reshape(len(pts), k)
        v = self.vertices[self.triangles[cand]]  # (n, k, 3, 2)
        e1 = v[:, :, 1] - v[:, :, 0]
        e2 = v[:, :, 2] - v[:, :, 0]
        d = pts[:, None, :] - v[:, :, 0]
        det = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
        l1 = (d[..., 0] * e2[..., 1] - d[..., 1] * e2[..., 0]) / det
        l2 = (e1[..., 0] * d[..., 1] - e1[..., 1] * d[..., 0]) / det
        lam = np.stack([1.0 - l1 - l2, l1, l2], axis=-1)
        score = lam.min(axis=-1)
        best = np.argmax(score, axis=1)
        rows = np.arange(len(pts))
        tri = cand[rows, best]
        bc = lam[rows, best]
        outside = score[rows, best] < -1e-12
        if np.any(outside):
            bc[outside] = np.clip(bc[outside], 0.0, None)
            bc[outside] /= bc[outside].sum(axis=1, keepdims=True)
        return tri, bc

    def interpolate(self, values: np.ndarray, points) -> np.ndarray:
        """Evaluate the P1 interpolant of vertex ``values`` at ``points``."""
        tri, bc = self.locate(points)
        vals = np.asarray(values)[self.triangles[tri]]
        return np.einsum("nk,nk...->n...", bc, vals)


def _orient_ccw(vertices: np.ndarray, tris: np.ndarray) -> np.ndarray:
    v = vertices[tris]
    e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    tris = tris.copy()
    neg = cross < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    keep = np.abs(cross) > 1e-14
    return tris[keep]


def build_disk_mesh(h: float) -> DiskMesh:
    """Quasi-uniform triangulation of the closed unit disk with edge length about ``h``."""
    if not 0 < h < 1:
        raise ValueError("need 0 < h < 1")
    n_bdry = int(round(2 * np.pi / h))
    if n_bdry < 3:
        raise ResolutionTooCoarse(f"h={h} gives {n_bdry} boundary vertices")
    n_rings = max(1, int(round(1.0 / h)))
    pts = [np.zeros((1, 2))]
    for k in range(1, n_rings + 1):
        r = k / n_rings
        m = n_bdry if k == n_rings else max(6, int(round(2 * np.pi * r / h)))
        phase = 0.0 if k == n_rings else 0.5 * (k % 2) * 2 * np.pi / m
        t = phase + 2 * np.pi * np.arange(m) / m
        pts.append(np.stack([r * np.cos(t), r * np.sin(t)], axis=1))
    V = np.concatenate(pts)
    tris = _orient_ccw(V, Delaunay(V).simplices)
    boundary = np.arange(len(V) - n_bdry, len(V))
    return DiskMesh(V, tris, boundary, float(h), "disk")


def build_half_disk_mesh(h: float) -> DiskMesh:
    """Triangulation of the closed upper half-disk ``{|x| <= 1, x_2 >= 0}``."""
    if not 0 < h < 1:
        raise ValueError("need 0 < h < 1")
    n_arc = int(round(np.pi / h))
    if n_arc < 2:
        raise ResolutionTooCoarse(f"h={h} gives too few arc vertices")
    n_rings = max(1, int(round(1.0 / h)))
    pts = [np.zeros((1, 2))]
    for k in range(1, n_rings + 1):
        r = k / n_rings
        m = n_arc if k == n_rings else max(2, int(round(np.pi * r / h)))
        t = np.pi * np.arange(m + 1) / m
        ring = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
        ring[0, 1] = ring[-1, 1] = 0.0
        pts.append(ring)
    V = np.concatenate(pts)
    tris = _orient_ccw(V, Delaunay(V).simplices)
    n_out = n_arc + 1
    arc = np.arange(len(V) - n_out, len(V))  # from (1,0) to (-1,0)
    axis = np.flatnonzero((np.abs(V[:, 1]) < 1e-14) & (np.abs(np.abs(V[:, 0]) - 1.0) > 1e-12))
    axis = axis[np.argsort(V[axis, 0])]  # from -1 towards 1
    boundary = np.concatenate([arc, axis])
    return DiskMesh(V, tris, boundary, float(h), "half_disk")


def _march(curve, t0: float, t1: float, spacing, closed: bool) -> np.ndarray:
    """Parameters along an arclength-parametrised curve with local ``spacing``."""
    ts = [t0]
    while True:
        t = ts[-1] + spacing(curve(np.array([ts[-1]]))[0])
        if t >= t1 - (0.5 if closed else 0.3) * spacing(curve(np.array([t1]))[0]):
            break
        ts.append(t)
    if not closed:
        ts.append(t1)
    return np.asarray(ts)


def build_graded_mesh(h: float, centers, h_min: float, ratio: float = 1.3, domain: str = "disk") -> DiskMesh:
    """Disk / half-disk mesh refined geometrically towards ``centers``.

    The local edge length is ``ℓ(x) = min(h, h_min + (ratio−1)·dist(x, centers))``:
    rings of geometrically growing radius surround each centre, the uniform
    mesh is used beyond the grading zone, and boundary vertices are placed by
    marching along the boundary with spacing ``ℓ``.
    """
    if domain not in ("disk", "half_disk"):
        raise ValueError(f"unknown domain {domain!r}")
    if not 0 < h_min <= h < 1 or ratio <= 1:
        raise ValueError("need 0 < h_min <= h < 1 and ratio > 1")
    C = np.atleast_2d(np.asarray(centers, dtype=float)).reshape(-1, 2)
    g = ratio - 1.0

    def ell(x):
        x = np.atleast_2d(x)
        d = np.min(np.linalg.norm(x[:, None, :] - C[None], axis=2), axis=1)
        return np.minimum(h, h_min + g * d)

    def wall(x):
        x = np.atleast_2d(x)
        d = 1.0 - np.linalg.norm(x, axis=1)
        return np.minimum(d, x[:, 1]) if domain == "half_disk" else d

    def circle(t):
        return np.stack([np.cos(t), np.sin(t)], axis=1)

    sp1 = lambda x: float(ell(x)[0])
    if domain == "disk":
        t0 = float(np.arctan2(C[0, 1], C[0, 0]))
        arc = circle(_march(circle, t0, t0 + 2 * np.pi, sp1, closed=True))
        bpts = [arc]
        seg = np.zeros((0, 2))
    else:
        arc = circle(_march(circle, 0.0, np.pi, sp1, closed=False))
        arc[0] = [1.0, 0.0]
        arc[-1] = [-1.0, 0.0]
        line = lambda t: np.stack([t, np.zeros_like(t)], axis=1)
        xs = _march(line, -1.0, 1.0, sp1, closed=False)[1:-1]
        seg = line(xs)
        bpts = [arc, seg]
    r_grade = (h - h_min) / g
    base = build_disk_mesh(h) if domain == "disk" else build_half_disk_mesh(h)
    bv = base.vertices[~base.is_boundary]
    dC = np.min(np.linalg.norm(bv[:, None, :] - C[None], axis=2), axis=1)
    interior = [bv[(dC >= r_grade) & (wall(bv) >= 0.6 * h)]]
    for ci, c in enumerate(C):
        rings = [c[None]]
        r = h_min
        k = 0
        while r < r_grade:
            m = max(6, int(np.ceil(2 * np.pi * r / (h_min + g * r))))
            t = (0.5 * (k % 2)) * 2 * np.pi / m + 2 * np.pi * np.arange(m) / m
            rings.append(c + r * circle(t))
            r += h_min + g * r
            k += 1
        R = np.concatenate(rings)
        near = np.argmin(np.linalg.norm(R[:, None, :] - C[None], axis=2), axis=1) == ci
        interior.append(R[near & (wall(R) >= 0.6 * ell(R))])
    V = np.concatenate(bpts + interior)
    V = V[np.unique(np.round(V, 13), axis=0, return_index=True)[1]]
    tris = _orient_ccw(V, Delaunay(V).simplices)
    onc = np.abs(np.linalg.norm(V, axis=1) - 1.0) < 1e-12
    if domain == "disk":
        b = np.flatnonzero(onc)
        boundary = b[np.argsort(np.arctan2(V[b, 1], V[b, 0]))]
    else:
        a = np.flatnonzero(onc & (V[:, 1] >= -1e-14))
        a = a[np.argsort(np.arctan2(V[a, 1], V[a, 0]) % (2 * np.pi + 1e-9))]
        ax = np.flatnonzero((np.abs(V[:, 1]) < 1e-14) & ~onc)
        ax = ax[np.argsort(V[ax, 0])]
        boundary = np.concatenate([a, ax])
    # Delaunay may emit flat triangles along straight or nearly straight boundary runs
    v = V[tris]
    cross = np.abs((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0]))
    lmax = np.max(np.linalg.norm(v - np.roll(v, 1, axis=1), axis=2), axis=1)
    tris = tris[cross > 1e-6 * lmax**2]
    return DiskMesh(V, tris, boundary, float(h), domain)


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------
@dataclass(eq=False)
class DiskMap:
    """Vertex-valued map from a :class:`DiskMesh` into ``R^p``.

    ``constrained`` marks boundary vertices whose values must lie on ``M``
    (all of ``∂𝔻`` for a disk, the diameter ``I`` for a half-disk).
    """

    mesh: DiskMesh
    values: np.ndarray
    pair: Optional[ManifoldPair] = None
    constrained: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != self.mesh.n_vertices:
            raise ValueError("one value per vertex required")
        if self.constrained is None:
            mask = np.zeros(self.mesh.n_vertices, dtype=bool)
            if self.pair is not None:
                if self.mesh.domain == "half_disk":
                    mask[self.mesh.segment_vertices] = True
                else:
                    mask[self.mesh.boundary_loop] = True
            self.constrained = mask

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "DiskMap":
        return DiskMap(self.mesh, self.values.copy(), self.pair, self.constrained.copy())

    def with_values(self, values: np.ndarray) -> "DiskMap":
        return DiskMap(self.mesh, values, self.pair, self.constrained.copy())

    def gradients(self) -> np.ndarray:
        """Per-triangle gradient, shape ``(nt, 2, p)``; row ``i`` is ``∂_i u``."""
        return triangle_gradients(self.mesh, self.values)

    def violations(self, tol: float = 1e-8) -> dict:
        if self.pair is None:
            return {"N": 0.0, "M": 0.0}
        dN = float(np.max(self.pair.N.residual(self.values), initial=0.0))
        c = self.constrained
        dM = float(np.max(self.pair.M.residual(self.values[c]), initial=0.0)) if np.any(c) else 0.0
        return {"N": dN, "M": dM}

    def is_valid(self, tol: float = 1e-8) -> bool:
        v = self.violations()
        return v["N"] <= tol and v["M"] <= tol

    def sup_distance(self, other: "DiskMap") -> float:
        return float(np.max(np.linalg.norm(self.values - other.values, axis=1)))


def triangle_gradients(mesh: DiskMesh, values: np.ndarray) -> np.ndarray:
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    return np.einsum("tkd,tkp->tdp", mesh.basis_gradients, vals[mesh.triangles])


def map_from_function(mesh: DiskMesh, fn, pair: Optional[ManifoldPair] = None) -> DiskMap:
    """Sample ``fn(x, y) -> array (n, p)`` (or ``(n,)``) at the mesh vertices."""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    vals = np.asarray(fn(x, y), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    elif vals.shape[0] != mesh.n_vertices and vals.shape[-1] == mesh.n_vertices:
        vals = vals.T
    return DiskMap(mesh, vals, pair)


def constant_map(mesh: DiskMesh, c, pair: Optional[ManifoldPair] = None) -> DiskMap:
    c = np.asarray(c, dtype=float)
    return DiskMap(mesh, np.tile(c, (mesh.n_vertices, 1)), pair)


# ---------------------------------------------------------------------------
# ball families
# ---------------------------------------------------------------------------
def _discs_meet(discs: Sequence[tuple[np.ndarray, float]], tol: float = 1e-12) -> bool:
    """Whether a finite set of closed discs has a common point.

    If the intersection is non-empty its leftmost point is either the leftmost
    point of one disc or an intersection point of two boundary circles.
    """
    cands = [c - np.array([r, 0.0]) for c, r in discs]
    for i in range(len(discs)):
        for j in range(i + 1, len(discs)):
            (c1, r1), (c2, r2) = discs[i], discs[j]
            d = np.linalg.norm(c2 - c1)
            if d > r1 + r2 + tol or d < abs(r1 - r2) - tol or d == 0:
                continue
            a = (r1 * r1 - r2 * r2 + d * d) / (2 * d)
            hh = np.sqrt(max(r1 * r1 - a * a, 0.0))
            e = (c2 - c1) / d
            mid = c1 + a * e
            perp = np.array([-e[1], e[0]])
            cands += [mid + hh * perp, mid - hh * perp]
    for q in cands:
        if all(np.linalg.norm(q - c) <= r + tol for c, r in discs):
            return True
    return False


@dataclass(frozen=True, eq=False)
class BallFamily:
    """Disjoint closed interior balls and boundary-orthogonal half-balls.

    Radii are stored as base radii times a cumulative dilation ``alpha`` so
    that repeated scaling composes exactly.
    """

    base_interior: tuple = ()
    base_half: tuple = ()
    alpha: float = 1.0
    label: str = ""

    @property
    def interior_balls(self) -> list[tuple[np.ndarray, float]]:
        return [(np.asarray(a, dtype=float), r * self.alpha) for a, r in self.base_interior]

    @property
    def half_balls(self) -> list[tuple[np.ndarray, float]]:
        out = []
        for a, r in self.base_half:
            a = np.asarray(a, dtype=float)
            rr = r * self.alpha
            out.append((a / np.linalg.norm(a) * np.sqrt(1.0 + rr * rr), rr))
        return out

    @property
    def balls(self) -> list[tuple[np.ndarray, float, str]]:
        return [(a, r, "interior") for a, r in self.interior_balls] + [(a, r, "half") for a, r in self.half_balls]

    def __len__(self) -> int:
        return len(self.base_interior) + len(self.base_half)

    def contains(self, points) -> np.ndarray:
        """Mask of points lying in the union of the (closed) balls intersected with 𝔻."""
        pts = np.atleast_2d(points)
        mask = np.zeros(len(pts), dtype=bool)
        for a, r, _ in self.balls:
            mask |= np.linalg.norm(pts - a, axis=1) <= r
        return mask & (np.linalg.norm(pts, axis=1) <= 1.0 + 1e-12)

    def membership(self, points) -> np.ndarray:
        """Index of the ball containing each point, ``-1`` if none."""
        pts = np.atleast_2d(points)
        out = -np.ones(len(pts), dtype=int)
        for i, (a, r, _) in enumerate(self.balls):
            out[(np.linalg.norm(pts - a, axis=1) <= r) & (out < 0)] = i
        return out

    def triangle_mask(self, mesh: DiskMesh) -> np.ndarray:
        return self.contains(mesh.barycenters)

    def to_spec(self) -> list[dict]:
        return [{"kind": k, "center": [float(c) for c in a], "radius": float(r)} for a, r, k in self.balls]


def make_ball_family(spec: Iterable, label: str = "") -> BallFamily:
    """Validate a list of balls and build a :class:`BallFamily`.

    Each entry is a mapping with ``kind`` (``"interior"`` or ``"half"``),
    ``center`` and ``radius``, or a tuple ``(kind, center, radius)``.
    Half-ball centres within ``1e-6`` of the orthogonality relation
    ``|a|^2 = 1 + r^2`` are snapped onto it.
    """
    interior, half = [], []
    for item in spec:
        if isinstance(item, dict):
            kind, a, r = item.get("kind", "interior"), item["center"], item["radius"]
        else:
            kind, a, r = item
        a = np.asarray(a, dtype=float).reshape(2)
        r = float(r)
        if r <= 0:
            raise FamilyError("radii must be positive")
        if kind == "interior":
            if np.linalg.norm(a) + r >= 1.0:
                raise OutsideDisk(f"closed ball B({a.tolist()}, {r}) is not inside the open disk")
            interior.append((tuple(a), r))
        elif kind == "half":
            n = np.linalg.norm(a)
            if n <= 1.0:
                raise OutsideDisk("half-ball centres lie outside the closed disk")
            if abs(n * n - 1.0 - r * r) > ORTHO_SNAP_TOL:
                raise NotOrthogonal(f"|a|^2 - 1 - r^2 = {n * n - 1 - r * r:.3g}")
            a = a / n * np.sqrt(1.0 + r * r)
            half.append((tuple(a), r))
        else:
            raise FamilyError(f"unknown ball kind {kind!r}")
    fam = BallFamily(tuple(interior), tuple(half), 1.0, label)
    check_disjoint(fam)
    return fam


def check_disjoint(fam: BallFamily) -> None:
    balls = fam.balls
    unit = (np.zeros(2), 1.0)
    for i in range(len(balls)):
        for j in range(i + 1, len(balls)):
            ai, ri, ki = balls[i]
            aj, rj, kj = balls[j]
            discs = [(ai, ri), (aj, rj)]
            if ki == "half" or kj == "half":
                discs.append(unit)
            if _discs_meet(discs):
                raise Overlap(f"balls {i} and {j} have intersecting closures")


def scale_family(f: BallFamily, alpha: float) -> BallFamily:
    """Dilate every radius by ``alpha`` keeping interior centres and half-ball directions."""
    if not 0 < alpha <= 1:
        raise ValueError("need 0 < alpha <= 1")
    return BallFamily(f.base_interior, f.base_half, f.alpha * alpha, f.label)


def union_family(*fams: BallFamily, label: str = "") -> BallFamily:
    spec = [b for f in fams for b in f.to_spec()]
    return make_ball_family(spec, label)


def whole_disk_family(margin: float = 1e-9) -> BallFamily:
    """A single interior ball exhausting the disk up to ``margin``."""
    return make_ball_family([{"kind": "interior", "center": (0.0, 0.0), "radius": 1.0 - margin}], "whole")


def region_energy(u: DiskMap, f: BallFamily) -> float:
    """Dirichlet energy ``½∫|∇u|²`` over triangles whose barycentres lie in the family."""
    mask = f.triangle_mask(u.mesh)
    G = u.gradients()[mask]
    return float(0.5 * np.sum(u.mesh.areas[mask] * np.sum(G * G, axis=(1, 2))))


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------
def write_off(mesh: DiskMesh, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {len(mesh.triangles)} 0\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")


def read_off(path, h: float = float("nan"), domain: str = "disk") -> DiskMesh:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if lines[0].strip() != "OFF":
        raise MeshError("not an OFF file")
    nv, nt, _ = map(int, lines[1].split())
    V = np.array([list(map(float, ln.split()[:2])) for ln in lines[2 : 2 + nv]])
    T = np.array([list(map(int, ln.split()[1:4])) for ln in lines[2 + nv : 2 + nv + nt]])
    # boundary loop: boundary edges appear in exactly one triangle
    e = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
    key = np.sort(e, axis=1)
    _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    bedges = e[cnt[inv.reshape(-1)] == 1]
    nxt = {a: b for a, b in bedges}
    start = int(bedges[np.argmax(V[bedges[:, 0], 0] + 1e-9 * V[bedges[:, 0], 1]), 0]) if domain == "disk" else int(
        np.flatnonzero(np.all(np.isclose(V, [1.0, 0.0]), axis=1))[0])
    loop = [start]
    while nxt[loop[-1]] != start:
        loop.append(int(nxt[loop[-1]]))
    return DiskMesh(V, T, np.asarray(loop), h, domain)


def write_map(u: DiskMap, path) -> None:
    """Write the mesh as OFF to ``path`` and the vertex values to ``path + '.values'``."""
    write_off(u.mesh, path)
    np.savetxt(str(path) + ".values", u.values, fmt="%.17g")
