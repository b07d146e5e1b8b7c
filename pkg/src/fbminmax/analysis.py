"""Concentration detection, rescaling, neck profiles and energy identities for slice sequences."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .energy import angular_radial_split, annulus_mask, area, dirichlet_energy, energy_density
from .geometry import ManifoldPair, sphere, unit_ball_pair
from .mesh import DiskMap, DiskMesh, build_disk_mesh, build_graded_mesh, build_half_disk_mesh


class ScaleBelowMesh(ValueError):
    pass


class EmptyRange(ValueError):
    pass


# ---------------------------------------------------------------------------
# Möbius charts
# ---------------------------------------------------------------------------
def phi(a: complex, z):
    """``φ_a(z) = i(a − z)/(a + z)``: the disk onto the upper half-plane with ``a ↦ 0``."""
    z = np.asarray(z, dtype=complex)
    return 1j * (a - z) / (a + z)


def phi_inv(a: complex, w):
    """Inverse of :func:`phi`: ``z = a(i − w)/(i + w)``."""
    w = np.asarray(w, dtype=complex)
    return a * (1j - w) / (1j + w)


def _c(p) -> complex:
    p = np.asarray(p, dtype=float)
    return complex(p[0], p[1])


def _xy(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1)


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------
@dataclass
class Concentration:
    center: np.ndarray
    scale: float
    energy: float
    kind: str  # "interior" | "boundary"
    extent: float = 0.0  # radius beyond which the concentration's annular energy has decayed

    def as_dict(self) -> dict:
        return {"center": self.center.tolist(), "scale": self.scale, "energy": self.energy, "kind": self.kind,
                "extent": self.extent}


def default_r_scan(r_min: float = 1e-3, r_max: float = 0.5, factor: float = 1.25) -> np.ndarray:
    n = int(np.floor(np.log(r_max / r_min) / np.log(factor))) + 1
    return r_min * factor ** np.arange(n)


def detect_concentration(u: DiskMap, eps_threshold: float = 1.0, r_scan: Optional[Sequence[float]] = None,
                         boundary_factor: float = 2.0, max_extent: float = 0.5) -> list[Concentration]:
    """Points whose ball energy exceeds ``eps_threshold`` at the smallest scanned radius.

    Radii are scanned in increasing order; at each radius the ball (around a
    triangle barycentre) with the largest energy is taken while it exceeds
    the threshold and its centre is refined to the energy-weighted centroid.
    The concentration's extent is found by doubling a radius while the energy
    of the next dyadic annulus exceeds ``eps_threshold/4`` and does not grow
    like a smooth background (a factor ≥ 3 per doubling);
    triangles within twice the extent are removed from further scans.  A
    detection within ``boundary_factor·r`` of the circle is boundary-type and
    its centre is moved onto the circle.
    """
    mesh = u.mesh
    r_scan = default_r_scan() if r_scan is None else np.sort(np.asarray(r_scan, dtype=float))
    e = energy_density(u) * mesh.areas
    B = mesh.barycenters
    tree = cKDTree(B)
    alive = np.ones(len(B), dtype=bool)
    found: list[Concentration] = []
    for r in r_scan:
        while True:
            ea = np.where(alive, e, 0.0)
            cand = np.flatnonzero(alive & (e > 0))
            if len(cand) == 0:
                break
            # energy of the ball B(x, r) for every live barycentre x
            nbrs = tree.query_ball_point(B[cand], r)
            tot = np.array([ea[n].sum() for n in nbrs])
            k = int(np.argmax(tot))
            if tot[k] <= eps_threshold:
                break
            idx = np.asarray(nbrs[k], dtype=int)
            c = np.sum(B[idx] * ea[idx, None], axis=0) / ea[idx].sum()
            kind = "interior"
            if 1.0 - np.linalg.norm(c) <= boundary_factor * r:
                kind = "boundary"
                c = c / np.linalg.norm(c)
            dist = np.linalg.norm(B - c, axis=1)
            ext, prev = r, np.inf
            while ext < max_extent:
                ann = float(ea[(dist >= ext) & (dist < 2 * ext)].sum())
                if ann <= 0.25 * eps_threshold or ann >= 3 * prev:
                    break
                prev, ext = ann, 2 * ext
            found.append(Concentration(c, float(r), float(tot[k]), kind, float(ext)))
            alive &= dist > 2 * ext
    return found


# ---------------------------------------------------------------------------
# rescaling
# ---------------------------------------------------------------------------
def _check_scale(u: DiskMap, center, scale: float) -> None:
    lh = float(u.mesh.local_h(np.asarray(center, dtype=float))[0])
    if scale <= 2 * lh:
        raise ScaleBelowMesh(f"scale {scale:.3g} is not above twice the local mesh size {lh:.3g}")


def rescale_points(center, scale: float, kind: str, ref_points: np.ndarray) -> np.ndarray:
    """Source points for reference points: ``b + ν ζ`` (interior) or ``φ_a⁻¹((λ/2) ζ)`` (boundary).

    For the boundary kind the reference domain is the upper half-disk; its
    diameter is sent into the circle and the half-disk of radius ``λ/2`` in the
    half-plane chart covers a half-ball of radius about ``λ`` at ``a``.
    """
    zeta = ref_points[:, 0] + 1j * ref_points[:, 1]
    if kind == "interior":
        return _xy(_c(center) + scale * zeta)
    if kind == "boundary":
        a = _c(center)
        a /= abs(a)
        return _xy(phi_inv(a, 0.5 * scale * zeta))
    raise ValueError(f"unknown kind {kind!r}")


def source_region_mask(u: DiskMap, center, scale: float, kind: str) -> np.ndarray:
    """Triangles of ``u``'s mesh whose barycentres lie in the rescaled region."""
    B = u.mesh.barycenters
    if kind == "interior":
        return np.linalg.norm(B - np.asarray(center, dtype=float), axis=1) < scale
    a = _c(center)
    a /= abs(a)
    w = phi(a, B[:, 0] + 1j * B[:, 1])
    return np.abs(w) < 0.5 * scale


def rescale(u: DiskMap, center, scale: float, kind: str = "interior", ref_mesh: Optional[DiskMesh] = None,
            h_ref: float = 0.05, check: bool = True) -> DiskMap:
    """Resample ``u`` near ``center`` at ``scale`` onto a reference disk (interior) or half-disk (boundary).

    Raises
    ------
    ScaleBelowMesh
        If ``scale`` is not above twice the local mesh size at ``center``.
    """
    if check:
        _check_scale(u, center, scale)
    if kind == "interior":
        if np.linalg.norm(center) + scale > 1.0 + 1e-9:
            raise ValueError("interior rescale region leaves the disk")
        ref = ref_mesh or build_disk_mesh(h_ref)
        constrained = np.zeros(ref.n_vertices, dtype=bool)
    elif kind == "boundary":
        ref = ref_mesh or build_half_disk_mesh(h_ref)
        constrained = None
    else:
        raise ValueError(f"unknown kind {kind!r}")
    pts = rescale_points(center, scale, kind, ref.vertices)
    vals = u.mesh.interpolate(u.values, pts)
    if u.pair is not None:
        vals = u.pair.N.project(vals, check=False)
    out = DiskMap(ref, vals, u.pair, constrained)
    if u.pair is not None and kind == "boundary":
        c = out.constrained
        out.values[c] = u.pair.M.project(out.values[c], check=False)
    return out


# ---------------------------------------------------------------------------
# neck profiles
# ---------------------------------------------------------------------------
@dataclass
class NeckProfile:
    rows: list
    neck_energy: float
    max_annulus_energy: float
    angular_fraction: float
    defect: float
    quasiconformal_violation: bool
    knobs: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


NECK_COLUMNS = ("r_in", "r_out", "total", "angular", "radial", "area", "defect")


def neck_profile(u: DiskMap, center, lam: float, R: float, alpha: float = 2.0, qc_tol: float = 0.1) -> NeckProfile:
    """Energies on the annuli ``r_out = 1/(R α^k)`` down to ``Rλ`` around ``center``.

    Each row holds total (``½∫|∇u|²``), angular (``∫|r⁻¹∂_θu|²``) and radial
    (``∫|∂_r u|²``) energies, the area and the conformality defect.  Around a
    boundary point the annuli are clipped to the disk.  The profile flags a
    quasi-conformality violation when the neck's defect exceeds ``qc_tol`` of
    its energy.

    Raises
    ------
    EmptyRange
        If ``Rλ ≥ 1/R`` or no annulus contains triangles.
    """
    lo, hi = R * lam, 1.0 / R
    if not lo < hi:
        raise EmptyRange(f"R*lam={lo:.3g} is not below 1/R={hi:.3g}")
    center = np.asarray(center, dtype=float)
    rows = []
    r_out = hi
    while r_out > lo * (1 + 1e-12):
        r_in = max(r_out / alpha, lo)
        mask = annulus_mask(u.mesh, center, r_in, r_out)
        if np.any(mask):
            ang, rad = angular_radial_split(u, center, r_in, r_out)
            tot = dirichlet_energy(u, mask)
            ar = area(u, mask)
            rows.append({"r_in": r_in, "r_out": r_out, "total": tot, "angular": ang, "radial": rad,
                         "area": ar, "defect": tot - ar})
        r_out = r_in
    if not rows:
        raise EmptyRange("no triangles in the neck range")
    neck = float(sum(r["total"] for r in rows))
    ang = float(sum(r["angular"] for r in rows))
    defect = float(sum(r["defect"] for r in rows))
    return NeckProfile(rows, neck, float(max(r["total"] for r in rows)), ang / (2 * neck) if neck > 0 else 0.0,
                       defect, bool(defect > qc_tol * neck and neck > 0),
                       {"alpha": alpha, "R": R, "lam": lam, "qc_tol": qc_tol})


def write_neck_csv(profile: NeckProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=NECK_COLUMNS)
        w.writeheader()
        for r in profile.rows:
            w.writerow({k: repr(float(r[k])) for k in NECK_COLUMNS})


def angular_energy_fraction(u: DiskMap, center, r_in: float, r_out: float, alpha: float = 4.0) -> float:
    """Angular energy on the middle annulus ``[α r_in, r_out/α]`` over ``∫|∇u|²`` on ``[r_in, r_out]``."""
    if not alpha * r_in < r_out / alpha:
        raise EmptyRange("middle annulus is empty")
    ang, _ = angular_radial_split(u, center, alpha * r_in, r_out / alpha)
    full = 2 * dirichlet_energy(u, annulus_mask(u.mesh, center, r_in, r_out))
    return ang / full if full > 0 else 0.0


# ---------------------------------------------------------------------------
# bubble decomposition
# ---------------------------------------------------------------------------
@dataclass
class Bubble:
    center: np.ndarray
    scale: float
    capture_radius: float
    kind: str
    energy: float
    map: Optional[DiskMap] = None

    def as_dict(self) -> dict:
        return {"center": self.center.tolist(), "scale": self.scale, "capture_radius": self.capture_radius,
                "kind": self.kind, "energy": self.energy}


def separation(b1: Bubble, b2: Bubble) -> float:
    """``|a − a'|/(λ + λ') + λ/λ' + λ'/λ``."""
    l1, l2 = b1.scale, b2.scale
    return float(np.linalg.norm(b1.center - b2.center) / (l1 + l2) + l1 / l2 + l2 / l1)


@dataclass
class BubbleDecomposition:
    base_energy: float
    boundary_bubbles: list
    interior_bubbles: list
    total_energy: float
    base_map: Optional[DiskMap] = None
    separation_threshold: float = 4.0

    @property
    def bubbles(self) -> list:
        return self.boundary_bubbles + self.interior_bubbles

    @property
    def bubble_energy(self) -> float:
        return float(sum(b.energy for b in self.bubbles))

    def separations(self) -> list[float]:
        out = []
        for group in (self.boundary_bubbles, self.interior_bubbles):
            for i in range(len(group)):
                for j in range(i + 1, len(group)):
                    out.append(separation(group[i], group[j]))
        for b in self.interior_bubbles:
            out.append((1.0 - np.linalg.norm(b.center)) / b.scale)
        return out

    @property
    def separated(self) -> bool:
        return all(s > self.separation_threshold for s in self.separations())

    def ledger(self, tol: float = 1e-2) -> dict:
        """Energy ledger; ``consistent`` allows a relative resampling tolerance ``tol``."""
        s = self.base_energy + self.bubble_energy
        return {"total": self.total_energy, "base": self.base_energy,
                "boundary": [b.energy for b in self.boundary_bubbles],
                "interior": [b.energy for b in self.interior_bubbles], "sum": s,
                "consistent": bool(s <= self.total_energy * (1 + tol) + 1e-12)}

    def without(self, index: int) -> "BubbleDecomposition":
        """Negative control: the same decomposition with one bubble omitted."""
        bl = self.bubbles
        keep = [b for i, b in enumerate(bl) if i != index]
        return BubbleDecomposition(self.base_energy, [b for b in keep if b.kind == "boundary"],
                                   [b for b in keep if b.kind == "interior"], self.total_energy, self.base_map,
                                   self.separation_threshold)

    def to_dict(self) -> dict:
        return {"base_energy": self.base_energy, "total_energy": self.total_energy,
                "boundary_bubbles": [b.as_dict() for b in self.boundary_bubbles],
                "interior_bubbles": [b.as_dict() for b in self.interior_bubbles],
                "separations": self.separations(), "separated": self.separated,
                "separation_threshold": self.separation_threshold, "ledger": self.ledger()}

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def _capture_radius(c: Concentration, others: list[Concentration], r_far: float) -> float:
    far = r_far
    for o in others:
        if o is not c:
            far = min(far, 0.5 * float(np.linalg.norm(o.center - c.center)))
    if c.kind == "interior":
        far = min(far, 1.0 - float(np.linalg.norm(c.center)))
    ext = max(c.extent, c.scale)
    return float(min(far, np.sqrt(ext * max(far, ext))))


def decompose(u: DiskMap, eps_threshold: float = 1.0, r_scan=None, base: Optional[DiskMap] = None,
              r_far: float = 0.5, h_ref: float = 0.05, grading: float = 0.2,
              separation_threshold: float = 4.0) -> BubbleDecomposition:
    """Detect concentrations of ``u`` and rescale each at its capture radius ``√(scale·r_far)``.

    Bubble energies are measured on graded reference meshes.  Without an
    explicit ``base`` map, the base energy is the energy of ``u`` outside all
    capture regions.
    """
    dets = detect_concentration(u, eps_threshold, r_scan)
    bubbles = []
    outside = np.ones(len(u.mesh.triangles), dtype=bool)
    for c in dets:
        rb = _capture_radius(c, dets, r_far)
        hmin = float(np.clip(grading * c.scale / rb, 1e-4, h_ref))
        dom = "disk" if c.kind == "interior" else "half_disk"
        ref = build_graded_mesh(h_ref, [[0.0, 0.0]], hmin, domain=dom)
        m = rescale(u, c.center, rb, c.kind, ref_mesh=ref, check=False)
        bubbles.append(Bubble(c.center, c.scale, rb, c.kind, dirichlet_energy(m), m))
        outside &= ~source_region_mask(u, c.center, rb, c.kind)
    base_energy = dirichlet_energy(base) if base is not None else dirichlet_energy(u, outside)
    return BubbleDecomposition(base_energy, [b for b in bubbles if b.kind == "boundary"],
                               [b for b in bubbles if b.kind == "interior"], dirichlet_energy(u), base,
                               separation_threshold)


def energy_identity_check(sequence: Sequence[DiskMap], d: BubbleDecomposition) -> np.ndarray:
    """``|E(u_n) − E(u_∞) − ΣE(θ_i) − ΣE(ω_j)|`` along the sequence."""
    return np.array([abs(dirichlet_energy(u) - d.base_energy - d.bubble_energy) for u in sequence])


def quasiconformality_monitor(sequence: Sequence[DiskMap]) -> np.ndarray:
    """Conformality defect ``E − Area`` for each element."""
    return np.array([dirichlet_energy(u) - area(u) for u in sequence])


# ---------------------------------------------------------------------------
# synthetic maps with known bubble energies
# ---------------------------------------------------------------------------
def inverse_stereographic(w) -> np.ndarray:
    """``(2 Re w, 2 Im w, |w|² − 1)/(|w|² + 1)``; ``∞`` goes to the north pole."""
    w = np.asarray(w, dtype=complex)
    n = np.abs(w) ** 2
    return np.stack([2 * w.real, 2 * w.imag, n - 1], axis=-1) / (n + 1)[..., None]


def stereographic_disk_area(c: complex, rho: float) -> float:
    """Spherical area of the image of the disk ``|w − c| < ρ`` under inverse stereographic projection."""
    c = complex(c)
    d = c / abs(c) if abs(c) > 0 else 1.0
    p1 = inverse_stereographic(c + rho * d)
    p2 = inverse_stereographic(c - rho * d)
    cosb = float(np.clip(np.sqrt(max((1 + np.dot(p1, p2)) / 2, 0.0)), -1, 1))  # cos of half the angle
    small = 2 * np.pi * (1 - cosb)
    m = p1 + p2
    nm = np.linalg.norm(m)
    if nm < 1e-14:
        return 2 * np.pi
    inside = float(np.dot(inverse_stereographic(c), m / nm)) >= cosb
    return small if inside else 4 * np.pi - small


def sphere_pair() -> ManifoldPair:
    S = sphere(1.0, 3)
    return ManifoldPair(S, S, np.array([0.0, 0.0, 1.0]))


def interior_bubble_map(mesh: DiskMesh, center, scale: float, pair: Optional[ManifoldPair] = None) -> DiskMap:
    """``S⁻¹((z − b)/ν)``, a conformal cap concentrating at ``b`` into the unit sphere."""
    pair = pair or sphere_pair()
    b = _c(center)
    z = mesh.vertices[:, 0] + 1j * mesh.vertices[:, 1]
    return DiskMap(mesh, inverse_stereographic((z - b) / scale), pair)


def interior_bubble_energy(center, scale: float) -> float:
    """Exact energy ``4π·(cap fraction)`` of :func:`interior_bubble_map` on the unit disk."""
    return stereographic_disk_area(-_c(center) / scale, 1.0 / scale)


def boundary_bubble_map(mesh: DiskMesh, centers, scales, pair: Optional[ManifoldPair] = None) -> DiskMap:
    """Blaschke product ``∏ (z − p_k)/(1 − p̄_k z)`` with ``p_k = (1 − λ_k) a_k``.

    A free-boundary conformal map onto the flat unit disk (boundary on the
    circle), one disk of energy ``π`` concentrating at each ``a_k``.
    """
    pair = pair or unit_ball_pair(2)
    z = mesh.vertices[:, 0] + 1j * mesh.vertices[:, 1]
    f = np.ones_like(z)
    for a, lam in zip(np.atleast_2d(centers), np.atleast_1d(scales)):
        a = _c(a)
        p = (1 - lam) * a / abs(a)
        f = f * (z - p) / (1 - np.conj(p) * z)
    vals = _xy(f)
    vals[mesh.is_boundary] /= np.linalg.norm(vals[mesh.is_boundary], axis=1, keepdims=True)
    return DiskMap(mesh, vals, pair)


def neck_map(mesh: DiskMesh, r_in: float = 0.01, tube_radius: float = 0.05, length: float = 2.0) -> DiskMap:
    """Thin tube ``(ρ cos θ, ρ sin θ, κ log r)`` over ``r_in ≤ r ≤ 1`` (flat cap inside).

    Conformal only when ``κ = ρ``; here ``κ = length/log(1/r_in)``.
    """
    kappa = length / np.log(1.0 / r_in)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    r = np.hypot(x, y)
    rr = np.maximum(r, r_in)
    s = np.where(r >= r_in, 1.0, r / r_in)
    th = np.arctan2(y, x)
    return DiskMap(mesh, np.stack([tube_radius * s * np.cos(th), tube_radius * s * np.sin(th), kappa * np.log(rr)], 1))
