"""Embedded target manifolds, their nearest-point projections and tubular data.

A target ``N`` and a constraint ``M`` are both described by an
:class:`EmbeddedManifold` living in a common ambient space ``R^p``.  Every kind
provides a vectorised nearest-point projection on its tube, an orthonormal
tangent frame and a way to sample points.  Points are arrays whose last axis
has length ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

KINDS = ("sphere", "ellipsoid", "flat_subspace", "torus", "sampled_level_set", "solid")


class GeometryError(Exception):
    pass


class OutsideTube(GeometryError):
    """Raised when the raw projection is requested outside its tube."""


def _as_points(x, p):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p:
        raise ValueError(f"expected points with last axis {p}, got shape {x.shape}")
    return x.reshape(-1, p), x.shape


def smoothstep5(s):
    """Quintic ramp, 0 for s <= 0 and 1 for s >= 1 with C^2 joins."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


@dataclass(frozen=True, eq=False)
class EmbeddedManifold:
    """A closed embedded submanifold (or closed convex domain) of ``R^p``.

    Use the constructors :func:`sphere`, :func:`ellipsoid`, :func:`flat_subspace`,
    :func:`torus`, :func:`sampled_level_set` and :func:`solid` rather than building this
    directly.
    """

    kind: str
    ambient_dim: int
    dim: int
    tubular_radius: float
    second_fund_bound: float
    radius: float = 1.0
    semi_axes: tuple = ()
    radii: tuple = ()
    field: Optional[Callable] = None
    field_grad: Optional[Callable] = None
    field_hess: Optional[Callable] = None
    boundary: Optional["EmbeddedManifold"] = None
    sample_box: float = 2.0

    # ------------------------------------------------------------------ domain
    @property
    def convex_hypersurface(self) -> bool:
        return (self.kind == "sphere" and self.dim == self.ambient_dim - 1) or self.kind == "ellipsoid"

    def in_tube(self, x) -> np.ndarray:
        """Boolean mask of points where the raw projection is defined and smooth."""
        pts, shape = _as_points(x, self.ambient_dim)
        if self.kind in ("flat_subspace", "solid"):
            out = np.ones(len(pts), dtype=bool)
        elif self.kind == "sphere":
            s = self.dim + 1
            out = np.linalg.norm(pts[:, :s], axis=1) > self.radius - self.tubular_radius
        else:
            y = self._project(pts)
            dist = np.linalg.norm(pts - y, axis=1)
            out = dist < self.tubular_radius
            if self.kind == "ellipsoid":
                out |= self.field(pts) >= 0.0
            out &= np.all(np.isfinite(y), axis=1)
        return out.reshape(shape[:-1])

    def project(self, x, check: bool = True) -> np.ndarray:
        """Nearest-point projection onto the manifold.

        Raises :class:`OutsideTube` when ``check`` is set and some point lies
        outside the domain of the projection.
        """
        pts, shape = _as_points(x, self.ambient_dim)
        if check and not np.all(self.in_tube(pts)):
            raise OutsideTube(f"{self.kind}: point outside the tube of radius {self.tubular_radius:g}")
        return self._project(pts).reshape(shape)

    def distance(self, x) -> np.ndarray:
        pts, shape = _as_points(x, self.ambient_dim)
        return np.linalg.norm(pts - self._project(pts), axis=1).reshape(shape[:-1])

    def residual(self, y) -> np.ndarray:
        """Constraint residual used to decide whether points lie on the manifold."""
        return self.distance(y)

    # ------------------------------------------------------------- projections
    def _project(self, pts: np.ndarray) -> np.ndarray:
        if self.kind == "flat_subspace":
            y = np.zeros_like(pts)
            y[:, : self.dim] = pts[:, : self.dim]
            return y
        if self.kind == "sphere":
            s = self.dim + 1
            y = np.zeros_like(pts)
            head = pts[:, :s]
            nrm = np.linalg.norm(head, axis=1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                y[:, :s] = self.radius * head / nrm
            return y
        if self.kind == "torus":
            R, r = self.radii
            rho = np.hypot(pts[:, 0], pts[:, 1])
            with np.errstate(invalid="ignore", divide="ignore"):
                core = np.stack([R * pts[:, 0] / rho, R * pts[:, 1] / rho, np.zeros(len(pts))], axis=1)
                off = pts - core
                y = core + r * off / np.linalg.norm(off, axis=1, keepdims=True)
            return y
        if self.kind in ("ellipsoid", "sampled_level_set"):
            return _kkt_project(self, pts)
        if self.kind == "solid":
            inside = self.boundary.field(pts) <= 0.0
            y = pts.copy()
            if np.any(~inside):
                y[~inside] = self.boundary._project(pts[~inside])
            return y
        raise GeometryError(f"unknown kind {self.kind!r}")  # pragma: no cover

    # ---------------------------------------------------------------- tangents
    def normal(self, y) -> np.ndarray:
        """Unit normal of a hypersurface kind at points ``y`` on it."""
        pts, shape = _as_points(y, self.ambient_dim)
        if self.kind == "sphere" and self.dim == self.ambient_dim - 1:
            n = pts
        elif self.kind == "torus":
            R, _ = self.radii
            rho = np.hypot(pts[:, 0], pts[:, 1])
            core = np.stack([R * pts[:, 0] / rho, R * pts[:, 1] / rho, np.zeros(len(pts))], axis=1)
            n = pts - core
        elif self.kind in ("ellipsoid", "sampled_level_set"):
            n = self.field_grad(pts)
        else:
            raise GeometryError(f"{self.kind} (dim {self.dim}) is not a hypersurface")
        return (n / np.linalg.norm(n, axis=1, keepdims=True)).reshape(shape)

    def tangent_basis(self, y) -> np.ndarray:
        """Orthonormal tangent frames, shape ``(n, p, dim)``."""
        pts, _ = _as_points(y, self.ambient_dim)
        n, p = pts.shape
        if self.kind == "flat_subspace":
            T = np.zeros((p, self.dim))
            T[np.arange(self.dim), np.arange(self.dim)] = 1.0
            return np.broadcast_to(T, (n, p, self.dim)).copy()
        if self.kind == "solid":
            return np.broadcast_to(np.eye(p), (n, p, p)).copy()
        if self.kind == "sphere":
            s = self.dim + 1
            head = pts[:, :s] / np.linalg.norm(pts[:, :s], axis=1, keepdims=True)
            Q = _complete_frame(head)  # (n, s, s); first column spans the normal
            T = np.zeros((n, p, self.dim))
            T[:, :s, :] = Q[:, :, 1:]
            return T
        # codimension-one kinds
        nrm = self.normal(pts)
        return _complete_frame(nrm)[:, :, 1:]

    def tangent_projector(self, y) -> np.ndarray:
        T = self.tangent_basis(y)
        return np.einsum("nij,nkj->nik", T, T)

    # ---------------------------------------------------------------- sampling
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        p = self.ambient_dim
        if self.kind == "sphere":
            s = self.dim + 1
            g = rng.standard_normal((n, s))
            y = np.zeros((n, p))
            y[:, :s] = self.radius * g / np.linalg.norm(g, axis=1, keepdims=True)
            return y
        if self.kind == "flat_subspace":
            y = np.zeros((n, p))
            y[:, : self.dim] = rng.uniform(-self.sample_box, self.sample_box, (n, self.dim))
            return y
        if self.kind == "ellipsoid":
            g = rng.standard_normal((n, p))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            return self._project(g * np.asarray(self.semi_axes))
        if self.kind == "torus":
            R, r = self.radii
            a, b = rng.uniform(0, 2 * np.pi, (2, n))
            return np.stack([(R + r * np.cos(b)) * np.cos(a), (R + r * np.cos(b)) * np.sin(a), r * np.sin(b)], axis=1)
        if self.kind == "sampled_level_set":
            out = []
            while sum(len(o) for o in out) < n:
                x = rng.uniform(-self.sample_box, self.sample_box, (4 * n, p))
                y = self._project(x)
                ok = np.all(np.isfinite(y), axis=1) & (np.abs(self.field(y)) < 1e-9)
                out.append(y[ok])
            return np.concatenate(out)[:n]
        if self.kind == "solid":
            b = self.boundary
            scale = np.asarray(b.semi_axes) if b.kind == "ellipsoid" else np.full(p, b.radius)
            out = []
            while sum(len(o) for o in out) < n:
                x = rng.uniform(-1, 1, (4 * n, p))
                out.append(x[np.sum(x * x, axis=1) <= 1.0] * scale)
            return np.concatenate(out)[:n]
        raise GeometryError(self.kind)  # pragma: no cover

    def sample_tube(self, n: int, rng: np.random.Generator, frac: float = 0.95) -> np.ndarray:
        """Random points at distance below ``frac * delta`` from the manifold."""
        y = self.sample(n, rng)
        if self.kind == "solid":
            return y
        if self.kind == "flat_subspace":
            off = rng.standard_normal((n, self.ambient_dim))
            off[:, : self.dim] = 0.0
            nrm = np.linalg.norm(off, axis=1, keepdims=True)
            return y + off / np.where(nrm > 0, nrm, 1.0) * rng.uniform(0, 1.0, (n, 1))
        delta = self.tubular_radius
        if self.dim == self.ambient_dim - 1:
            return y + self.normal(y) * rng.uniform(-frac * delta, frac * delta, (n, 1))
        # sphere of lower dimension: offsets orthogonal to the tangent space
        P = self.tangent_projector(y)
        g = rng.standard_normal((n, self.ambient_dim))
        g = g - np.einsum("nij,nj->ni", P, g)
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return y + g * rng.uniform(0, frac * delta, (n, 1))


def _complete_frame(v: np.ndarray) -> np.ndarray:
    """Orthonormal frames whose first column is the unit vector ``v``."""
    n, p = v.shape
    # pick the coordinate axis least aligned with v to avoid degeneracy
    M = np.zeros((n, p, p))
    M[:, :, 0] = v
    order = np.argsort(np.abs(v), axis=1)
    rows = np.arange(n)
    for k in range(1, p):
        M[rows, order[:, k - 1], k] = 1.0
    Q, R = np.linalg.qr(M)
    sign = np.sign(np.einsum("ni,ni->n", Q[:, :, 0], v))
    Q[:, :, 0] *= sign[:, None]
    return Q


def _fd_grad(field, h=1e-6):
    def grad(x):
        x = np.atleast_2d(x)
        g = np.empty_like(x)
        for i in range(x.shape[1]):
            e = np.zeros(x.shape[1])
            e[i] = h
            g[:, i] = (field(x + e) - field(x - e)) / (2 * h)
        return g

    return grad


def _fd_hess(grad, h=1e-5):
    def hess(x):
        x = np.atleast_2d(x)
        n, p = x.shape
        H = np.empty((n, p, p))
        for i in range(p):
            e = np.zeros(p)
            e[i] = h
            H[:, :, i] = (grad(x + e) - grad(x - e)) / (2 * h)
        return 0.5 * (H + np.transpose(H, (0, 2, 1)))

    return hess


def _kkt_project(m: EmbeddedManifold, x: np.ndarray, tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
    """Nearest point on ``{F = 0}`` by damped Newton on the KKT system.

    Unknowns ``(y, lam)`` solve ``y - x + lam * grad F(y) = 0`` and ``F(y) = 0``.
    Start from a few normal Newton steps onto the level set.
    """
    F, G, H = m.field, m.field_grad, m.field_hess
    n, p = x.shape
    y = x.copy()
    for _ in range(8):
        g = G(y)
        y = y - (F(y) / np.maximum(np.sum(g * g, axis=1), 1e-300))[:, None] * g
    g = G(y)
    lam = np.einsum("ni,ni->n", x - y, g) / np.maximum(np.sum(g * g, axis=1), 1e-300)

    def resid(y, lam, xs):
        return np.concatenate([y - xs + lam[:, None] * G(y), F(y)[:, None]], axis=1)

    r = resid(y, lam, x)
    rn = np.linalg.norm(r, axis=1)
    eye = np.eye(p)
    for _ in range(max_iter):
        active = rn > tol
        if not np.any(active):
            break
        ya, la = y[active], lam[active]
        ga = G(ya)
        J = np.zeros((len(ya), p + 1, p + 1))
        J[:, :p, :p] = eye + la[:, None, None] * H(ya)
        J[:, :p, p] = ga
        J[:, p, :p] = ga
        try:
            step = np.linalg.solve(J, -r[active][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J.reshape(-1, p + 1), -r[active].reshape(-1), rcond=None)[0].reshape(-1, p + 1)
        t = np.ones(len(ya))
        base = rn[active]
        for _ in range(30):
            yn = ya + t[:, None] * step[:, :p]
            ln = la + t * step[:, p]
            rnew = resid(yn, ln, x[active])
            nn = np.linalg.norm(rnew, axis=1)
            bad = ~(nn < base) & (t > 1e-8)
            if not np.any(bad):
                break
            t = np.where(bad, 0.5 * t, t)
        idx = np.flatnonzero(active)
        y[idx], lam[idx], r[idx], rn[idx] = yn, ln, rnew, nn
    return y


# ---------------------------------------------------------------- constructors
def sphere(radius: float = 1.0, ambient_dim: int = 3, dim: Optional[int] = None) -> EmbeddedManifold:
    """Round sphere of the given radius in the span of the first ``dim + 1`` axes."""
    dim = ambient_dim - 1 if dim is None else dim
    if not 1 <= dim <= ambient_dim - 1:
        raise ValueError("sphere dimension must satisfy 1 <= dim <= ambient_dim - 1")
    return EmbeddedManifold("sphere", ambient_dim, dim, tubular_radius=radius / 2.0,
                            second_fund_bound=1.0 / radius, radius=float(radius))


def flat_subspace(dim: int, ambient_dim: int) -> EmbeddedManifold:
    """Coordinate subspace spanned by the first ``dim`` axes."""
    if not 0 <= dim <= ambient_dim:
        raise ValueError("need 0 <= dim <= ambient_dim")
    return EmbeddedManifold("flat_subspace", ambient_dim, dim, tubular_radius=np.inf, second_fund_bound=0.0)


def ellipsoid(semi_axes) -> EmbeddedManifold:
    a = np.asarray(semi_axes, dtype=float)
    if np.any(a <= 0):
        raise ValueError("semi-axes must be positive")
    inv2 = 1.0 / a**2

    def F(x):
        return np.sum(np.atleast_2d(x) ** 2 * inv2, axis=1) - 1.0

    def G(x):
        return 2.0 * np.atleast_2d(x) * inv2

    def H(x):
        x = np.atleast_2d(x)
        return np.broadcast_to(np.diag(2.0 * inv2), (len(x), len(a), len(a)))

    # smallest principal curvature radius is c^2 / a_max
    delta = 0.5 * a.min() ** 2 / a.max()
    return EmbeddedManifold("ellipsoid", len(a), len(a) - 1, tubular_radius=delta,
                            second_fund_bound=a.max() / a.min() ** 2, semi_axes=tuple(a),
                            field=F, field_grad=G, field_hess=H, sample_box=float(a.max()))


def torus(major: float = 2.0, minor: float = 0.5) -> EmbeddedManifold:
    if not 0 < minor < major:
        raise ValueError("need 0 < minor < major")
    delta = 0.5 * min(minor, major - minor)
    return EmbeddedManifold("torus", 3, 2, tubular_radius=delta,
                            second_fund_bound=max(1.0 / minor, 1.0 / (major - minor)),
                            radii=(float(major), float(minor)))


def sampled_level_set(field: Callable, ambient_dim: int, grad: Optional[Callable] = None,
              hess: Optional[Callable] = None, sample_box: float = 2.0,
              n_curvature_samples: int = 400, seed: int = 0) -> EmbeddedManifold:
    """Regular level set ``{field = 0}`` of a scalar function on ``R^p``.

    The tube radius is half the reciprocal of the largest sampled principal
    curvature.
    """
    grad = grad or _fd_grad(field)
    hess = hess or _fd_hess(grad)
    proto = EmbeddedManifold("sampled_level_set", ambient_dim, ambient_dim - 1, tubular_radius=np.inf,
                             second_fund_bound=np.nan, field=field, field_grad=grad,
                             field_hess=hess, sample_box=sample_box)
    y = proto.sample(n_curvature_samples, np.random.default_rng(seed))
    g = grad(y)
    gn = np.linalg.norm(g, axis=1)
    T = proto.tangent_basis(y)
    shape_op = np.einsum("nji,njk,nkl->nil", T, hess(y), T) / gn[:, None, None]
    kmax = float(np.max(np.abs(np.linalg.eigvalsh(shape_op))))
    delta = 0.5 / kmax if kmax > 0 else np.inf
    return EmbeddedManifold("sampled_level_set", ambient_dim, ambient_dim - 1, tubular_radius=delta,
                            second_fund_bound=kmax, field=field, field_grad=grad,
                            field_hess=hess, sample_box=sample_box)


def solid(surface: EmbeddedManifold) -> EmbeddedManifold:
    """Closed convex domain bounded by a sphere or ellipsoid; projection clamps."""
    if not surface.convex_hypersurface:
        raise ValueError("solid domains need a convex closed hypersurface as boundary")
    if surface.kind == "sphere":
        R = surface.radius
        surface = EmbeddedManifold(
            "sphere", surface.ambient_dim, surface.dim, surface.tubular_radius, surface.second_fund_bound,
            radius=R, field=lambda x: np.sum(np.atleast_2d(x) ** 2, axis=1) / R**2 - 1.0,
            field_grad=lambda x: 2.0 * np.atleast_2d(x) / R**2)
    return EmbeddedManifold("solid", surface.ambient_dim, surface.ambient_dim, tubular_radius=np.inf,
                            second_fund_bound=0.0, boundary=surface)


def unit_ball_pair(p: int = 3) -> "ManifoldPair":
    """``N`` = closed unit ball of ``R^p`` with ``M`` its boundary sphere."""
    S = sphere(1.0, p)
    B = solid(S)
    m0 = np.zeros(p)
    m0[-1] = 1.0
    return ManifoldPair(B, B.boundary, m0)


# ----------------------------------------------------------------- operations
def project_to(manifold: EmbeddedManifold, x) -> np.ndarray:
    return manifold.project(x, check=True)


def projection_differential_norm(manifold: EmbeddedManifold, x, step: float = 1e-6) -> float:
    """Spectral norm of the central-difference Jacobian of the projection at ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    p = manifold.ambient_dim
    if not manifold.in_tube(x[None])[0]:
        raise OutsideTube("point outside the projection tube")
    E = np.eye(p) * step
    cols = (manifold.project(x + E, check=False) - manifold.project(x - E, check=False)) / (2 * step)
    return float(np.linalg.norm(cols.T, 2))


def normal_deviation(manifold: EmbeddedManifold, p, q) -> float:
    """Length of the component of ``p - q`` normal to the manifold at ``p``."""
    p = manifold.project(np.asarray(p, dtype=float)[None], check=False)
    q = manifold.project(np.asarray(q, dtype=float)[None], check=False)
    d = (p - q)[0]
    T = manifold.tangent_basis(p)[0]
    return float(np.linalg.norm(d - T @ (T.T @ d)))


def normal_deviation_constant(manifold: EmbeddedManifold, n_pairs: int = 10_000, seed: int = 0) -> float:
    """Sampled sup of ``|(p-q)^perp| / |p-q|^2`` over random pairs on the manifold."""
    if manifold.kind == "sphere":
        return 1.0 / (2.0 * manifold.radius)
    if manifold.kind in ("flat_subspace", "solid"):
        return 0.0
    rng = np.random.default_rng(seed)
    P = manifold.sample(n_pairs, rng)
    Q = manifold.sample(n_pairs, rng)
    # half the pairs are local: the ratio is governed by curvature at short range
    half = n_pairs // 2
    T = manifold.tangent_basis(P[:half])
    dirs = np.einsum("nij,nj->ni", T, rng.standard_normal((half, manifold.dim)))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    Q[:half] = manifold.project(P[:half] + dirs * rng.uniform(1e-3, 0.3, (half, 1)), check=False)
    D = P - Q
    T = manifold.tangent_basis(P)
    tang = np.einsum("nij,nkj,nk->ni", T, T, D)
    num = np.linalg.norm(D - tang, axis=1)
    den = np.sum(D * D, axis=1)
    ok = den > 1e-12
    return float(np.max(num[ok] / den[ok]))


def fit_differential_constant(manifold: EmbeddedManifold, n: int = 1000, seed: int = 0) -> float:
    """Smallest ``C`` with ``||D pi(x)|| <= 1 + C dist(x)`` over tube samples."""
    rng = np.random.default_rng(seed)
    X = manifold.sample_tube(n, rng)
    d = manifold.distance(X)
    norms = np.array([projection_differential_norm(manifold, x) for x in X])
    ok = d > 1e-9
    if not np.any(ok):
        return 0.0
    return float(max(0.0, np.max((norms[ok] - 1.0) / d[ok])))


@dataclass(frozen=True, eq=False)
class ManifoldPair:
    """Target ``N`` with constraint submanifold ``M`` and a base point ``m0`` in ``M``."""

    N: EmbeddedManifold
    M: EmbeddedManifold
    m0: np.ndarray

    def __post_init__(self):
        if self.N.ambient_dim != self.M.ambient_dim:
            raise ValueError("N and M must share the ambient space")
        m0 = np.asarray(self.m0, dtype=float)
        if self.M.residual(m0[None])[0] > 1e-9:
            raise ValueError("base point must lie on M")
        object.__setattr__(self, "m0", m0)

    @property
    def p(self) -> int:
        return self.N.ambient_dim

    @property
    def is_flat(self) -> bool:
        return self.N.kind == "flat_subspace" and self.M.kind == "flat_subspace"

    def check_inclusion(self, n: int = 500, seed: int = 0) -> float:
        """Max distance to ``N`` of sampled points of ``M``."""
        y = self.M.sample(n, np.random.default_rng(seed))
        return float(np.max(self.N.residual(y)))

    def cutoff(self, x) -> np.ndarray:
        """1 on the half-tube of ``M``, 0 outside the tube, quintic in between."""
        pts, shape = _as_points(x, self.p)
        delta = self.M.tubular_radius
        if not np.isfinite(delta):
            return np.ones(shape[:-1])
        with np.errstate(invalid="ignore"):
            y = self.M._project(pts)
            d = np.linalg.norm(pts - y, axis=1)
        d = np.where(np.isfinite(d), d, np.inf)
        chi = 1.0 - smoothstep5((d - 0.5 * delta) / (0.5 * delta))
        return chi.reshape(shape[:-1])

    def extended_projection(self, x) -> np.ndarray:
        """Smooth map of ``R^p`` equal to ``pi_M`` near ``M`` and the identity far away."""
        pts, shape = _as_points(x, self.p)
        chi = self.cutoff(pts)
        with np.errstate(invalid="ignore"):
            y = self.M._project(pts)
        y = np.where(np.isfinite(y), y, pts)
        return (chi[:, None] * y + (1.0 - chi[:, None]) * pts).reshape(shape)
