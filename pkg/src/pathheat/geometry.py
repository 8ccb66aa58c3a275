"""Constant-curvature Riemannian manifolds in ambient embedding coordinates.

Shipped instances: Euclidean R^d, flat torus (circle = 1-torus), round sphere
S^d embedded in R^{d+1}, and hyperbolic H^d in the Minkowski hyperboloid model.
Exponential/log maps, parallel transport and curvature are closed-form, so no
geodesic integration error enters downstream computations.

Points and tangent vectors are plain float arrays in ambient coordinates; all
operations broadcast over leading axes.  Frames are (ambient_dim, dim) matrices
whose columns form an orthonormal basis of the tangent space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import CutLocusError, DomainError, UnsupportedFeatureError

POINT_TOL = 1e-12  # constraint satisfaction
ALGEBRA_TOL = 1e-10  # algebraic identities


def _dot(a, b):
    return np.sum(a * b, axis=-1)


@dataclass(frozen=True)
class Manifold:
    """Base record: subclasses provide the geometry.

    kappa is the (constant) sectional curvature, kappa0 = |kappa| bounds the
    norm of the curvature operator on unit pairs.
    """

    dim: int

    # populated by subclasses
    kind: str = field(init=False, default="")

    @property
    def ambient_dim(self):
        return self.dim

    @property
    def kappa(self):
        return 0.0

    @property
    def kappa0(self):
        return abs(self.kappa)

    @property
    def inj_radius(self):
        return math.inf

    # --- ambient linear algebra (overridden for Minkowski signature) ---

    def ambient_inner(self, v, w):
        return _dot(v, w)

    def norm(self, v):
        return np.sqrt(np.maximum(self.ambient_inner(v, v), 0.0))

    def metric(self, p, v, w):
        """Riemannian inner product of tangent vectors at p."""
        return self.ambient_inner(v, w)

    # --- constraints ---

    def check_point(self, p, tol=POINT_TOL):
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.ambient_dim:
            raise DomainError(
                f"point has ambient dim {p.shape[-1]}, expected {self.ambient_dim}"
            )
        err = self.constraint_violation(p)
        if np.any(err > tol):
            raise DomainError(f"point off manifold by {float(np.max(err)):.3e}")
        return p

    def check_tangent(self, p, v, tol=1e-9):
        v = np.asarray(v, dtype=float)
        err = self.tangent_violation(p, v)
        if np.any(err > tol * (1.0 + np.abs(self.norm(v)))):
            raise DomainError(f"vector off tangent space by {float(np.max(err)):.3e}")
        return v

    def constraint_violation(self, p):
        return np.zeros(np.shape(p)[:-1])

    def tangent_violation(self, p, v):
        return np.zeros(np.shape(v)[:-1])

    # --- curvature in frame coordinates ---

    def curvature_op(self, a, b):
        """Matrix of Omega_u(a, b) acting on frame coordinates.

        For constant sectional curvature this is frame independent:
        Omega_u(a,b)c = kappa * (<b,c> a - <a,c> b).
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return self.kappa * (np.outer(a, b) - np.outer(b, a))

    def ricci_frame(self):
        """Ricci transform in any orthonormal frame: kappa * (d-1) * I."""
        return self.kappa * (self.dim - 1) * np.eye(self.dim)

    def ricci(self, p, v):
        """Ric(v) at p as an ambient tangent vector."""
        return self.kappa * (self.dim - 1) * np.asarray(v, dtype=float)

    def scalar_curvature(self, p=None):
        return self.kappa * self.dim * (self.dim - 1)

    def grad_scalar(self, p):
        return np.zeros(self.ambient_dim)

    def ricci_lower_bound_constant(self):
        """K with Ric >= -K; positively curved spaces give negative K."""
        return -self.kappa * (self.dim - 1)

    # --- retraction, frames, sampling ---

    def project(self, p):
        """Retract an ambient point back onto the manifold."""
        return np.asarray(p, dtype=float)

    def tangent_project(self, p, v):
        return np.asarray(v, dtype=float)

    def canonical_frame(self, p):
        """Deterministic orthonormal frame at p, shape (ambient_dim, dim)."""
        raise NotImplementedError

    def random_frame(self, p, rng):
        base = self.canonical_frame(p)
        q, _ = np.linalg.qr(rng.standard_normal((self.dim, self.dim)))
        return base @ q

    def frame_coords(self, p, frame, w):
        """u^{-1} w: coordinates of tangent vector w in the given frame."""
        return np.einsum("...md,...m->...d", frame, self._flat_metric(w))

    def frame_apply(self, frame, a):
        """u a: frame coordinates back to an ambient tangent vector."""
        return np.einsum("...md,...d->...m", frame, a)

    def _flat_metric(self, w):
        # identity for Euclidean ambient metric; Minkowski overrides
        return np.asarray(w, dtype=float)

    def random_point(self, rng, size=None):
        raise NotImplementedError

    # --- core maps; subclasses implement ---

    def distance(self, p, q):
        raise NotImplementedError

    def exp(self, p, v):
        raise NotImplementedError

    def log(self, p, q):
        raise NotImplementedError

    def transport(self, p, q, v):
        """Parallel transport of v from p to q along the unique geodesic."""
        raise NotImplementedError

    def heat_kernel(self, t, p, q, tol=1e-14):
        raise UnsupportedFeatureError(f"heat kernel not available on {self.kind}")

    def volume(self):
        raise UnsupportedFeatureError(f"total volume not available on {self.kind}")

    def spec(self):
        return {"kind": self.kind, "dim": self.dim}


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Euclidean(Manifold):
    kind: str = field(init=False, default="euclidean")

    def distance(self, p, q):
        return self.norm(np.asarray(q, float) - np.asarray(p, float))

    def exp(self, p, v):
        return np.asarray(p, float) + np.asarray(v, float)

    def log(self, p, q):
        return np.asarray(q, float) - np.asarray(p, float)

    def transport(self, p, q, v):
        return np.asarray(v, dtype=float)

    def canonical_frame(self, p):
        return np.eye(self.dim)

    def random_point(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.standard_normal(shape)

    def heat_kernel(self, t, p, q, tol=1e-14):
        if t <= 0:
            raise DomainError("heat kernel needs t > 0")
        rho2 = self.distance(p, q) ** 2
        return (2 * math.pi * t) ** (-self.dim / 2) * np.exp(-rho2 / (2 * t))


@dataclass(frozen=True)
class Torus(Manifold):
    """Flat torus with coordinates in [0, L_i); a circle is the 1-torus."""

    periods: tuple = (2 * math.pi,)

    kind: str = field(init=False, default="torus")

    def __post_init__(self):
        if len(self.periods) != self.dim:
            raise DomainError("need one period per dimension")
        if any(L <= 0 for L in self.periods):
            raise DomainError("periods must be positive")

    @property
    def inj_radius(self):
        return min(self.periods) / 2.0

    def _L(self):
        return np.asarray(self.periods, dtype=float)

    def wrap(self, p):
        return np.mod(np.asarray(p, dtype=float), self._L())

    def project(self, p):
        return self.wrap(p)

    def _diff(self, p, q):
        L = self._L()
        d = np.mod(np.asarray(q, float) - np.asarray(p, float) + L / 2, L) - L / 2
        return d

    def distance(self, p, q):
        return self.norm(self._diff(p, q))

    def exp(self, p, v):
        return self.wrap(np.asarray(p, float) + np.asarray(v, float))

    def log(self, p, q):
        d = self._diff(p, q)
        L = self._L()
        if np.any(np.abs(d) >= L / 2 * (1 - 1e-12)):
            raise CutLocusError("points are half a period apart in some coordinate")
        return d

    def transport(self, p, q, v):
        return np.asarray(v, dtype=float)

    def canonical_frame(self, p):
        return np.eye(self.dim)

    def random_point(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(0.0, 1.0, shape) * self._L()

    def volume(self):
        return float(np.prod(self._L()))

    def heat_kernel(self, t, p, q, tol=1e-14):
        """Product of wrapped Gaussians (kernel of Laplacian/2)."""
        if t <= 0:
            raise DomainError("heat kernel needs t > 0")
        d = self._diff(p, q)
        out = np.ones(np.shape(d)[:-1])
        for i, L in enumerate(self.periods):
            kmax = int(math.ceil((math.sqrt(2 * t * 80.0) + L) / L)) + 1
            ks = np.arange(-kmax, kmax + 1) * L
            x = d[..., i, None] + ks
            out = out * np.sum(
                np.exp(-(x**2) / (2 * t)) / math.sqrt(2 * math.pi * t), axis=-1
            )
        return out

    def spec(self):
        return {"kind": "torus", "dim": self.dim, "periods": list(self.periods)}


def _householder_frame(unit_p, m, d):
    """Orthonormal basis of the complement of unit_p via a Householder map.

    Maps the last ambient basis vector onto unit_p; the images of the first d
    basis vectors are returned as frame columns.
    """
    e = np.zeros(m)
    e[-1] = 1.0
    u = unit_p - e
    nu = np.linalg.norm(u)
    if nu < 1e-14:
        return np.eye(m)[:, :d]
    u = u / nu
    H = np.eye(m) - 2.0 * np.outer(u, u)
    return H[:, :d]


@dataclass(frozen=True)
class Sphere(Manifold):
    """Round sphere of the given radius, embedded in R^{dim+1}."""

    radius: float = 1.0

    kind: str = field(init=False, default="sphere")

    def __post_init__(self):
        if self.radius <= 0:
            raise DomainError("radius must be positive")

    @property
    def ambient_dim(self):
        return self.dim + 1

    @property
    def kappa(self):
        return 1.0 / self.radius**2

    @property
    def inj_radius(self):
        return math.pi * self.radius

    def constraint_violation(self, p):
        return np.abs(self.norm(p) - self.radius)

    def tangent_violation(self, p, v):
        return np.abs(_dot(np.asarray(p, float), np.asarray(v, float))) / self.radius

    def project(self, p):
        p = np.asarray(p, dtype=float)
        return p * (self.radius / np.linalg.norm(p, axis=-1, keepdims=True))

    def tangent_project(self, p, v):
        p = np.asarray(p, float)
        v = np.asarray(v, float)
        return v - p * (_dot(p, v) / self.radius**2)[..., None]

    def _angle_parts(self, p, q):
        R = self.radius
        c = np.clip(_dot(p, q) / R**2, -1.0, 1.0)
        w = np.asarray(q, float) - c[..., None] * np.asarray(p, float)
        s = np.linalg.norm(w, axis=-1) / R
        theta = np.arctan2(s, c)
        return theta, w, s

    def distance(self, p, q):
        theta, _, _ = self._angle_parts(p, q)
        return self.radius * theta

    def exp(self, p, v):
        p = np.asarray(p, float)
        v = np.asarray(v, float)
        R = self.radius
        nv = np.linalg.norm(v, axis=-1)
        theta = nv / R
        sinc = np.where(theta > 1e-14, np.sin(theta) / np.where(theta > 0, theta, 1.0), 1.0)
        out = np.cos(theta)[..., None] * p + sinc[..., None] * v
        return self.project(out)

    def log(self, p, q):
        theta, w, s = self._angle_parts(p, q)
        if np.any(theta >= math.pi * (1 - 1e-12)):
            raise CutLocusError("antipodal points have no unique geodesic")
        fac = np.where(s > 1e-14, theta / np.where(s > 0, s, 1.0), 1.0)
        return fac[..., None] * w / 1.0

    def transport(self, p, q, v):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        v = np.asarray(v, float)
        y = self.log(p, q)
        ny = np.linalg.norm(y, axis=-1)
        small = ny < 1e-14
        t_p = y / np.where(small, 1.0, ny)[..., None]
        theta = ny / self.radius
        t_q = (
            -np.sin(theta)[..., None] * p / self.radius
            + np.cos(theta)[..., None] * t_p
        )
        a = _dot(v, t_p)
        out = v - a[..., None] * t_p + a[..., None] * t_q
        return np.where(small[..., None], v, out)

    def canonical_frame(self, p):
        return _householder_frame(np.asarray(p, float) / self.radius,
                                  self.ambient_dim, self.dim)

    def random_point(self, rng, size=None):
        shape = (self.ambient_dim,) if size is None else (size, self.ambient_dim)
        x = rng.standard_normal(shape)
        return self.project(x)

    def volume(self):
        m = self.ambient_dim
        log_omega = math.log(2.0) + (m / 2) * math.log(math.pi) - gammaln(m / 2)
        return math.exp(log_omega) * self.radius**self.dim

    def heat_kernel(self, t, p, q, tol=1e-14):
        """Zonal eigenfunction series for the kernel of Laplacian/2.

        Gegenbauer polynomials C_l^{(d-1)/2} (Legendre for d = 2) evaluated
        by their three-term recurrence, normalized by C_l(1); truncated when
        the term envelope drops below tol (|C_l(x)| <= C_l(1)).
        """
        if t <= 0:
            raise DomainError("heat kernel needs t > 0")
        d = self.dim
        if d < 2:
            raise UnsupportedFeatureError("use a 1-torus for the circle kernel")
        R = self.radius
        x = np.clip(_dot(np.asarray(p, float), np.asarray(q, float)) / R**2, -1.0, 1.0)
        nu = (d - 1) / 2.0
        vol = self.volume()
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.shape(x))
        # normalized recurrence G_l = C_l(x)/C_l(1):
        # G_{l+1} = (2(l+nu) x G_l - l G_{l-1}) / (l + 2 nu); G_0 = 1, G_1 = x
        g_prev = np.ones_like(out)
        g_cur = x.copy()
        l = 0
        while l <= 10_000:
            lam = l * (l + d - 1) / R**2
            if l == 0:
                nld = 1.0
                gl = g_prev
            else:
                nld = (2 * l + d - 1) / (d - 1) * math.exp(
                    gammaln(l + d - 1) - gammaln(l + 1) - gammaln(d - 1)
                )
                gl = g_cur
            coef = math.exp(-lam * t / 2.0) * nld / vol
            if l > 1 and coef < tol:
                break
            out = out + coef * gl
            if l >= 1:
                g_prev, g_cur = g_cur, (
                    2 * (l + nu) * x * g_cur - l * g_prev
                ) / (l + 2 * nu)
            l += 1
        return out

    def spec(self):
        return {"kind": "sphere", "dim": self.dim, "radius": self.radius}


@dataclass(frozen=True)
class Hyperbolic(Manifold):
    """Hyperboloid model in Minkowski space R^{1,dim}: <x,x> = -R^2, x0 > 0."""

    radius: float = 1.0

    kind: str = field(init=False, default="hyperbolic")

    def __post_init__(self):
        if self.radius <= 0:
            raise DomainError("radius must be positive")

    @property
    def ambient_dim(self):
        return self.dim + 1

    @property
    def kappa(self):
        return -1.0 / self.radius**2

    def ambient_inner(self, v, w):
        v = np.asarray(v, float)
        w = np.asarray(w, float)
        return -v[..., 0] * w[..., 0] + np.sum(v[..., 1:] * w[..., 1:], axis=-1)

    def _flat_metric(self, w):
        w = np.array(w, dtype=float, copy=True)
        w[..., 0] = -w[..., 0]
        return w

    def constraint_violation(self, p):
        return np.abs(self.ambient_inner(p, p) + self.radius**2)

    def tangent_violation(self, p, v):
        return np.abs(self.ambient_inner(p, v)) / self.radius

    def project(self, p):
        p = np.array(p, dtype=float, copy=True)
        sp = np.sum(p[..., 1:] ** 2, axis=-1)
        p[..., 0] = np.sqrt(self.radius**2 + sp)
        return p

    def tangent_project(self, p, v):
        p = np.asarray(p, float)
        v = np.asarray(v, float)
        return v + p * (self.ambient_inner(p, v) / self.radius**2)[..., None]

    def distance(self, p, q):
        R = self.radius
        c = np.maximum(-self.ambient_inner(p, q) / R**2, 1.0)
        w = np.asarray(q, float) - c[..., None] * np.asarray(p, float)
        s = self.norm(w) / R
        return R * np.arcsinh(s)

    def exp(self, p, v):
        p = np.asarray(p, float)
        v = np.asarray(v, float)
        R = self.radius
        nv = self.norm(v)
        theta = nv / R
        sinch = np.where(theta > 1e-14, np.sinh(theta) / np.where(theta > 0, theta, 1.0), 1.0)
        return self.project(np.cosh(theta)[..., None] * p + sinch[..., None] * v)

    def log(self, p, q):
        R = self.radius
        c = np.maximum(-self.ambient_inner(p, q) / R**2, 1.0)
        w = np.asarray(q, float) - c[..., None] * np.asarray(p, float)
        s = self.norm(w) / R
        theta = np.arcsinh(s)
        fac = np.where(s > 1e-14, theta / np.where(s > 0, s, 1.0), 1.0)
        return fac[..., None] * w

    def transport(self, p, q, v):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        v = np.asarray(v, float)
        y = self.log(p, q)
        ny = self.norm(y)
        small = ny < 1e-14
        t_p = y / np.where(small, 1.0, ny)[..., None]
        theta = ny / self.radius
        t_q = (
            np.sinh(theta)[..., None] * p / self.radius
            + np.cosh(theta)[..., None] * t_p
        )
        a = self.ambient_inner(v, t_p)
        out = v - a[..., None] * t_p + a[..., None] * t_q
        return np.where(small[..., None], v, out)

    def canonical_frame(self, p):
        """Minkowski Gram-Schmidt of the spatial basis against p."""
        p = np.asarray(p, float)
        m, d = self.ambient_dim, self.dim
        cols = []
        for i in range(1, m):
            e = np.zeros(m)
            e[i] = 1.0
            v = self.tangent_project(p, e)
            for c in cols:
                v = v - self.ambient_inner(c, v) * c
            nv = self.norm(v)
            if nv > 1e-10:
                cols.append(v / nv)
            if len(cols) == d:
                break
        if len(cols) < d:  # p near a coordinate axis; retry with e0 mix
            e = np.zeros(m)
            e[0] = 1.0
            v = self.tangent_project(p, e)
            for c in cols:
                v = v - self.ambient_inner(c, v) * c
            cols.append(v / self.norm(v))
        return np.stack(cols, axis=-1)

    def random_point(self, rng, size=None, spread=1.0):
        base = np.zeros(self.ambient_dim)
        base[0] = self.radius
        n = 1 if size is None else size
        v = np.zeros((n, self.ambient_dim))
        v[:, 1:] = rng.standard_normal((n, self.dim)) * spread
        pts = self.exp(base, v)
        return pts[0] if size is None else pts

    def spec(self):
        return {"kind": "hyperbolic", "dim": self.dim, "radius": self.radius}


# ---------------------------------------------------------------------------


def make_manifold(kind, dim, radius=None, periods=None):
    """Build a manifold from a config-style spec."""
    kind = kind.lower()
    if kind == "euclidean":
        return Euclidean(dim)
    if kind in ("circle",):
        L = 2 * math.pi * (radius if radius is not None else 1.0)
        return Torus(1, periods=(L,))
    if kind == "torus":
        if periods is None:
            periods = (2 * math.pi,) * dim
        return Torus(dim, periods=tuple(float(L) for L in periods))
    if kind == "sphere":
        return Sphere(dim, radius=float(radius if radius is not None else 1.0))
    if kind == "hyperbolic":
        return Hyperbolic(dim, radius=float(radius if radius is not None else 1.0))
    raise DomainError(f"unknown manifold kind {kind!r}")


def manifold_from_spec(spec):
    return make_manifold(
        spec["kind"],
        int(spec.get("dim", 1)),
        radius=spec.get("radius"),
        periods=spec.get("periods"),
    )
