"""Target-space primitives for four model manifolds.

Points and tangent vectors are stored in fixed ambient coordinates, with the
last array axis holding the coordinates. Every operation broadcasts over the
leading axes, so a whole field of shape ``(n_nodes, ambient_dim)`` can be
passed at once.

* ``euclidean:n``  -- R^n
* ``sphere:n[:r=R]`` -- the round sphere of radius R in R^(n+1)
* ``hyperbolic:n`` -- the hyperboloid model {x : <x,x>_L = -1, x0 > 0}
* ``spd:n`` -- symmetric positive definite n x n matrices (flattened) with
  the affine-invariant metric
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import CutLocusReached, DomainError, ParseError

CONSTRAINT_TOL = 1e-12
ROUNDTRIP_TOL = 1e-10
# exp() accepts slightly non-tangent input and projects it; beyond this it raises
TANGENT_TOL = 1e-8
# log() refuses points within this angle of the antipode
CUT_LOCUS_TOL = 1e-8

KIND_CODES = {"euclidean": 0, "sphere": 1, "hyperbolic": 2, "spd": 3}


class ManifoldModel:
    """Base class; subclasses fix the geometry.

    Attributes
    ----------
    kind : str
    dim : int
        Intrinsic dimension.
    ambient_dim : int
        Length of the coordinate vector of a point.
    kappa_lo, kappa_hi : float
        Sectional-curvature bounds.
    inj : float
        Injectivity radius (``inf`` on Cartan-Hadamard models).
    frame_dim : int
        Length of the isometric tangent coordinates from :meth:`to_frame`.
    """

    kind = "abstract"
    dim: int
    ambient_dim: int
    kappa_lo: float
    kappa_hi: float
    inj: float
    frame_dim: int

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    @property
    def radius(self) -> float:
        return 1.0

    @property
    def is_npc(self) -> bool:
        return self.kappa_hi <= 0.0

    # --- metric ---------------------------------------------------------
    def inner(self, p, v, w):
        raise NotImplementedError

    def norm(self, p, v):
        return np.sqrt(np.maximum(self.inner(p, v, v), 0.0))

    def exp(self, p, v):
        raise NotImplementedError

    def log(self, p, q):
        raise NotImplementedError

    def dist(self, p, q):
        raise NotImplementedError

    def project_tangent(self, p, x):
        raise NotImplementedError

    def normalize(self, x):
        """Map an approximate point back onto the constraint set."""
        return np.asarray(x, dtype=float)

    # --- isometric tangent coordinates -----------------------------------
    def to_frame(self, p, v):
        """Coordinates of ``v`` in which ``inner(p, ., .)`` is the dot product."""
        return np.asarray(v, dtype=float)

    def from_frame(self, p, w):
        return self.project_tangent(p, w)

    # --- diagnostics ----------------------------------------------------
    def point_residual(self, p):
        raise NotImplementedError

    def tangent_residual(self, p, v):
        raise NotImplementedError

    def check_point(self, p, tol=1e-9):
        res = np.max(np.atleast_1d(self.point_residual(p)))
        if not res <= tol:
            raise DomainError(f"{self.spec}: point constraint residual {res:.3e} > {tol:g}")

    # --- sampling -------------------------------------------------------
    def origin(self):
        raise NotImplementedError

    def random_tangent(self, rng, p, size=None):
        """Standard Gaussian tangent vectors at ``p`` (isotropic in the metric)."""
        p = np.asarray(p, dtype=float)
        shape = p.shape[:-1] if size is None else tuple(np.atleast_1d(size).tolist()) + p.shape[:-1]
        g = rng.standard_normal(shape + (self.frame_dim,))
        return self.from_frame(np.broadcast_to(p, shape + p.shape[-1:]), g)

    def random_point(self, rng, center=None, radius=1.0, size=None):
        """Points ``exp(center, v)`` with |v| uniform in [0, radius)."""
        if center is None:
            center = self.origin()
        center = np.asarray(center, dtype=float)
        v = self.random_tangent(rng, center, size=size)
        nv = self.norm(np.broadcast_to(center, v.shape), v)
        shape = nv.shape
        r = radius * rng.uniform(0.0, 1.0, size=shape)
        scale = np.where(nv > 0, r / np.where(nv > 0, nv, 1.0), 0.0)
        return self.exp(np.broadcast_to(center, v.shape), v * scale[..., None])

    @property
    def spec(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.spec!r})"

    def __eq__(self, other):
        return isinstance(other, ManifoldModel) and self.spec == other.spec

    def __hash__(self):
        return hash(self.spec)


def _dot(x, y):
    return np.einsum("...i,...i->...", x, y)


class Euclidean(ManifoldModel):
    kind = "euclidean"

    def __init__(self, n: int):
        if n < 1:
            raise DomainError("euclidean dimension must be >= 1")
        self.dim = self.ambient_dim = self.frame_dim = int(n)
        self.kappa_lo = self.kappa_hi = 0.0
        self.inj = math.inf

    @property
    def spec(self):
        return f"euclidean:{self.dim}"

    def inner(self, p, v, w):
        return _dot(np.asarray(v, float), np.asarray(w, float))

    def exp(self, p, v):
        return np.asarray(p, float) + np.asarray(v, float)

    def log(self, p, q):
        return np.asarray(q, float) - np.asarray(p, float)

    def dist(self, p, q):
        return np.linalg.norm(np.asarray(q, float) - np.asarray(p, float), axis=-1)

    def project_tangent(self, p, x):
        return np.array(x, dtype=float)

    def point_residual(self, p):
        return np.zeros(np.shape(p)[:-1])

    def tangent_residual(self, p, v):
        return np.zeros(np.shape(v)[:-1])

    def origin(self):
        return np.zeros(self.dim)


class Sphere(ManifoldModel):
    kind = "sphere"

    def __init__(self, n: int, radius: float = 1.0):
        if n < 1:
            raise DomainError("sphere dimension must be >= 1")
        if not radius > 0:
            raise DomainError("sphere radius must be positive")
        self.dim = int(n)
        self.ambient_dim = self.frame_dim = self.dim + 1
        self._r = float(radius)
        self.kappa_lo = self.kappa_hi = 1.0 / self._r**2
        self.inj = math.pi * self._r

    @property
    def radius(self):
        return self._r

    @property
    def spec(self):
        if self._r == 1.0:
            return f"sphere:{self.dim}"
        return f"sphere:{self.dim}:r={self._r:g}"

    def inner(self, p, v, w):
        return _dot(np.asarray(v, float), np.asarray(w, float))

    def normalize(self, x):
        x = np.asarray(x, dtype=float)
        return self._r * x / np.linalg.norm(x, axis=-1, keepdims=True)

    def project_tangent(self, p, x):
        p = np.asarray(p, float)
        x = np.asarray(x, float)
        return x - (_dot(p, x) / self._r**2)[..., None] * p

    def _check_tangent(self, p, v):
        res = np.abs(_dot(p, v)) / self._r
        scale = 1.0 + np.linalg.norm(v, axis=-1)
        if np.any(res > TANGENT_TOL * scale):
            raise DomainError("vector is not tangent at the base point")

    def exp(self, p, v):
        p = np.asarray(p, float)
        v = np.asarray(v, float)
        self._check_tangent(p, v)
        v = self.project_tangent(p, v)
        nv = np.linalg.norm(v, axis=-1)
        theta = nv / self._r
        safe = np.where(nv > 0, nv, 1.0)
        out = np.cos(theta)[..., None] * p + (self._r * np.sin(theta) / safe)[..., None] * v
        return self.normalize(out)

    def _angle(self, p, q):
        c = _dot(p, q) / self._r**2
        w = q - c[..., None] * p
        s = np.linalg.norm(w, axis=-1) / self._r
        return np.arctan2(s, c), w

    def log(self, p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        theta, w = self._angle(p, q)
        if np.any(theta >= math.pi - CUT_LOCUS_TOL):
            raise CutLocusReached("log requested at the antipodal point")
        nw = np.linalg.norm(w, axis=-1)
        scale = np.where(nw > 0, self._r * theta / np.where(nw > 0, nw, 1.0), 0.0)
        return self.project_tangent(p, scale[..., None] * w)

    def dist(self, p, q):
        theta, _ = self._angle(np.asarray(p, float), np.asarray(q, float))
        return self._r * theta

    def point_residual(self, p):
        return np.abs(np.linalg.norm(p, axis=-1) - self._r)

    def tangent_residual(self, p, v):
        return np.abs(_dot(p, v)) / self._r

    def origin(self):
        e = np.zeros(self.ambient_dim)
        e[0] = self._r
        return e


def minkowski(x, y):
    """Lorentzian inner product -x0*y0 + sum_i xi*yi."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return _dot(x[..., 1:], y[..., 1:]) - x[..., 0] * y[..., 0]


class Hyperbolic(ManifoldModel):
    kind = "hyperbolic"

    def __init__(self, n: int):
        if n < 1:
            raise DomainError("hyperbolic dimension must be >= 1")
        self.dim = self.frame_dim = int(n)
        self.ambient_dim = self.dim + 1
        self.kappa_lo = self.kappa_hi = -1.0
        self.inj = math.inf

    @property
    def spec(self):
        return f"hyperbolic:{self.dim}"

    def inner(self, p, v, w):
        return minkowski(v, w)

    def normalize(self, x):
        x = np.array(x, dtype=float)
        x[..., 0] = np.sqrt(1.0 + _dot(x[..., 1:], x[..., 1:]))
        return x

    def project_tangent(self, p, x):
        p = np.asarray(p, float)
        x = np.asarray(x, float)
        return x + minkowski(x, p)[..., None] * p

    def exp(self, p, v):
        p = np.asarray(p, float)
        v = np.asarray(v, float)
        scale = 1.0 + np.sqrt(np.abs(_dot(v, v)))
        if np.any(np.abs(minkowski(p, v)) > TANGENT_TOL * scale * np.abs(p[..., 0])):
            raise DomainError("vector is not tangent at the base point")
        v = self.project_tangent(p, v)
        nv = np.sqrt(np.maximum(minkowski(v, v), 0.0))
        safe = np.where(nv > 0, nv, 1.0)
        out = np.cosh(nv)[..., None] * p + (np.sinh(nv) / safe)[..., None] * v
        return self.normalize(out)

    def dist(self, p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        alpha = -minkowski(p, q)
        diff = q - p
        chord2 = np.maximum(minkowski(diff, diff), 0.0)
        near = 2.0 * np.arcsinh(0.5 * np.sqrt(chord2))
        far = np.arccosh(np.maximum(alpha, 1.0))
        return np.where(alpha > 2.0, far, near)

    def log(self, p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        d = self.dist(p, q)
        w = self.project_tangent(p, q)
        ratio = np.where(d > 1e-8, d / np.sinh(np.where(d > 1e-8, d, 1.0)), 1.0 - d**2 / 6.0)
        return self.project_tangent(p, ratio[..., None] * w)

    def _boost(self, p):
        """Lorentz boost B with B p = e0 (and its inverse)."""
        p = np.asarray(p, float)
        p0 = p[..., 0]
        ps = p[..., 1:]
        n = self.dim
        shape = p.shape[:-1]
        B = np.empty(shape + (n + 1, n + 1))
        B[..., 0, 0] = p0
        B[..., 0, 1:] = -ps
        B[..., 1:, 0] = -ps
        B[..., 1:, 1:] = np.eye(n) + ps[..., :, None] * ps[..., None, :] / (1.0 + p0)[..., None, None]
        Binv = B.copy()
        Binv[..., 0, 1:] = ps
        Binv[..., 1:, 0] = ps
        return B, Binv

    def to_frame(self, p, v):
        B, _ = self._boost(p)
        return np.einsum("...ij,...j->...i", B, v)[..., 1:]

    def from_frame(self, p, w):
        _, Binv = self._boost(p)
        w = np.asarray(w, float)
        full = np.concatenate([np.zeros(w.shape[:-1] + (1,)), w], axis=-1)
        return self.project_tangent(p, np.einsum("...ij,...j->...i", Binv, full))

    def point_residual(self, p):
        p = np.asarray(p, float)
        res = np.abs(minkowski(p, p) + 1.0)
        return np.where(p[..., 0] > 0, res, np.inf)

    def tangent_residual(self, p, v):
        return np.abs(minkowski(p, v))

    def origin(self):
        e = np.zeros(self.ambient_dim)
        e[0] = 1.0
        return e


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _eig_apply(a, fn):
    w, U = np.linalg.eigh(_sym(a))
    return np.einsum("...ij,...j,...kj->...ik", U, fn(w), U)


class SPD(ManifoldModel):
    """SPD matrices with the affine-invariant metric tr(P^-1 V P^-1 W)."""

    kind = "spd"

    def __init__(self, n: int):
        if n not in (2, 3):
            raise DomainError("spd is supported for n = 2, 3 only")
        self.n = int(n)
        self.dim = self.n * (self.n + 1) // 2
        self.ambient_dim = self.frame_dim = self.n * self.n
        # affine-invariant SPD(n): sectional curvature in [-1/2, 0]
        self.kappa_lo = -0.5
        self.kappa_hi = 0.0
        self.inj = math.inf

    @property
    def spec(self):
        return f"spd:{self.n}"

    def _mat(self, x):
        x = np.asarray(x, float)
        return x.reshape(x.shape[:-1] + (self.n, self.n))

    def _flat(self, a):
        return a.reshape(a.shape[:-2] + (self.n * self.n,))

    def _sqrt_pair(self, P):
        w, U = np.linalg.eigh(_sym(P))
        if np.any(w <= 0):
            raise DomainError("matrix is not positive definite")
        s = np.sqrt(w)
        half = np.einsum("...ij,...j,...kj->...ik", U, s, U)
        ihalf = np.einsum("...ij,...j,...kj->...ik", U, 1.0 / s, U)
        return half, ihalf

    def inner(self, p, v, w):
        P = self._mat(p)
        Pinv = np.linalg.inv(P)
        A = Pinv @ self._mat(v)
        B = Pinv @ self._mat(w)
        return np.einsum("...ij,...ji->...", A, B)

    def normalize(self, x):
        return self._flat(_sym(self._mat(x)))

    def project_tangent(self, p, x):
        return self._flat(_sym(self._mat(x)))

    def exp(self, p, v):
        P = self._mat(p)
        V = self._mat(v)
        if np.any(np.abs(V - np.swapaxes(V, -1, -2)) > TANGENT_TOL * (1.0 + np.abs(V))):
            raise DomainError("tangent vector must be a symmetric matrix")
        half, ihalf = self._sqrt_pair(P)
        inner = _eig_apply(ihalf @ _sym(V) @ ihalf, np.exp)
        return self._flat(_sym(half @ inner @ half))

    def log(self, p, q):
        half, ihalf = self._sqrt_pair(self._mat(p))
        inner = _eig_apply(ihalf @ self._mat(q) @ ihalf, np.log)
        return self._flat(_sym(half @ inner @ half))

    def dist(self, p, q):
        _, ihalf = self._sqrt_pair(self._mat(p))
        w = np.linalg.eigvalsh(_sym(ihalf @ self._mat(q) @ ihalf))
        return np.sqrt(np.sum(np.log(w) ** 2, axis=-1))

    def to_frame(self, p, v):
        _, ihalf = self._sqrt_pair(self._mat(p))
        return self._flat(ihalf @ _sym(self._mat(v)) @ ihalf)

    def from_frame(self, p, w):
        half, _ = self._sqrt_pair(self._mat(p))
        return self._flat(_sym(half @ _sym(self._mat(w)) @ half))

    def point_residual(self, p):
        P = self._mat(p)
        asym = np.max(np.abs(P - np.swapaxes(P, -1, -2)), axis=(-2, -1))
        lo = np.linalg.eigvalsh(_sym(P))[..., 0]
        return np.where(lo > 0, asym, np.inf)

    def tangent_residual(self, p, v):
        V = self._mat(v)
        return np.max(np.abs(V - np.swapaxes(V, -1, -2)), axis=(-2, -1))

    def origin(self):
        return np.eye(self.n).ravel()


def parse_manifold(spec: str) -> ManifoldModel:
    """Build a model from strings such as ``"sphere:2:r=2"`` or ``"spd:3"``."""
    parts = [s.strip() for s in str(spec).strip().split(":")]
    if len(parts) < 2:
        raise ParseError(f"bad manifold spec {spec!r}")
    kind = parts[0].lower()
    try:
        n = int(parts[1])
    except ValueError:
        raise ParseError(f"bad manifold dimension in {spec!r}") from None
    opts = {}
    for item in parts[2:]:
        key, sep, val = item.partition("=")
        if not sep:
            raise ParseError(f"bad manifold option {item!r}")
        opts[key.strip()] = val.strip()
    try:
        if kind == "euclidean" and not opts:
            return Euclidean(n)
        if kind == "sphere" and set(opts) <= {"r"}:
            return Sphere(n, float(opts.get("r", 1.0)))
        if kind == "hyperbolic" and not opts:
            return Hyperbolic(n)
        if kind == "spd" and not opts:
            return SPD(n)
    except (DomainError, ValueError) as exc:
        raise ParseError(f"bad manifold spec {spec!r}: {exc}") from None
    raise ParseError(f"unknown manifold spec {spec!r}")


def convexity_radius(M: ManifoldModel) -> float:
    """R_kappa = min(inj, pi/sqrt(kappa))/2 for kappa > 0, inj/2 otherwise."""
    k = M.kappa_hi
    if k > 0:
        return 0.5 * min(M.inj, math.pi / math.sqrt(k))
    return 0.5 * M.inj


def strong_radius(M: ManifoldModel) -> float:
    """The stricter radius min(inj/2, pi/(4 sqrt(kappa))) used for kappa > 0."""
    k = M.kappa_hi
    if k > 0:
        return min(0.5 * M.inj, math.pi / (4.0 * math.sqrt(k)))
    return 0.5 * M.inj


class Comparison(NamedTuple):
    s: np.ndarray
    c: np.ndarray
    ta: np.ndarray
    co: np.ndarray


def comparison(kappa: float, t):
    """Model-space comparison functions s_k, c_k = s_k', ta_k = s/c, co_k = c/s."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("comparison functions need t >= 0")
    if kappa > 0:
        rk = math.sqrt(kappa)
        if np.any(t >= math.pi / rk):
            raise DomainError("co_kappa has a pole at t = pi/sqrt(kappa)")
        s = np.sin(rk * t) / rk
        c = np.cos(rk * t)
    elif kappa < 0:
        rk = math.sqrt(-kappa)
        s = np.sinh(rk * t) / rk
        c = np.cosh(rk * t)
    else:
        s = t.copy()
        c = np.ones_like(t)
    with np.errstate(divide="ignore"):
        ta = s / c
        co = c / s
    return Comparison(s, c, ta, co)
