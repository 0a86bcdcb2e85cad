"""Composite geometric operations built on the manifold primitives."""

from __future__ import annotations

import math

import numpy as np

from .domain import Grid, domain_distance, lipschitz_constant
from .errors import DomainError, NoConvergence, RangeViolation
from .manifold import ManifoldModel, convexity_radius


_EPS = np.finfo(float).eps


def _karcher_value(M, q, pts, w):
    d = M.dist(q[:, None, :], pts)
    return 0.5 * np.sum(w * d * d, axis=1)


def barycenter_batch(M: ManifoldModel, points, weights, tol=1e-10, max_iter=100):
    """Weighted Karcher means of B point sets at once.

    ``points`` has shape (B, K, N), ``weights`` (B, K) with rows summing to 1
    (zero weights are allowed and ignored). Iterates
    q <- exp(q, step * sum_i w_i log(q, p_i)) with step halving whenever the
    Karcher functional would increase.
    """
    pts = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if pts.ndim != 3 or w.shape != pts.shape[:2]:
        raise DomainError("points must be (B, K, N) and weights (B, K)")
    if np.any(w < 0) or not np.allclose(w.sum(axis=1), 1.0, atol=1e-12):
        raise DomainError("weights must be nonnegative and sum to 1")
    B = pts.shape[0]
    rows = np.arange(B)
    q = pts[rows, np.argmax(w, axis=1)].copy()

    R = convexity_radius(M)
    if math.isfinite(R):
        spread = np.max(np.where(w > 0, M.dist(q[:, None, :], pts), 0.0), axis=1)
        if np.any(spread >= 2.0 * R):
            raise RangeViolation("points do not fit in a ball below the convexity radius")

    active = np.ones(B, dtype=bool)
    for _ in range(max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            return q
        qa = q[idx]
        wa = w[idx]
        logs = M.log(qa[:, None, :], pts[idx])
        g = np.einsum("bk,bkn->bn", wa, logs)
        res = M.norm(qa, g)
        done = res <= tol
        active[idx[done]] = False
        idx, qa, g, wa = idx[~done], qa[~done], g[~done], wa[~done]
        if idx.size == 0:
            return q
        f0 = _karcher_value(M, qa, pts[idx], wa)
        step = np.ones(len(idx))
        for _halve in range(30):
            trial = M.exp(qa, step[:, None] * g)
            # allowance: near convergence the decrease is below roundoff of f0
            worse = _karcher_value(M, trial, pts[idx], wa) > f0 * (1.0 + 64 * _EPS)
            if not np.any(worse):
                break
            step = np.where(worse, 0.5 * step, step)
        q[idx] = trial
    raise NoConvergence(f"Karcher iteration did not reach tol={tol:g} in {max_iter} steps")


def barycenter(M: ManifoldModel, points, weights=None, tol=1e-10, max_iter=100):
    """Weighted Karcher mean of a single point set (K, N)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise DomainError("need a nonempty (K, N) array of points")
    if weights is None:
        weights = np.full(len(pts), 1.0 / len(pts))
    return barycenter_batch(M, pts[None], np.asarray(weights, float)[None], tol, max_iter)[0]


# --- mollification -----------------------------------------------------------


def bump(s):
    """C-infinity cutoff exp(1 - 1/(1 - s^2)) on [0, 1), zero beyond."""
    s = np.asarray(s, dtype=float)
    inside = s < 1.0
    safe = np.where(inside, s, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe * safe)), 0.0)


def tent(s):
    s = np.asarray(s, dtype=float)
    return np.clip(1.0 - s, 0.0, None)


KERNELS = {"bump": bump, "tent": tent}


def mollify(M: ManifoldModel, grid: Grid, f, delta, kernel="bump", tol=1e-10, max_iter=100):
    """Domain mollification: f_delta(x) is the Karcher mean of the values f(y)
    over nodes y with d(x, y) < delta, weighted by kernel(d(x, y) / delta).
    """
    f = np.asarray(f, dtype=float)
    if delta <= 0:
        return f.copy()
    psi = KERNELS[kernel] if isinstance(kernel, str) else kernel
    n = grid.n_nodes
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    dd = domain_distance(grid, ii, jj)
    wfull = psi(dd / delta)
    wfull[np.arange(n), np.arange(n)] = psi(np.zeros(1))[0]
    counts = np.count_nonzero(wfull > 0, axis=1)
    K = int(counts.max())
    order = np.argsort(-wfull, axis=1, kind="stable")[:, :K]
    w = np.take_along_axis(wfull, order, axis=1)
    w /= w.sum(axis=1, keepdims=True)
    pts = f[order]
    out = barycenter_batch(M, pts, w, tol=tol, max_iter=max_iter)
    # a node whose only neighbour is itself keeps its value bit-for-bit
    single = counts == 1
    out[single] = f[single]
    return out


def mollifier_lipschitz_ratio(M: ManifoldModel, grid: Grid, f, f_delta) -> float:
    """Lip(f_delta) / Lip(f); the constant C in Lip(f_delta) <= C Lip(f)."""
    lf = lipschitz_constant(M, grid, f)
    if lf == 0:
        return 0.0
    return lipschitz_constant(M, grid, f_delta) / lf


# --- retraction and homotopy -------------------------------------------------


def retract_into_ball(M: ManifoldModel, p, R, q):
    """Radial reflection onto B(p, R): radius r -> r (r < R), 2R - r (R <= r < 2R), else p."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if not R < convexity_radius(M):
        raise DomainError("retraction radius must be below the convexity radius")
    pb = np.broadcast_to(p, q.shape)
    r = M.dist(pb, q)
    out = np.array(q, dtype=float, copy=True)
    if out.ndim == 1:
        out = out[None]
        r = np.atleast_1d(r)
        pb = pb[None]
    reflect = (r >= R) & (r < 2.0 * R)
    far = r >= 2.0 * R
    if np.any(reflect):
        v = M.log(pb[reflect], out[reflect])
        scale = (2.0 * R - r[reflect]) / r[reflect]
        out[reflect] = M.exp(pb[reflect], scale[:, None] * v)
    out[far] = pb[far]
    return out.reshape(q.shape)


def geodesic_homotopy(M: ManifoldModel, u, v, t):
    """Nodewise geodesic U(t)(x) = exp(u(x), t log(u(x), v(x)))."""
    u = np.asarray(u, dtype=float)
    if t == 0:
        return u.copy()
    return M.exp(u, t * M.log(u, np.asarray(v, dtype=float)))
