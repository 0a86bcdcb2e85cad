"""Ground-truth solvers used to validate :mod:`mrof.solver`.

* :func:`taut_string_1d` solves the scalar 1-D problem exactly,
* :func:`dual_coordinate_descent_1d` solves the same problem through its box
  constrained dual (an independent check of the taut string),
* :func:`brute_force_small` minimizes over a geodesic net on tiny grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .domain import Grid
from .energy import EnergyParams, energy
from .errors import BudgetExceeded, DomainError, GridMismatch
from .manifold import ManifoldModel, comparison

BRUTE_FORCE_BUDGET = 10**8
# cap on the candidate distance table (entries), keeps memory below ~200 MB
DISTANCE_TABLE_BUDGET = 25 * 10**6


@dataclass
class OracleResult:
    values: np.ndarray
    objective: float
    method: str
    info: dict = field(default_factory=dict)


def trapezoid_mass(n, dx):
    m = np.full(n, float(dx))
    if n > 1:
        m[0] *= 0.5
        m[-1] *= 0.5
    return m


def scalar_objective(u, f, lam, mass):
    """sum |u_{i+1} - u_i| + lam/2 sum mass_i (u_i - f_i)^2."""
    u = np.asarray(u, float)
    f = np.asarray(f, float)
    return float(np.sum(np.abs(np.diff(u))) + 0.5 * lam * np.sum(mass * (u - f) ** 2))


def _scalar_setup(f, lam, dx, grid):
    f = np.asarray(f, dtype=float).reshape(-1)
    if len(f) < 1:
        raise DomainError("need at least one sample")
    if not lam > 0:
        raise DomainError("lambda must be positive")
    if grid is not None:
        if not (grid.kind == "interval" and grid.n_nodes == len(f)):
            raise GridMismatch(f"{grid.spec} is not an interval grid with {len(f)} nodes")
        mass = grid.node_weight
    else:
        mass = trapezoid_mass(len(f), 1.0 if dx is None else dx)
    return f, mass


def kkt_residual(u, f, lam, mass, jump_tol=1e-9):
    """Largest violation of the subgradient conditions of the scalar problem.

    With z_i = sum_{j<=i} lam mass_j (u_j - f_j): |z_i| <= 1 on every edge,
    z_i = sign(u_{i+1} - u_i) wherever the edge jumps, and z_{n-1} = 0.
    """
    u = np.asarray(u, float)
    z = np.cumsum(lam * mass * (u - f))
    res = abs(z[-1])
    if len(u) > 1:
        ze = z[:-1]
        res = max(res, float(np.max(np.abs(ze) - 1.0, initial=0.0)))
        du = np.diff(u)
        jump = np.abs(du) > jump_tol * (1.0 + np.max(np.abs(f)))
        if np.any(jump):
            res = max(res, float(np.max(np.abs(ze[jump] - np.sign(du[jump])))))
    return res


def taut_string_1d(f, lam, dx=None, grid: Grid | None = None) -> OracleResult:
    """Exact minimizer of sum |u_{i+1}-u_i| + lam/2 sum m_i (u_i - f_i)^2.

    ``m`` is the trapezoid weight (``dx`` inside, ``dx/2`` at both ends), the
    same convention as the energy on an interval grid at eps = 0. Pass either
    ``dx`` or an interval ``grid``.
    """
    f, mass = _scalar_setup(f, lam, dx, grid)
    u = np.asarray(kernels.taut_string(f, lam * mass))
    return OracleResult(
        values=u,
        objective=scalar_objective(u, f, lam, mass),
        method="taut_string",
        info={"kkt_residual": kkt_residual(u, f, lam, mass)},
    )


def dual_coordinate_descent_1d(f, lam, dx=None, grid: Grid | None = None, tol=1e-15, max_sweeps=200000):
    """Same problem solved through its dual.

    The dual variables z_e in [-1, 1] live on the n-1 edges; the primal is
    recovered as u_i = f_i + (z_i - z_{i-1}) / (lam m_i). Minimizes
    1/2 sum c_i^2 / (lam m_i) + sum f_i c_i, c_i = z_i - z_{i-1}, by exact
    projected coordinate minimization (even/odd edges alternate).
    """
    f, mass = _scalar_setup(f, lam, dx, grid)
    n = len(f)
    lm = lam * mass
    if n == 1:
        u = f.copy()
        return OracleResult(u, scalar_objective(u, f, lam, mass), "dual_cd", {"sweeps": 0})
    z = np.zeros(n - 1)
    inv_l = 1.0 / lm[:-1]
    inv_r = 1.0 / lm[1:]
    denom = inv_l + inv_r
    df = f[1:] - f[:-1]
    zp = np.zeros(n + 1)  # padded: zp[0] = z_{-1} = 0, zp[n] = z_{n-1} = 0
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        old = z.copy()
        for parity in (0, 1):
            zp[1:n] = z
            e = np.arange(parity, n - 1, 2)
            z[e] = np.clip((zp[e] * inv_l[e] + zp[e + 2] * inv_r[e] + df[e]) / denom[e], -1.0, 1.0)
        if np.max(np.abs(z - old)) <= tol:
            break
    zp[1:n] = z
    u = f + (zp[1:] - zp[:-1]) / lm
    return OracleResult(u, scalar_objective(u, f, lam, mass), "dual_cd", {"sweeps": sweeps})


# --- brute force on tiny manifold instances -----------------------------------


def tangent_basis(M: ManifoldModel, p):
    """Orthonormal basis (dim, ambient) of the tangent space at p."""
    vecs = M.from_frame(np.broadcast_to(p, (M.frame_dim, len(p))), np.eye(M.frame_dim))
    basis = []
    for v in vecs:
        for b in basis:
            v = v - M.inner(p, v, b) * b
        nv = float(M.norm(p, v))
        if nv > 1e-8:
            basis.append(v / nv)
        if len(basis) == M.dim:
            break
    return np.array(basis)


def geodesic_net(M: ManifoldModel, p, R, quantization):
    """exp_p of a cubic grid in normal coordinates covering the ball B(p, R).

    Returns ``(points, covering_radius)``: every point of B(p, R) lies within
    ``covering_radius`` of the net.
    """
    q = int(quantization)
    if q < 1:
        raise DomainError("quantization must be >= 1")
    if R == 0 or q == 1:
        return np.asarray(p, float)[None], float(R) * (1.0 if q == 1 else 0.0)
    dim = M.dim
    h = 2.0 * R / (q - 1)
    axis = np.linspace(-R, R, q)
    coords = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), -1).reshape(-1, dim)
    half_diag = 0.5 * h * math.sqrt(dim)
    coords = coords[np.linalg.norm(coords, axis=1) <= R + half_diag]
    basis = tangent_basis(M, p)
    v = coords @ basis
    pts = M.exp(np.broadcast_to(p, v.shape), v)
    # exp_p stretches distances by at most s_k(r)/r for curvature >= k (Rauch)
    r_out = R + half_diag
    stretch = 1.0
    if M.kappa_lo < 0:
        stretch = float(comparison(M.kappa_lo, r_out).s) / r_out
    return pts, half_diag * stretch


def energy_resolution(grid: Grid, params: EnergyParams, delta, diameter):
    """Bound on |E(u) - E(v)| when every node moves by at most ``delta`` and all
    values stay in a set of the given diameter."""
    lens = grid.edge_length
    te = grid.term_edges
    present = te >= 0
    inv = np.where(present, 1.0 / lens[np.where(present, te, 0)], 0.0)
    w = grid.term_weight
    tv = float(np.sum(w * np.sum(inv, axis=1))) * 2.0 * delta
    dD = 2.0 * delta * (2.0 * diameter + 2.0 * delta)
    dirichlet = 0.5 * params.sigma * float(np.sum(w * np.sum(inv**2, axis=1))) * dD
    fid = 0.5 * params.lam * float(np.sum(grid.node_weight)) * delta * (2.0 * diameter + delta)
    return tv + dirichlet + fid


def brute_force_small(
    M: ManifoldModel, grid: Grid, f, params: EnergyParams, quantization: int, center=None
) -> OracleResult:
    """Global minimum over a geodesic net of the data ball (<= 4 nodes).

    Candidates are the net points plus the data values. The reported
    ``energy_resolution`` bounds how far the best net value can sit above the
    minimum over the ball.
    """
    from .solver import data_ball

    if grid.n_nodes > 4:
        raise DomainError("brute force is limited to grids with at most 4 nodes")
    f = np.asarray(f, dtype=float)
    n = grid.n_nodes
    if float(quantization) ** (M.dim * n) > BRUTE_FORCE_BUDGET:
        raise BudgetExceeded(
            f"quantization {quantization} over {n} nodes of dimension {M.dim} exceeds 1e8 tuples"
        )
    p, R = data_ball(M, f, center)
    net, cover = geodesic_net(M, p, R, quantization)
    cand = np.concatenate([net, f], axis=0)
    m = len(cand)
    if m * m > DISTANCE_TABLE_BUDGET:
        raise BudgetExceeded(f"{m} candidates need a {m}x{m} distance table")
    D = M.dist(cand[:, None, :], cand[None, :, :])
    df = M.dist(f[:, None, :], cand[None, :, :])
    fid = 0.5 * params.lam * grid.node_weight[:, None] * df**2
    best, idx = kernels.brute_force_scan(
        np.ascontiguousarray(D),
        np.ascontiguousarray(fid),
        grid.edge_a,
        grid.edge_b,
        1.0 / grid.edge_length**2,
        grid.term_weight,
        grid.term_edges,
        float(params.eps),
        float(params.sigma),
    )
    u = cand[np.asarray(idx)]
    obj = energy(M, grid, u, f, params).total
    diameter = 2.0 * (R + cover)
    return OracleResult(
        values=u,
        objective=obj,
        method="brute_force",
        info={
            "scan_objective": float(best),
            "candidates": m,
            "net_resolution": cover,
            "energy_resolution": energy_resolution(grid, params, cover, diameter),
            "center": p,
            "radius": R,
        },
    )

