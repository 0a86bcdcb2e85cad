"""Discrete ROF / Mosolov energies, their Riemannian gradients and the
chart-level coefficient functions of the regularized system.

The discrete energy of a field ``u`` with data ``f`` is::

    tv        = sum_k  w_k * sqrt(s_k + eps^2)
    dirichlet = sum_k  w_k * sigma/2 * s_k
    fidelity  = lambda/2 * sum_i  node_weight_i * dist(u_i, f_i)^2

where ``s_k = sum_{e in term k} (dist(u_a, u_b) / len_e)^2`` (see
:mod:`mrof.domain` for the quadrature).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .domain import Grid
from .errors import CutLocusReached, DomainError, GridMismatch, RequiresPositiveEps
from .manifold import CUT_LOCUS_TOL, ManifoldModel


@dataclass(frozen=True)
class EnergyParams:
    lam: float
    sigma: float = 0.0
    eps: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        for name in ("lam", "sigma", "eps", "delta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be finite and >= 0, got {v!r}")

    def replace(self, **kw) -> "EnergyParams":
        d = dict(lam=self.lam, sigma=self.sigma, eps=self.eps, delta=self.delta)
        d.update(kw)
        return EnergyParams(**d)


class EnergyBreakdown(NamedTuple):
    tv: float
    fidelity: float
    dirichlet: float
    total: float

    @classmethod
    def of(cls, tv, fidelity, dirichlet):
        return cls(float(tv), float(fidelity), float(dirichlet), float(tv + fidelity + dirichlet))


def _check_shapes(M, grid, *fields):
    for u in fields:
        if u.shape != (grid.n_nodes, M.ambient_dim):
            raise GridMismatch(
                f"field of shape {u.shape} does not live on {grid.spec} x {M.spec}"
            )


def _guard_cut_locus(M, d):
    if np.isfinite(M.inj) and np.any(d >= M.inj - CUT_LOCUS_TOL):
        raise CutLocusReached("two values are at (or past) the cut locus of each other")


def edge_geometry(M: ManifoldModel, grid: Grid, u, want_logs=False):
    """Per-edge distances and, optionally, log_{u_a} u_b and log_{u_b} u_a."""
    ua = u[grid.edge_a]
    ub = u[grid.edge_b]
    if M.code in (0, 1, 2):
        d, lab, lba = kernels.edge_geometry(M.code, M.radius, ua, ub, want_logs)
        _guard_cut_locus(M, d)
        return d, lab, lba
    d = M.dist(ua, ub)
    if not want_logs:
        return d, None, None
    return d, M.log(ua, ub), M.log(ub, ua)


class EnergyModel:
    """Energy of fields on a fixed (manifold, grid, data) triple.

    Caches the grid structure so the solver can call :meth:`evaluate` and
    :meth:`value_and_grad` in its inner loop.
    """

    def __init__(self, M: ManifoldModel, grid: Grid, f, params: EnergyParams):
        self.M = M
        self.grid = grid
        self.f = np.asarray(f, dtype=float)
        _check_shapes(M, grid, self.f)
        self.params = params
        self.inv_len2 = 1.0 / grid.edge_length**2
        self.term_w = grid.term_weight
        self.term_edges = grid.term_edges
        self.node_w = grid.node_weight

    def _fidelity(self, u, want_log):
        M = self.M
        if M.code in (0, 1, 2):
            d, lab, _ = kernels.edge_geometry(M.code, M.radius, u, self.f, want_log)
        else:
            d = M.dist(u, self.f)
            lab = M.log(u, self.f) if want_log else None
        _guard_cut_locus(M, d)
        fid = 0.5 * self.params.lam * float(np.sum(self.node_w * d * d))
        return fid, lab

    def evaluate(self, u) -> EnergyBreakdown:
        u = np.asarray(u, dtype=float)
        _check_shapes(self.M, self.grid, u)
        p = self.params
        d, _, _ = edge_geometry(self.M, self.grid, u)
        tv, dirichlet, _ = kernels.tv_assemble(
            d, self.inv_len2, self.term_w, self.term_edges, p.eps, p.sigma, False
        )
        fid, _ = self._fidelity(u, False)
        return EnergyBreakdown.of(tv, fid, dirichlet)

    def value_and_grad(self, u):
        """Energy breakdown and the Riemannian gradient (tangent at each node)."""
        u = np.asarray(u, dtype=float)
        _check_shapes(self.M, self.grid, u)
        p = self.params
        if not p.eps > 0:
            raise RequiresPositiveEps("the gradient needs eps > 0")
        g = self.grid
        d, lab, lba = edge_geometry(self.M, g, u, want_logs=True)
        tv, dirichlet, coef = kernels.tv_assemble(
            d, self.inv_len2, self.term_w, self.term_edges, p.eps, p.sigma, True
        )
        grad = kernels.scatter_gradient(g.n_nodes, g.edge_a, g.edge_b, coef, lab, lba)
        fid, log_uf = self._fidelity(u, True)
        grad -= (p.lam * self.node_w)[:, None] * log_uf
        return EnergyBreakdown.of(tv, fid, dirichlet), self.M.project_tangent(u, grad)

    def edge_coefficients(self, u):
        """d(tv + dirichlet)/d(dist_e^2) per edge; used by the preconditioner."""
        p = self.params
        d, _, _ = edge_geometry(self.M, self.grid, u)
        _, _, coef = kernels.tv_assemble(
            d, self.inv_len2, self.term_w, self.term_edges, p.eps, p.sigma, True
        )
        return coef


def energy(M: ManifoldModel, grid: Grid, u, f, params: EnergyParams) -> EnergyBreakdown:
    return EnergyModel(M, grid, f, params).evaluate(u)


def riemannian_gradient(M: ManifoldModel, grid: Grid, u, f, params: EnergyParams):
    """Gradient of :func:`energy` w.r.t. moving each node along the manifold."""
    return EnergyModel(M, grid, f, params).value_and_grad(u)[1]


def el_residual(M: ManifoldModel, grid: Grid, u, f, params: EnergyParams):
    """Discrete Euler-Lagrange residual  -grad / node_weight  and its max norm."""
    grad = riemannian_gradient(M, grid, u, f, params)
    res = -grad / grid.node_weight[:, None]
    norm = float(np.max(M.norm(np.asarray(u, float), res)))
    return res, norm


# --- chart-level coefficients of the regularized system ----------------------


def coefficients(rho, xi, eps, sigma):
    """b(x, xi) = rho / sqrt(|xi|^2 + eps^2 rho^2) and a = (b + sigma) xi.

    ``xi`` has shape (..., 2N); ``rho`` broadcasts against its leading axes.
    """
    if not eps > 0:
        raise RequiresPositiveEps("coefficients need eps > 0")
    rho = np.asarray(rho, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(rho <= 0):
        raise DomainError("rho must be positive")
    b = rho / np.sqrt(np.sum(xi * xi, axis=-1) + eps**2 * rho**2)
    a = (b + sigma)[..., None] * xi
    return a, b


def coefficient_jacobian(rho, xi, eps, sigma):
    """A = da/dxi = (b + sigma) I - b xi xi^T / (|xi|^2 + eps^2 rho^2)."""
    xi = np.asarray(xi, dtype=float)
    _, b = coefficients(rho, xi, eps, sigma)
    denom = np.sum(xi * xi, axis=-1) + eps**2 * np.asarray(rho, float) ** 2
    n = xi.shape[-1]
    eye = np.eye(n)
    return (b + sigma)[..., None, None] * eye - (b / denom)[..., None, None] * (
        xi[..., :, None] * xi[..., None, :]
    )


@dataclass
class HypothesisSamples:
    """Monte-Carlo inputs for the structure checks (one row per sample)."""

    rho_x: np.ndarray
    rho_y: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.rho_x)


def sample_hypothesis_inputs(rng, n_samples, N=3, grid_rho="sphere_patch"):
    """Draw points x, y in [0,1]^2, their conformal factors, and xi, eta in R^(2N).

    Magnitudes of xi and eta are log-uniform over [1e-4, 1e3] so that both the
    degenerate (|xi| << eps) and saturated (|xi| >> eps) regimes are hit.
    """
    x = rng.uniform(0.0, 1.0, (n_samples, 2))
    y = rng.uniform(0.0, 1.0, (n_samples, 2))
    rho_fn = RHO_FUNCTIONS[grid_rho]
    def vec():
        v = rng.standard_normal((n_samples, 2 * N))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * 10.0 ** rng.uniform(-4, 3, (n_samples, 1))
    return HypothesisSamples(rho_fn(x), rho_fn(y), vec(), vec(), x, y)


def _rho_sphere_patch(x):
    return 2.0 / (1.0 + np.sum(np.asarray(x) ** 2, axis=-1))


RHO_FUNCTIONS = {
    "flat": lambda x: np.ones(np.shape(x)[:-1]),
    "sphere_patch": _rho_sphere_patch,
}
# sup |grad rho| on [0,1]^2: flat 0; sphere_patch 4r/(1+r^2)^2 peaks at r = 1/sqrt(3)
RHO_LIPSCHITZ = {"flat": 0.0, "sphere_patch": 3.0 * np.sqrt(3.0) / 4.0}


def check_hypotheses(samples: HypothesisSamples, eps, sigma, rho_lip):
    """Slacks of the structure conditions H1-H6 for every sample.

    Returns a dict of arrays; every entry must be >= -1e-12.

    H1  (C/eps + sigma)|xi| - |a(x,xi)|               with C = 1 (sharp)
    H2  eta^T A(x,xi) eta - sigma |eta|^2
    H3  <a(xi) - a(eta), xi - eta> - sigma |xi - eta|^2
    H4  <a(xi), xi> - sigma |xi|^2
    H5  rho_lip |x - y| - |a(x,xi) - a(y,xi)|
    H6  (1/eps + sigma)|xi - eta| - |a(x,xi) - a(x,eta)|
    """
    s = samples
    a_xi, b_xi = coefficients(s.rho_x, s.xi, eps, sigma)
    a_eta, _ = coefficients(s.rho_x, s.eta, eps, sigma)
    a_y, _ = coefficients(s.rho_y, s.xi, eps, sigma)
    nrm = lambda v: np.linalg.norm(v, axis=-1)  # noqa: E731
    dot = lambda v, w: np.sum(v * w, axis=-1)  # noqa: E731
    A = coefficient_jacobian(s.rho_x, s.xi, eps, sigma)
    quad = np.einsum("...i,...ij,...j->...", s.eta, A, s.eta)
    diff = s.xi - s.eta

    def rel(slack, scale):
        # slack relative to the size of the compared quantities
        return slack / np.maximum(scale, 1.0)

    h1_bound = (1.0 / eps + sigma) * nrm(s.xi)
    h2_bound = sigma * dot(s.eta, s.eta)
    h3_lhs = dot(a_xi - a_eta, diff)
    h4_lhs = dot(a_xi, s.xi)
    h5_bound = rho_lip * nrm(s.x - s.y)
    h6_bound = (1.0 / eps + sigma) * nrm(diff)
    return {
        "H1": rel(h1_bound - nrm(a_xi), h1_bound),
        "H2": rel(quad - h2_bound, (b_xi + sigma) * dot(s.eta, s.eta)),
        "H3": rel(h3_lhs - sigma * dot(diff, diff), (nrm(a_xi) + nrm(a_eta)) * nrm(diff)),
        "H4": rel(h4_lhs - sigma * dot(s.xi, s.xi), nrm(a_xi) * nrm(s.xi)),
        "H5": rel(h5_bound - nrm(a_xi - a_y), h5_bound),
        "H6": rel(h6_bound - nrm(a_xi - a_eta), h6_bound),
    }


def check_fidelity_force(M: ManifoldModel, u, f, lam, rho_max, radius):
    """In-ball check of |t(x,p)| <= C |p| for t = -lam rho^2 log_p f.

    With p, f inside a ball of radius ``radius`` we have
    |t| <= lam rho_max^2 * 2 radius, so C = lam rho_max^2 * 2 radius / min|p|.
    Returns the slack per node.
    """
    u = np.asarray(u, float)
    t = lam * rho_max**2 * M.norm(u, M.log(u, np.asarray(f, float)))
    pn = np.linalg.norm(u, axis=-1)
    C = lam * rho_max**2 * 2.0 * radius / np.min(pn)
    return C * pn - t
