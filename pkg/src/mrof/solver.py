"""Riemannian descent for the regularized energy and the eps/sigma/delta continuation.

Each iteration computes the Riemannian gradient G, builds a search direction
by solving a graph-Laplacian system in isometric tangent frames (an
IRLS-type preconditioner; the direction is always a descent direction
because the system matrix is symmetric positive definite), and accepts
``u <- exp(u, t X)`` once the Armijo condition holds.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import Grid, lipschitz_constant
from .energy import EnergyBreakdown, EnergyModel, EnergyParams, edge_geometry
from .errors import DomainError, NoConvergence, RangeViolation, RequiresPositiveEps
from .geometry import barycenter, mollify, retract_into_ball
from .manifold import ManifoldModel, convexity_radius, strong_radius

_ROUNDOFF = 64 * np.finfo(float).eps

TRACE_HEADER = ("iter", "tv", "fidelity", "dirichlet", "total")

# accepted flags, in the order they are reported
FLAGS = (
    "converged",
    "max_iter",
    "stalled",
    "cut_locus_guard_triggered",
    "outside_strong_radius",
    "preconditioner_fallback",
)


@dataclass(frozen=True)
class SolveConfig:
    max_iter: int = 2000
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    step_init: float = 1.0
    step_shrink: float = 0.5
    max_backtracks: int = 60
    seed: int = 0
    direction: str = "newton"  # newton | irls | gradient
    retract: bool = True  # reflect iterates that leave the data ball back into it
    # "raise" -> NoConvergence after max_iter; "flag" -> return with the max_iter flag
    on_max_iter: str = "raise"

    def __post_init__(self):
        if not 0 < self.armijo_c < 1:
            raise DomainError("armijo_c must lie in (0, 1)")
        if not 0 < self.step_shrink < 1:
            raise DomainError("step_shrink must lie in (0, 1)")
        if not self.grad_tol > 0:
            raise DomainError("grad_tol must be positive")
        if not self.step_init > 0 or self.max_iter < 0:
            raise DomainError("step_init must be positive and max_iter nonnegative")
        if self.direction not in ("newton", "irls", "gradient"):
            raise DomainError("direction must be newton, irls or gradient")
        if self.on_max_iter not in ("raise", "flag"):
            raise DomainError("on_max_iter must be 'raise' or 'flag'")

    def replace(self, **kw) -> "SolveConfig":
        d = asdict(self)
        d.update(kw)
        return SolveConfig(**d)


@dataclass
class SolveReport:
    iterations: int
    energy_trace: list  # EnergyBreakdown per accepted iterate, starting with u0
    final_grad_norm: float
    final_residual_norm: float
    range_max_dist: float
    range_radius: float
    lipschitz_of_u: float
    flags: list
    params: dict = field(default_factory=dict)
    energy_of_data: float = math.nan
    retractions: int = 0
    retractions_rejected: int = 0

    @property
    def converged(self) -> bool:
        return "converged" in self.flags

    @property
    def final_energy(self) -> EnergyBreakdown:
        return self.energy_trace[-1]

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "energy_trace": [list(e) for e in self.energy_trace],
            "final_grad_norm": self.final_grad_norm,
            "final_residual_norm": self.final_residual_norm,
            "range_max_dist": self.range_max_dist,
            "range_radius": self.range_radius,
            "lipschitz_of_u": self.lipschitz_of_u,
            "flags": list(self.flags),
            "params": dict(self.params),
            "energy_of_data": self.energy_of_data,
            "retractions": self.retractions,
            "retractions_rejected": self.retractions_rejected,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SolveReport":
        d = dict(data)
        d["energy_trace"] = [EnergyBreakdown(*map(float, e)) for e in d["energy_trace"]]
        d["flags"] = list(d["flags"])
        return cls(**d)

    def trace_csv(self, offset=0) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if offset == 0:
            w.writerow(TRACE_HEADER)
        for k, e in enumerate(self.energy_trace):
            w.writerow([offset + k] + [repr(float(x)) for x in e])
        return buf.getvalue()


def dumps_reports(reports) -> str:
    return json.dumps([r.to_json() for r in reports], indent=1, allow_nan=True) + "\n"


def write_trace_csv(path, reports) -> None:
    """Concatenated energy traces of all stages under one header."""
    parts, offset = [], 0
    for r in reports:
        parts.append(r.trace_csv(offset))
        offset += len(r.energy_trace)
    if not parts:
        parts.append(",".join(TRACE_HEADER) + "\n")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("".join(parts))


# --- range bookkeeping --------------------------------------------------------


def data_ball(M: ManifoldModel, f, center=None):
    """Center p (Karcher mean of the data unless given) and R = max dist(p, f)."""
    f = np.asarray(f, dtype=float)
    p = barycenter(M, f) if center is None else np.asarray(center, dtype=float)
    R = float(np.max(M.dist(np.broadcast_to(p, f.shape), f)))
    return p, R


def check_range(M: ManifoldModel, R):
    """Raise if R reaches the convexity radius; return whether R < strong_radius."""
    if not R < convexity_radius(M):
        raise RangeViolation(
            f"data spread {R:.6g} reaches the convexity radius {convexity_radius(M):.6g}"
        )
    return R < strong_radius(M)


# --- search direction ---------------------------------------------------------


class _Preconditioner:
    """Symmetric positive definite model Hessians on nodes x frame components.

    ``irls``: P = 2 L_c + diag(lam w), the lagged-diffusivity operator with
    edge weights c_e = d(tv + dirichlet)/d(dist_e^2), applied per component.

    ``newton``: the Hessian of the energy with respect to the edge vectors
    y_e = log_{u_a} u_b / len_e, chained through y_e ~ (X_b - X_a) / len_e in
    isometric frames. Per term k this is w_k (2 phi' I + 4 phi'' y y^T) with
    phi(s) = sqrt(s + eps^2) + sigma s / 2; curvature terms are dropped, so it
    is exact on euclidean targets and a model Hessian elsewhere.
    """

    def __init__(self, model: EnergyModel, kind: str):
        grid = model.grid
        self.kind = kind
        self.model = model
        self.n = grid.n_nodes
        self.fd = model.M.frame_dim
        self.a = grid.edge_a
        self.b = grid.edge_b
        self.base = model.params.lam * grid.node_weight
        self.len = grid.edge_length
        te = grid.term_edges
        self.present = te >= 0
        self.te = np.where(self.present, te, 0)

    def _factor_solve(self, rows, cols, vals, size, diag, rhs):
        scale = max(float(np.max(np.abs(diag), initial=0.0)), float(np.max(np.abs(vals), initial=0.0)))
        tau = 1e-12 * max(scale, 1e-300)
        idx = np.arange(size)
        rows = np.concatenate([rows, idx])
        cols = np.concatenate([cols, idx])
        vals = np.concatenate([vals, diag + tau])
        P = sp.csc_matrix((vals, (rows, cols)), shape=(size, size))
        return spla.splu(P).solve(np.ascontiguousarray(rhs))

    def solve(self, u, g):
        """Return x with P x = -g (frame coordinates, shape (n, fd))."""
        if self.kind == "irls":
            return self._solve_irls(u, g)
        return self._solve_newton(u, g)

    def _solve_irls(self, u, g):
        n = self.n
        c2 = 2.0 * self.model.edge_coefficients(u)
        diag = self.base.copy()
        np.add.at(diag, self.a, c2)
        np.add.at(diag, self.b, c2)
        rows = np.concatenate([self.a, self.b])
        cols = np.concatenate([self.b, self.a])
        return self._factor_solve(rows, cols, np.concatenate([-c2, -c2]), n, diag, -g)

    def _solve_newton(self, u, g):
        M, p = self.model.M, self.model.params
        n, fd = self.n, self.fd
        d, lab, _ = edge_geometry(M, self.model.grid, u, want_logs=True)
        y = M.to_frame(u[self.a], lab) / self.len[:, None]  # (E, fd)
        q = (d / self.len) ** 2
        s = np.sum(np.where(self.present, q[self.te], 0.0), axis=1)
        root = np.sqrt(s + p.eps**2)
        w = self.model.term_w
        d1 = w * (0.5 / root + 0.5 * p.sigma)  # w phi'
        d2 = w * (-0.25 / root**3)  # w phi''
        # term blocks: edges (e, e') in the same term, endpoint signs +-1/len
        T, width = self.te.shape
        eye = np.eye(fd)
        rows, cols, vals = [], [], []
        comp = np.arange(fd)
        for i in range(width):
            for j in range(width):
                mask = self.present[:, i] & self.present[:, j]
                if not np.any(mask):
                    continue
                ei = self.te[mask, i]
                ej = self.te[mask, j]
                blk = 4.0 * d2[mask, None, None] * (y[ei][:, :, None] * y[ej][:, None, :])
                if i == j:
                    blk = blk + 2.0 * d1[mask, None, None] * eye
                blk = blk / (self.len[ei] * self.len[ej])[:, None, None]
                for ni, si in ((self.a[ei], -1.0), (self.b[ei], 1.0)):
                    for nj, sj in ((self.a[ej], -1.0), (self.b[ej], 1.0)):
                        r = ni[:, None, None] * fd + comp[None, :, None]
                        c = nj[:, None, None] * fd + comp[None, None, :]
                        rows.append(np.broadcast_to(r, blk.shape).ravel())
                        cols.append(np.broadcast_to(c, blk.shape).ravel())
                        vals.append((si * sj * blk).ravel())
        diag = np.repeat(self.base, fd)
        x = self._factor_solve(
            np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n * fd, diag,
            -g.reshape(-1),
        )
        return x.reshape(n, fd)


def _direction(model: EnergyModel, pre, u, grad):
    """Model-Hessian direction; falls back to the diagonally scaled gradient."""
    M = model.M
    if pre is not None:
        X = M.from_frame(u, pre.solve(u, M.to_frame(u, grad)))
        slope = float(np.sum(M.inner(u, grad, X)))
        if np.all(np.isfinite(X)) and slope < 0:
            return X, slope, False
    scale = 1.0 / np.maximum(model.node_w, 1e-300)
    X = -grad * scale[:, None]
    return X, float(np.sum(M.inner(u, grad, X))), pre is not None


def _max_node_norm(M, u, v):
    return float(np.max(M.norm(u, v))) if len(u) else 0.0


# --- main solver --------------------------------------------------------------


def minimize(
    M: ManifoldModel,
    grid: Grid,
    f,
    params: EnergyParams,
    cfg: SolveConfig = SolveConfig(),
    u0=None,
    center=None,
):
    """Minimize the regularized energy by preconditioned Riemannian descent.

    ``u0=None`` starts from the data. When ``params.delta > 0`` the data is
    first mollified at scale delta. Returns ``(u, SolveReport)``.
    """
    if not params.eps > 0:
        raise RequiresPositiveEps("minimize needs eps > 0; use a continuation schedule")
    f = np.asarray(f, dtype=float)
    p, R = data_ball(M, f, center)
    flags = []
    if not check_range(M, R):
        flags.append("outside_strong_radius")
    data = mollify(M, grid, f, params.delta) if params.delta > 0 else f
    model = EnergyModel(M, grid, data, params)
    u = data.copy() if u0 is None else np.asarray(u0, dtype=float).copy()
    model_f = model.evaluate(f) if params.delta == 0 else EnergyModel(M, grid, f, params).evaluate(f)

    pre = None if cfg.direction == "gradient" else _Preconditioner(model, cfg.direction)
    guard = 0.9 * M.inj
    anchor = data

    def range_of(v):
        return float(np.max(M.dist(np.broadcast_to(p, v.shape), v)))

    retractions = [0, 0]  # applied, rejected because the energy went up

    def retract(v, ev):
        """Pull nodes that left B(p, R) back with the radial reflection."""
        if not cfg.retract or range_of(v) <= R:
            return v
        w = retract_into_ball(M, p, R, v)
        if model.evaluate(w).total <= ev.total:
            retractions[0] += 1
            return w
        retractions[1] += 1
        return v

    e, grad = model.value_and_grad(u)
    trace = [e]
    range_max = range_of(u)
    gnorm = _max_node_norm(M, u, grad)
    it = 0
    status = None
    while True:
        if gnorm <= cfg.grad_tol:
            status = "converged"
            break
        if it >= cfg.max_iter:
            status = "max_iter"
            break
        X, slope, fell_back = _direction(model, pre, u, grad)
        if fell_back and "preconditioner_fallback" not in flags:
            flags.append("preconditioner_fallback")
        t = cfg.step_init
        accepted = None
        resolution = _ROUNDOFF * max(abs(e.total), 1.0)
        for _ in range(cfg.max_backtracks):
            with np.errstate(over="ignore", invalid="ignore"):
                trial = M.normalize(M.exp(u, t * X))
            if not np.all(np.isfinite(trial)):
                t *= cfg.step_shrink
                continue
            if math.isfinite(guard) and np.any(M.dist(trial, anchor) >= guard):
                if "cut_locus_guard_triggered" not in flags:
                    flags.append("cut_locus_guard_triggered")
                t *= cfg.step_shrink
                continue
            try:
                with np.errstate(divide="ignore", invalid="ignore"):
                    et = model.evaluate(trial)
            except DomainError:  # cut locus, or an overflowed step left the manifold
                et = None
            if et is None or not math.isfinite(et.total):
                t *= cfg.step_shrink
                continue
            if et.total <= e.total + cfg.armijo_c * t * slope and et.total < e.total:
                trial = retract(trial, et)
                accepted = (trial, *model.value_and_grad(trial))
                break
            if -t * slope <= resolution and et.total <= e.total + resolution:
                # predicted decrease is below the resolution of the energy:
                # accept a step that shrinks the gradient without a resolvable increase
                et2, g2 = model.value_and_grad(trial)
                if _max_node_norm(M, trial, g2) < gnorm:
                    accepted = (trial, et2, g2)
                    break
            t *= cfg.step_shrink
        if accepted is None:
            status = "stalled"
            break
        u, e, grad = accepted
        it += 1
        trace.append(e)
        range_max = max(range_max, range_of(u))
        gnorm = _max_node_norm(M, u, grad)

    if status == "max_iter" and cfg.on_max_iter == "raise":
        raise NoConvergence(
            f"no convergence after {cfg.max_iter} iterations (grad norm {gnorm:.3e})"
        )
    flags.insert(0, status)
    res = float(np.max(M.norm(u, grad) / grid.node_weight)) if len(u) else 0.0
    report = SolveReport(
        iterations=it,
        energy_trace=trace,
        final_grad_norm=gnorm,
        final_residual_norm=res,
        range_max_dist=range_max,
        range_radius=R,
        lipschitz_of_u=lipschitz_constant(M, grid, u),
        flags=[fl for fl in FLAGS if fl in flags],
        params={"lam": params.lam, "sigma": params.sigma, "eps": params.eps, "delta": params.delta},
        energy_of_data=model_f.total,
        retractions=retractions[0],
        retractions_rejected=retractions[1],
    )
    return u, report


# --- continuation -------------------------------------------------------------


def validate_schedule(schedule):
    sched = [tuple(float(x) for x in stage) for stage in schedule]
    if not sched:
        raise DomainError("empty schedule")
    for stage in sched:
        if len(stage) != 3:
            raise DomainError("schedule stages are (eps, sigma, delta) triples")
        eps, sigma, delta = stage
        if not eps > 0:
            raise RequiresPositiveEps("every stage needs eps > 0")
        if sigma < 0 or delta < 0:
            raise DomainError("sigma and delta must be nonnegative")
    for prev, nxt in zip(sched, sched[1:]):
        if any(b > a for a, b in zip(prev, nxt)):
            raise DomainError("schedule must be nonincreasing in every component")
    return sched


def default_schedule(grid: Grid, n_stages=6, eps_max=1e-1, eps_min=1e-4, sigma=None):
    """Geometric eps from eps_max down to eps_min.

    ``sigma=None`` ties sigma_k to eps_k (both vanish: the unperturbed energy);
    a number keeps sigma fixed (the perturbed energy). delta is two grid
    spacings in the first stage and 0 afterwards.
    """
    if n_stages < 1:
        raise DomainError("need at least one stage")
    eps = [eps_min] if n_stages == 1 else list(np.geomspace(eps_max, eps_min, n_stages))
    return [
        (float(e), float(e) if sigma is None else float(sigma), 2.0 * grid.spacing if k == 0 else 0.0)
        for k, e in enumerate(eps)
    ]


def geometric_schedule(eps0=1e-1, factor=0.25, n_stages=5, sigma_tied=False):
    return [
        (eps0 * factor**k, eps0 * factor**k if sigma_tied else 0.0, 0.0) for k in range(n_stages)
    ]


def continuation(M: ManifoldModel, grid: Grid, f, lam, schedule, cfg: SolveConfig = SolveConfig(), center=None):
    """Warm-started sequence of solves over (eps_k, sigma_k, delta_k).

    Returns the final field and one :class:`SolveReport` per stage.
    """
    sched = validate_schedule(schedule)
    f = np.asarray(f, dtype=float)
    if center is None:
        center, _ = data_ball(M, f)
    u = None
    reports = []
    for eps, sigma, delta in sched:
        params = EnergyParams(lam=lam, sigma=sigma, eps=eps, delta=delta)
        u, rep = minimize(M, grid, f, params, cfg, u0=u, center=center)
        reports.append(rep)
    return u, reports


def stagewise_lipschitz_bounded(reports, factor=1.05, floor=1e-12):
    """Whether every stage's Lipschitz constant is within ``factor`` of stage 0."""
    if not reports:
        return True
    L0 = reports[0].lipschitz_of_u
    return all(r.lipschitz_of_u <= factor * L0 + floor for r in reports)
