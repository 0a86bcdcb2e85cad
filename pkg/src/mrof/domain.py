"""Discrete domains: intervals, circles and conformally flat rectangles.

Discretization conventions (shared by the energy, the solvers and the oracle):

* Every node owns the *forward* edges leaving it (``i -> i+1`` in 1-D, the
  +x and +y edges on a rectangle). Nodes on the far boundary simply have no
  forward edge in that direction; this zero-flux stencil is the discrete
  Neumann condition.
* ``node_weight`` is the trapezoidal area weight used for the fidelity term
  and for turning gradients into residuals.
* The gradient-dependent terms (total variation and Dirichlet) are summed
  over *gradient terms*, each with a quadrature weight and one or two edges.
  In 1-D there is one term per edge weighted by the edge length (midpoint
  rule), so at eps = 0 the total variation is exactly the sum of edge
  distances. On a rectangle there is one term per node weighted by the
  trapezoidal area rho^2 h^2.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridMismatch, ParseError
from .manifold import ManifoldModel, parse_manifold

RHO_PRESETS = ("flat", "sphere_patch")


@dataclass(frozen=True, eq=False)
class Grid:
    kind: str
    shape: tuple
    rho_preset: str = "flat"

    def __post_init__(self):
        if self.kind == "interval":
            (n,) = self.shape
            if n < 2:
                raise ParseError("interval needs n >= 2")
        elif self.kind == "circle":
            (n,) = self.shape
            if n < 3:
                raise ParseError("circle needs n >= 3")
        elif self.kind == "rect2d":
            nx, ny = self.shape
            if nx < 2 or ny < 2:
                raise ParseError("rect2d needs nx, ny >= 2")
        else:
            raise ParseError(f"unknown grid kind {self.kind!r}")
        if self.rho_preset not in RHO_PRESETS:
            raise ParseError(f"unknown rho preset {self.rho_preset!r}")
        if self.kind != "rect2d" and self.rho_preset != "flat":
            raise ParseError("rho presets apply to rect2d only")

    # --- basic layout ---------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> float:
        if self.kind == "interval":
            return 1.0 / (self.shape[0] - 1)
        if self.kind == "circle":
            return 2.0 * math.pi / self.shape[0]
        return 1.0 / (self.shape[0] - 1)

    @property
    def spec(self) -> str:
        if self.kind == "rect2d":
            s = f"rect2d:{self.shape[0]}x{self.shape[1]}"
            return s if self.rho_preset == "flat" else f"{s}:rho={self.rho_preset}"
        return f"{self.kind}:{self.shape[0]}"

    @property
    def is_1d(self) -> bool:
        return self.kind != "rect2d"

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape (n_nodes, 1) or (n_nodes, 2); rect2d is row-major in y."""
        h = self.spacing
        if self.kind == "rect2d":
            nx, ny = self.shape
            jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
            return np.column_stack([ii.ravel() * h, jj.ravel() * h])
        return (np.arange(self.shape[0]) * h)[:, None]

    @cached_property
    def rho(self) -> np.ndarray:
        if self.rho_preset == "sphere_patch":
            r2 = np.sum(self.coords**2, axis=1)
            return 2.0 / (1.0 + r2)
        return np.ones(self.n_nodes)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        if self.kind == "interval":
            mask[[0, -1]] = True
        elif self.kind == "rect2d":
            nx, ny = self.shape
            m = mask.reshape(ny, nx)
            m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return mask

    def index(self, i, j=0):
        """Flat node index of (i, j); row-major with x fastest."""
        return j * self.shape[0] + i if self.kind == "rect2d" else i

    # --- edges and quadrature -------------------------------------------
    @cached_property
    def _edges(self):
        if self.kind == "interval":
            n = self.shape[0]
            a = np.arange(n - 1)
            b = a + 1
        elif self.kind == "circle":
            n = self.shape[0]
            a = np.arange(n)
            b = (a + 1) % n
        else:
            nx, ny = self.shape
            ids = np.arange(self.n_nodes).reshape(ny, nx)
            ax, bx = ids[:, :-1].ravel(), ids[:, 1:].ravel()
            ay, by = ids[:-1, :].ravel(), ids[1:, :].ravel()
            a = np.concatenate([ax, ay])
            b = np.concatenate([bx, by])
        return a.astype(np.int64), b.astype(np.int64)

    @property
    def edge_a(self) -> np.ndarray:
        return self._edges[0]

    @property
    def edge_b(self) -> np.ndarray:
        return self._edges[1]

    @property
    def n_edges(self) -> int:
        return len(self.edge_a)

    @cached_property
    def edge_length(self) -> np.ndarray:
        """Domain length of each edge, trapezoidal rho average on rect2d."""
        rho = self.rho
        return 0.5 * (rho[self.edge_a] + rho[self.edge_b]) * self.spacing

    @cached_property
    def node_weight(self) -> np.ndarray:
        h = self.spacing
        if self.kind == "interval":
            w = np.full(self.n_nodes, h)
            w[[0, -1]] *= 0.5
            return w
        if self.kind == "circle":
            return np.full(self.n_nodes, h)
        nx, ny = self.shape
        fx = np.ones(nx)
        fx[[0, -1]] = 0.5
        fy = np.ones(ny)
        fy[[0, -1]] = 0.5
        return (np.outer(fy, fx).ravel()) * self.rho**2 * h * h

    @cached_property
    def _terms(self):
        if self.is_1d:
            edges = np.arange(self.n_edges)[:, None]
            return self.edge_length.copy(), np.ascontiguousarray(edges, dtype=np.int64)
        nx, ny = self.shape
        n_x_edges = (nx - 1) * ny
        terms = np.full((self.n_nodes, 2), -1, dtype=np.int64)
        for j in range(ny):
            for i in range(nx):
                k = self.index(i, j)
                if i < nx - 1:
                    terms[k, 0] = j * (nx - 1) + i
                if j < ny - 1:
                    terms[k, 1] = n_x_edges + j * nx + i
        return self.node_weight.copy(), terms

    @property
    def term_weight(self) -> np.ndarray:
        return self._terms[0]

    @property
    def term_edges(self) -> np.ndarray:
        """(n_terms, k) edge indices per gradient term, -1 marks an absent edge."""
        return self._terms[1]

    @property
    def total_area(self) -> float:
        """Sum of gradient-term weights (the area seen by the eps term)."""
        return float(np.sum(self.term_weight))

    def __eq__(self, other):
        return isinstance(other, Grid) and self.spec == other.spec

    def __hash__(self):
        return hash(self.spec)

    def __repr__(self):
        return f"Grid({self.spec!r})"


def make_grid(spec: str) -> Grid:
    """Parse ``"interval:5"``, ``"circle:8"`` or ``"rect2d:4x4[:rho=sphere_patch]"``."""
    parts = [s.strip() for s in str(spec).strip().split(":")]
    kind = parts[0].lower()
    if len(parts) < 2:
        raise ParseError(f"bad grid spec {spec!r}")
    try:
        if kind in ("interval", "circle"):
            if len(parts) != 2:
                raise ParseError(f"bad grid spec {spec!r}")
            return Grid(kind, (int(parts[1]),))
        if kind == "rect2d":
            nx, ny = (int(t) for t in parts[1].lower().split("x"))
            preset = "flat"
            for opt in parts[2:]:
                key, sep, val = opt.partition("=")
                if key != "rho" or not sep:
                    raise ParseError(f"bad grid option {opt!r}")
                preset = val
            return Grid(kind, (nx, ny), preset)
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"bad grid spec {spec!r}") from None
    raise ParseError(f"unknown grid kind in {spec!r}")


def edges(grid: Grid):
    """List of ``(node_a, node_b, length, weight)`` for every forward edge.

    ``weight`` is the total quadrature weight of the gradient terms that read
    the edge.
    """
    share = np.zeros(grid.n_edges)
    for w, row in zip(grid.term_weight, grid.term_edges):
        for e in row:
            if e >= 0:
                share[e] += w
    return [
        (int(a), int(b), float(length), float(s))
        for a, b, length, s in zip(grid.edge_a, grid.edge_b, grid.edge_length, share)
    ]


def lipschitz_constant(M: ManifoldModel, grid: Grid, u) -> float:
    """max over edges of dist(u_a, u_b) / domain edge length."""
    u = np.asarray(u, dtype=float)
    d = M.dist(u[grid.edge_a], u[grid.edge_b])
    return float(np.max(d / grid.edge_length))


def domain_distance(grid: Grid, i, j):
    """Approximate domain distance between nodes (rho-weighted chord on rect2d)."""
    x = grid.coords
    if grid.kind == "circle":
        diff = np.abs(x[i, 0] - x[j, 0])
        return np.minimum(diff, 2.0 * math.pi - diff)
    chord = np.linalg.norm(x[i] - x[j], axis=-1)
    return 0.5 * (grid.rho[i] + grid.rho[j]) * chord


# --- fields and file formats ------------------------------------------------


@dataclass(eq=False)
class Field:
    manifold: ManifoldModel
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes, self.manifold.ambient_dim):
            raise GridMismatch(
                f"values shape {self.values.shape} does not match "
                f"{self.grid.spec} x {self.manifold.spec}"
            )
        self.manifold.check_point(self.values)

    def to_json(self) -> dict:
        return {
            "manifold": self.manifold.spec,
            "grid": self.grid.spec,
            "values": self.values.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Field":
        try:
            M = parse_manifold(data["manifold"])
            grid = make_grid(data["grid"])
            values = np.asarray(data["values"], dtype=float)
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed field document: {exc}") from None
        return cls(M, grid, values)


def write_field(path, fld: Field) -> None:
    with open(path, "w") as fh:
        json.dump(fld.to_json(), fh)
        fh.write("\n")


def read_field(path) -> Field:
    with open(path) as fh:
        return Field.from_json(json.load(fh))


def write_node_csv(path, grid: Grid, values, extra=None) -> None:
    """Per-node diagnostics with header ``node,x1,x2,value...``."""
    values = np.asarray(values, dtype=float)
    extra = extra or {}
    coords = grid.coords
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["node", "x1", "x2"] + [f"value{k}" for k in range(values.shape[1])]
        header += list(extra)
        w.writerow(header)
        for k in range(grid.n_nodes):
            x2 = coords[k, 1] if coords.shape[1] > 1 else 0.0
            row = [k, repr(float(coords[k, 0])), repr(float(x2))]
            row += [repr(float(x)) for x in values[k]]
            row += [repr(float(col[k])) for col in extra.values()]
            w.writerow(row)
