"""Discrete fields on the cube (-1, 1)^3.

Displacements live on the ``(N+1)^3`` vertices, strains and phase signs on the
``N^3`` cells.  The cell strain uses the gradient of the trilinear interpolant
at the cell centre: each ``d_j u_i`` is the mean of the four edge differences
along axis ``j`` divided by ``h``.  This is exact on fields that are affine in
each coordinate separately (e.g. ``x1 x2``), which covers the relaxed solution
and the smooth parts of every construction.

Snapshot file layout (``.twf``)::

    line 1   : JSON header, UTF-8, terminated by b"\\n"
               {"format": "twinlab-field", "version": 1, "N": N,
                "has_signs": bool, "meta": {...}}
    payload  : (N+1)^3 * 3 float64 little-endian, row-major over (i, j, k)
               with the component index innermost
    optional : N^3 int8 (+1/-1), row-major over cell (a, b, c)
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .energy import INF, EnergyDensityModel, SymTensor3, density_array

STRAIN_KEYS = ("e11", "e22", "e33", "e12", "e13", "e23")


@dataclass(frozen=True)
class GridSpec:
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N!r}")

    @property
    def h(self) -> float:
        return 2.0 / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.N + 1)

    @property
    def centers(self) -> np.ndarray:
        return -1.0 + (np.arange(self.N) + 0.5) * self.h

    @property
    def n_vertices(self) -> int:
        return (self.N + 1) ** 3

    @property
    def n_cells(self) -> int:
        return self.N**3

    def vertex_mesh(self):
        x = self.nodes
        return np.meshgrid(x, x, x, indexing="ij")

    def center_mesh(self):
        c = self.centers
        return np.meshgrid(c, c, c, indexing="ij")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Nodal displacement, ``values[m, i, j, k]`` is ``u_{m+1}`` at vertex (i, j, k)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        n = self.grid.N + 1
        v = np.asarray(self.values, dtype=float)
        if v.shape != (3, n, n, n):
            raise ValueError(f"expected shape {(3, n, n, n)}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("displacement values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "DisplacementField":
        n = grid.N + 1
        return cls(grid, np.zeros((3, n, n, n)))

    @classmethod
    def from_function(cls, grid: GridSpec, func: Callable) -> "DisplacementField":
        """Sample ``func(x1, x2, x3) -> (u1, u2, u3)`` (array-valued) at the vertices."""
        X1, X2, X3 = grid.vertex_mesh()
        comps = func(X1, X2, X3)
        values = np.stack([np.broadcast_to(np.asarray(c, dtype=float), X1.shape) for c in comps])
        return cls(grid, values)

    @classmethod
    def from_flat(cls, grid: GridSpec, flat: np.ndarray) -> "DisplacementField":
        n = grid.N + 1
        return cls(grid, np.asarray(flat, dtype=float).reshape(3, n, n, n))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __add__(self, other: "DisplacementField") -> "DisplacementField":
        return DisplacementField(self.grid, self.values + other.values)

    def __mul__(self, a: float) -> "DisplacementField":
        return DisplacementField(self.grid, a * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SignField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        N = self.grid.N
        v = np.asarray(self.values)
        if v.shape != (N, N, N):
            raise ValueError(f"expected shape {(N, N, N)}, got {v.shape}")
        if not np.all((v == 1) | (v == -1)):
            raise ValueError("sign values must be exactly +1 or -1")
        object.__setattr__(self, "values", _frozen(v.astype(np.int8)))

    @classmethod
    def constant(cls, grid: GridSpec, sign: int = 1) -> "SignField":
        return cls(grid, np.full((grid.N,) * 3, sign, dtype=np.int8))

    @classmethod
    def from_function(cls, grid: GridSpec, func: Callable) -> "SignField":
        """Sample ``func(x1, x2, x3) -> +-1`` at the cell centres."""
        C1, C2, C3 = grid.center_mesh()
        return cls(grid, np.where(np.asarray(func(C1, C2, C3)) < 0, -1, 1))

    @classmethod
    def from_strain(cls, u: DisplacementField) -> "SignField":
        """Sign of ``e23`` per cell, ties to +1."""
        e23 = cell_strains(u)["e23"]
        return cls(u.grid, np.where(e23 < 0.0, -1, 1))

    def flipped(self) -> "SignField":
        return SignField(self.grid, -self.values)


class BCKind(enum.Enum):
    TOP_BOTTOM = "top-bottom"
    LEFT_RIGHT = "left-right"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class BoundaryCondition:
    kind: BCKind
    alpha: float = 1.0
    gamma: float = 0.0
    ansatz_constrained: bool = False

    def __post_init__(self):
        if self.kind is BCKind.LEFT_RIGHT and not -1.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [-1, 1], got {self.alpha}")
        if self.kind is BCKind.TOP_BOTTOM and self.alpha != 1.0:
            raise ValueError("top-bottom data correspond to alpha = 1")

    @classmethod
    def top_bottom(cls, ansatz_constrained: bool = False) -> "BoundaryCondition":
        return cls(BCKind.TOP_BOTTOM, 1.0, 0.0, ansatz_constrained)

    @classmethod
    def left_right(cls, alpha: float, ansatz_constrained: bool = False) -> "BoundaryCondition":
        return cls(BCKind.LEFT_RIGHT, float(alpha), 0.0, ansatz_constrained)

    @classmethod
    def neumann(cls, gamma: float, ansatz_constrained: bool = False) -> "BoundaryCondition":
        return cls(BCKind.NEUMANN, 0.0, float(gamma), ansatz_constrained)

    @property
    def is_dirichlet(self) -> bool:
        return self.kind is not BCKind.NEUMANN

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "ansatz_constrained": self.ansatz_constrained,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoundaryCondition":
        return cls(
            BCKind(d["kind"]),
            float(d.get("alpha", 1.0)),
            float(d.get("gamma", 0.0)),
            bool(d.get("ansatz_constrained", False)),
        )


@dataclass(frozen=True)
class EnergyBreakdown:
    elastic: float
    surface: float
    load: float
    total: float
    eps: float
    constraint_violation: float = 0.0

    @classmethod
    def compose(cls, elastic, surface, load, eps, constraint_violation=0.0) -> "EnergyBreakdown":
        return cls(
            float(elastic),
            float(surface),
            float(load),
            float(elastic + eps * surface + load),
            float(eps),
            float(constraint_violation),
        )

    def to_dict(self) -> dict:
        return {
            "elastic": self.elastic,
            "surface": self.surface,
            "load": self.load,
            "total": self.total,
            "eps": self.eps,
            "constraint_violation": self.constraint_violation,
        }


# -- finite differences ------------------------------------------------------


def _cell_gradient(v: np.ndarray, h: float):
    """Cell-centred (d1 v, d2 v, d3 v) of a vertex array ``v``."""

    def avg_faces(a, axes):
        p, q = axes
        sl = [slice(None)] * 3
        out = 0.0
        for dp in (0, 1):
            for dq in (0, 1):
                sl[p] = slice(dp, a.shape[p] - 1 + dp)
                sl[q] = slice(dq, a.shape[q] - 1 + dq)
                out = out + a[tuple(sl)]
        return 0.25 * out

    d1 = avg_faces(v[1:, :, :] - v[:-1, :, :], (1, 2)) / h
    d2 = avg_faces(v[:, 1:, :] - v[:, :-1, :], (0, 2)) / h
    d3 = avg_faces(v[:, :, 1:] - v[:, :, :-1], (0, 1)) / h
    return d1, d2, d3


def cell_gradients(u: DisplacementField) -> np.ndarray:
    """``G[m, j]`` = cell array of ``d_{j+1} u_{m+1}``; shape (3, 3, N, N, N)."""
    h = u.grid.h
    return np.stack([np.stack(_cell_gradient(u.values[m], h)) for m in range(3)])


def cell_strains(u: DisplacementField) -> dict:
    G = cell_gradients(u)
    return {
        "e11": G[0, 0],
        "e22": G[1, 1],
        "e33": G[2, 2],
        "e12": 0.5 * (G[0, 1] + G[1, 0]),
        "e13": 0.5 * (G[0, 2] + G[2, 0]),
        "e23": 0.5 * (G[1, 2] + G[2, 1]),
    }


def strain(u: DisplacementField, cell) -> SymTensor3:
    a, b, c = cell
    N = u.grid.N
    if not all(0 <= t < N for t in (a, b, c)):
        raise IndexError(f"cell {cell} outside grid with N={N}")
    sub = u.values[:, a : a + 2, b : b + 2, c : c + 2]
    h = u.grid.h
    G = np.array([[g[0, 0, 0] for g in _cell_gradient(sub[m], h)] for m in range(3)])
    return SymTensor3(
        G[0, 0],
        G[1, 1],
        G[2, 2],
        0.5 * (G[0, 1] + G[1, 0]),
        0.5 * (G[0, 2] + G[2, 0]),
        0.5 * (G[1, 2] + G[2, 1]),
    )


def gradient_operators(grid: GridSpec):
    """Sparse ``D_j`` (N^3 x (N+1)^3) with ``D_j @ v.ravel() == d_j v`` on cells."""
    N, h = grid.N, grid.h
    n = N + 1
    a, b, c = np.meshgrid(np.arange(N), np.arange(N), np.arange(N), indexing="ij")
    rows = (a * N * N + b * N + c).ravel()
    base = np.stack([a.ravel(), b.ravel(), c.ravel()])
    ops = []
    for j in range(3):
        others = [t for t in range(3) if t != j]
        r_list, c_list, v_list = [], [], []
        for dp in (0, 1):
            for dq in (0, 1):
                lo = base.copy()
                lo[others[0]] += dp
                lo[others[1]] += dq
                hi = lo.copy()
                hi[j] += 1
                for idx, sgn in ((hi, 1.0), (lo, -1.0)):
                    r_list.append(rows)
                    c_list.append(idx[0] * n * n + idx[1] * n + idx[2])
                    v_list.append(np.full(rows.size, sgn / (4.0 * h)))
        ops.append(
            sp.csr_matrix(
                (np.concatenate(v_list), (np.concatenate(r_list), np.concatenate(c_list))),
                shape=(N**3, n**3),
            )
        )
    return ops


def strain_operators(grid: GridSpec) -> dict:
    """Sparse maps from the flat field (component-major) to each cell strain."""
    D = gradient_operators(grid)
    Z = sp.csr_matrix(D[0].shape)

    def row(*blocks):
        return sp.hstack(blocks, format="csr")

    return {
        "e11": row(D[0], Z, Z),
        "e22": row(Z, D[1], Z),
        "e33": row(Z, Z, D[2]),
        "e12": row(0.5 * D[1], 0.5 * D[0], Z),
        "e13": row(0.5 * D[2], Z, 0.5 * D[0]),
        "e23": row(Z, 0.5 * D[2], 0.5 * D[1]),
    }


# -- energies ------------------------------------------------------------------


def elastic_energy(
    u: DisplacementField,
    s: SignField | None = None,
    model: EnergyDensityModel = EnergyDensityModel.TWO_WELL,
) -> float:
    """Cell sum of the density times ``h^3``.

    Under ``TWO_WELL`` a given sign field selects the well per cell; without
    one the nearer well is used.
    """
    signs = None if s is None else s.values
    dens = density_array(cell_strains(u), model, signs)
    if not np.all(np.isfinite(dens)):
        return INF
    return float(np.sum(dens) * u.grid.h**3)


def surface_energy(s: SignField) -> float:
    """Anisotropic discrete total variation: sum of |jump| * face area."""
    v = s.values.astype(float)
    h = s.grid.h
    jumps = sum(np.sum(np.abs(np.diff(v, axis=ax))) for ax in range(3))
    return float(jumps * h * h)


def trapezoid_weights(grid: GridSpec) -> np.ndarray:
    w = np.full(grid.N + 1, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return w


def m_prime(u: DisplacementField) -> float:
    """Load functional: integral of x2 (u1(x3=1) - u1(x3=-1)), trapezoidal rule."""
    g = u.grid
    w = trapezoid_weights(g)
    jump = u.values[0, :, :, -1] - u.values[0, :, :, 0]
    return float(np.einsum("i,j,j,ij->", w, w, g.nodes, jump))


def m_prime_of(func: Callable, order: int = 8) -> float:
    """Load functional of an analytic field by tensor Gauss-Legendre quadrature.

    Exact for polynomial traces of degree < ``2*order`` per variable.
    """
    t, w = np.polynomial.legendre.leggauss(order)
    X1, X2 = np.meshgrid(t, t, indexing="ij")
    W = np.outer(w, w)
    top = np.asarray(func(X1, X2, np.ones_like(X1))[0], dtype=float)
    bot = np.asarray(func(X1, X2, -np.ones_like(X1))[0], dtype=float)
    return float(np.sum(W * X2 * (top - bot)))


# -- boundary conditions -------------------------------------------------------


def dirichlet_mask(grid: GridSpec, bc: BoundaryCondition) -> np.ndarray:
    """Boolean mask of pinned degrees of freedom, shape (3, N+1, N+1, N+1)."""
    n = grid.N + 1
    mask = np.zeros((3, n, n, n), dtype=bool)
    if bc.kind is BCKind.TOP_BOTTOM:
        mask[1:3, [0, -1], :, :] = True
    elif bc.kind is BCKind.LEFT_RIGHT:
        mask[2, :, :, [0, -1]] = True
    return mask


def dirichlet_values(grid: GridSpec, bc: BoundaryCondition) -> np.ndarray:
    """Prescribed values on the pinned dofs (zeros elsewhere)."""
    X1, X2, X3 = grid.vertex_mesh()
    vals = np.zeros((3,) + X1.shape)
    if bc.kind is BCKind.TOP_BOTTOM:
        vals[1] = X1 * X3
        vals[2] = X1 * X2
    elif bc.kind is BCKind.LEFT_RIGHT:
        vals[2] = bc.alpha * X1 * X2
    return np.where(dirichlet_mask(grid, bc), vals, 0.0)


def apply_bc(u: DisplacementField, bc: BoundaryCondition) -> DisplacementField:
    """Overwrite the Dirichlet rows of ``u`` with the prescribed boundary data."""
    if not bc.is_dirichlet:
        return u
    mask = dirichlet_mask(u.grid, bc)
    return DisplacementField(u.grid, np.where(mask, dirichlet_values(u.grid, bc), u.values))


def bc_residual(u: DisplacementField, bc: BoundaryCondition) -> float:
    """Max deviation of ``u`` from the Dirichlet data (0 for Neumann)."""
    if not bc.is_dirichlet:
        return 0.0
    mask = dirichlet_mask(u.grid, bc)
    return float(np.max(np.abs(u.values - dirichlet_values(u.grid, bc))[mask]))


def total_energy(
    u: DisplacementField,
    s: SignField | None,
    eps: float,
    bc: BoundaryCondition,
    model: EnergyDensityModel = EnergyDensityModel.TWO_WELL,
) -> EnergyBreakdown:
    if not eps > 0:
        raise ValueError("eps must be positive")
    if s is None:
        s = SignField.from_strain(u)
    el = elastic_energy(u, s, model)
    sur = surface_energy(s)
    load = -bc.gamma * m_prime(u) if bc.kind is BCKind.NEUMANN else 0.0
    e23 = cell_strains(u)["e23"]
    viol = float(np.sum((e23 - s.values) ** 2) * u.grid.h**3)
    return EnergyBreakdown.compose(el, sur, load, eps, viol)


# -- snapshots -----------------------------------------------------------------

SNAPSHOT_FORMAT = "twinlab-field"


def write_snapshot(path, u: DisplacementField, s: SignField | None = None, meta: dict | None = None):
    header = {
        "format": SNAPSHOT_FORMAT,
        "version": 1,
        "N": u.grid.N,
        "has_signs": s is not None,
        "meta": meta or {},
    }
    payload = np.ascontiguousarray(np.moveaxis(u.values, 0, -1), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(payload.tobytes())
        if s is not None:
            fh.write(np.ascontiguousarray(s.values, dtype=np.int8).tobytes())


def read_snapshot(path):
    """Return ``(u, s_or_None, meta)`` from a snapshot file."""
    data = Path(path).read_bytes()
    nl = data.index(b"\n")
    header = json.loads(data[:nl].decode("utf-8"))
    if header.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"{path}: not a {SNAPSHOT_FORMAT} file")
    grid = GridSpec(int(header["N"]))
    n = grid.N + 1
    nbytes = 8 * 3 * n**3
    body = data[nl + 1 :]
    if len(body) < nbytes:
        raise ValueError(f"{path}: truncated payload")
    vals = np.frombuffer(body[:nbytes], dtype="<f8").reshape(n, n, n, 3)
    u = DisplacementField(grid, np.moveaxis(vals, -1, 0))
    s = None
    if header.get("has_signs"):
        sv = np.frombuffer(body[nbytes : nbytes + grid.N**3], dtype=np.int8)
        s = SignField(grid, sv.reshape((grid.N,) * 3))
    return u, s, header.get("meta", {})
