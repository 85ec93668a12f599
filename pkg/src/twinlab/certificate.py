"""Slice duality lower bounds for top/bottom admissible fields.

For a test function ``eta(x2, x3)`` vanishing on the boundary of the square
and a plane ``x1 = x1*``, every field with the top/bottom boundary data obeys

    E_el[u] >= int (d2 u3 - d3 u2)(x1*, .) eta - 1/2 (x1* + 1) int |D eta|^2.

The discrete version here is built so that the inequality holds *exactly* on
the grid, not just up to O(h):

* ``x1*`` is snapped to a vertex plane ``a*``; the slab ``(-1, x1*)`` is then a
  union of whole cell layers;
* ``eta`` lives on the vertices of the (x2, x3) square and is differentiated
  with the same averaged differences as the 3-D strain, so on every cell of
  the slab ``2 a^2 >= 2 a b - b^2 / 2`` is applied to cell values;
* the ``u1`` terms cancel exactly (the midpoint rule integrates the Jacobian
  of two bilinear functions exactly) and the ``x1`` sums telescope to the two
  planes ``a*`` and ``0``.

What survives is the linear term evaluated in its integrated-by-parts form
``int (u2 d3 eta - u3 d2 eta)(x1*) - (same at x1 = -1)``; the second part is
zero for admissible data.  Hence ``dual_bound <= elastic_energy`` up to
rounding for every field, and the reported ``tol`` is only a reporting margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import BoundaryCondition, DisplacementField, GridSpec, bc_residual

# reporting margin per unit h; the discrete inequality itself is exact
C_TOL = 1.0
BC_TOL = 1e-9


def _avg4(a: np.ndarray) -> np.ndarray:
    return 0.25 * (a[:-1, :-1] + a[1:, :-1] + a[:-1, 1:] + a[1:, 1:])


def _grad2d(v: np.ndarray, h: float):
    """Cell-centre (d2, d3) of a vertex array over the (x2, x3) square."""
    d2 = 0.5 * ((v[1:, :-1] - v[:-1, :-1]) + (v[1:, 1:] - v[:-1, 1:])) / h
    d3 = 0.5 * ((v[:-1, 1:] - v[:-1, :-1]) + (v[1:, 1:] - v[1:, :-1])) / h
    return d2, d3


@dataclass(frozen=True, eq=False)
class TestFunction2D:
    grid: GridSpec
    values: np.ndarray

    __test__ = False  # not a pytest class

    def __post_init__(self):
        n = self.grid.N + 1
        v = np.asarray(self.values, dtype=float)
        if v.shape != (n, n):
            raise ValueError(f"expected shape {(n, n)}, got {v.shape}")
        edge = np.concatenate([v[0, :], v[-1, :], v[:, 0], v[:, -1]])
        if np.any(edge != 0.0):
            raise ValueError("test function must vanish on the boundary of the square")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def gradient(self):
        return _grad2d(self.values, self.grid.h)

    def dirichlet_norm2(self) -> float:
        d2, d3 = self.gradient
        return float(np.sum(d2**2 + d3**2) * self.grid.h**2)

    def scaled(self, lam: float) -> "TestFunction2D":
        return TestFunction2D(self.grid, lam * self.values)


@dataclass(frozen=True)
class SliceData:
    x1_star: float
    plane: int
    phi: np.ndarray  # per x3-cell
    beta: np.ndarray  # at x3 vertices, zero mean
    eta0: np.ndarray  # at x3 vertices, zero at both ends
    c_star: float
    c_theta: float
    scale: float


@dataclass(frozen=True)
class DualBound:
    value: float
    linear: float
    quadratic: float
    x1_star: float
    plane: int
    tol: float


@dataclass(frozen=True)
class SliceCertificate:
    x1_star: float
    bound: float
    lam: float
    tol: float
    plane: int
    planes_scanned: int

    def to_dict(self) -> dict:
        return {
            "x1_star": self.x1_star,
            "bound": self.bound,
            "lambda": self.lam,
            "tol": self.tol,
            "plane": self.plane,
            "planes_scanned": self.planes_scanned,
        }


def snap_plane(grid: GridSpec, x1_star: float) -> int:
    if not -1.0 < x1_star < 1.0:
        raise ValueError("x1_star must lie in (-1, 1)")
    a = int(round((x1_star + 1.0) / grid.h))
    return min(max(a, 1), grid.N - 1)


def check_top_bottom(u: DisplacementField):
    res = bc_residual(u, BoundaryCondition.top_bottom())
    if res > BC_TOL:
        raise ValueError(f"field violates the top/bottom boundary data (max deviation {res:.3g})")


def dual_bound(u: DisplacementField, eta: TestFunction2D, x1_star: float, check_bc: bool = True) -> DualBound:
    """Discrete slice bound ``linear - quadratic`` for the plane nearest ``x1_star``."""
    if eta.grid != u.grid:
        raise ValueError("test function and field live on different grids")
    if check_bc:
        check_top_bottom(u)
    g = u.grid
    h = g.h
    a = snap_plane(g, x1_star)
    x1 = -1.0 + a * h
    d2, d3 = eta.gradient
    u2 = u.values[1, a] - u.values[1, 0]
    u3 = u.values[2, a] - u.values[2, 0]
    linear = float(np.sum(_avg4(u2) * d3 - _avg4(u3) * d2) * h * h)
    quadratic = 0.5 * (x1 + 1.0) * eta.dirichlet_norm2()
    scale = 1.0 + float(np.max(np.abs(eta.values))) + float(np.max(np.abs(np.concatenate([d2.ravel(), d3.ravel()]))))
    return DualBound(linear - quadratic, linear, quadratic, x1, a, C_TOL * h * scale)


def slice_curl_form(u: DisplacementField, eta: TestFunction2D, x1_star: float) -> float:
    """``int (d2 u3 - d3 u2) eta`` on the plane by cell-midpoint quadrature.

    Agrees with the linear part of :func:`dual_bound` up to O(h) for smooth
    fields; kept for comparison only.
    """
    g = u.grid
    a = snap_plane(g, x1_star)
    d2u3, _ = _grad2d(u.values[2, a], g.h)
    _, d3u2 = _grad2d(u.values[1, a], g.h)
    return float(np.sum((d2u3 - d3u2) * _avg4(eta.values)) * g.h**2)


def triangle_bump(x2):
    """Triangle on (-1/2, 1/2) with unit integral."""
    return np.maximum(0.0, 2.0 * (1.0 - 2.0 * np.abs(np.asarray(x2, dtype=float))))


def slice_phi(u: DisplacementField, plane: int) -> np.ndarray:
    """``d2 u3 - d3 u2`` on the plane, averaged over x2 (one value per x3-cell).

    For fields of the structural form ``u3 = x2 g(x1, x3)`` the x2-average of
    ``d2 u3`` is ``g`` itself, so the same formula covers both cases.
    """
    d2u3, _ = _grad2d(u.values[2, plane], u.grid.h)
    _, d3u2 = _grad2d(u.values[1, plane], u.grid.h)
    return np.mean(d2u3 - d3u2, axis=0)


def build_eta(u: DisplacementField, x1_star: float, theta: Callable | None = None):
    """Test function ``eta = g * theta(x2) * eta0(x3)`` from the field itself.

    ``beta`` is the zero-mean antiderivative of ``phi``, ``eta0`` the
    antiderivative of ``beta``; both are exact for the piecewise-constant
    ``phi``.  ``theta`` is renormalised to unit integral.  The scale is
    ``g = -1 / (2 C_theta)`` with ``C_theta = |theta|^2 + 8 |theta'|^2``:
    since ``int phi eta0 = -|beta|^2`` the negative sign makes the linear
    term positive.
    """
    theta = theta or triangle_bump
    g = u.grid
    h, N = g.h, g.N
    a = snap_plane(g, x1_star)
    phi = slice_phi(u, a)
    raw = np.concatenate([[0.0], np.cumsum(phi) * h])
    mean = float(np.sum(0.5 * (raw[:-1] + raw[1:])) * h) / 2.0
    beta = raw - mean
    eta0 = np.concatenate([[0.0], np.cumsum(0.5 * (beta[:-1] + beta[1:])) * h])
    eta0[-1] = 0.0  # equals the integral of beta, zero up to rounding

    th = np.asarray(theta(g.nodes), dtype=float)
    if np.any(th < 0):
        raise ValueError("theta must be nonnegative")
    if th[0] != 0.0 or th[-1] != 0.0:
        raise ValueError("theta must vanish at x2 = +-1")
    mass = float(np.sum(0.5 * (th[:-1] + th[1:])) * h)
    if not mass > 0:
        raise ValueError("theta must have positive integral")
    th = th / mass
    l2 = float(np.sum(th[:-1] ** 2 + th[:-1] * th[1:] + th[1:] ** 2) * h / 3.0)
    dl2 = float(np.sum(np.diff(th) ** 2) / h)
    c_theta = l2 + 8.0 * dl2
    scale = -1.0 / (2.0 * c_theta)
    values = scale * np.outer(th, eta0)
    values[0, :] = values[-1, :] = 0.0
    values[:, 0] = values[:, -1] = 0.0
    data = SliceData(-1.0 + a * h, a, phi, beta, eta0, -mean, c_theta, scale)
    return TestFunction2D(g, values), data


def best_slice_bound(u: DisplacementField, theta: Callable | None = None, window: float = 0.25) -> SliceCertificate:
    """Largest certified bound over vertex planes with ``|x1*| < window``.

    On each plane the auto-built ``eta`` is rescaled by the optimal
    ``lam = linear / (2 quadratic)``, giving ``linear^2 / (4 quadratic)``.
    """
    check_top_bottom(u)
    g = u.grid
    best = None
    scanned = 0
    for a in range(1, g.N):
        x1 = -1.0 + a * g.h
        if not abs(x1) < window:
            continue
        scanned += 1
        eta, _ = build_eta(u, x1, theta)
        db = dual_bound(u, eta, x1, check_bc=False)
        if db.quadratic > 0 and db.linear > 0:
            lam = db.linear / (2.0 * db.quadratic)
            value = db.linear**2 / (4.0 * db.quadratic)
        else:
            lam, value = 0.0, 0.0
        tol = dual_bound(u, eta.scaled(lam), x1, check_bc=False).tol if lam else db.tol
        cand = SliceCertificate(x1, value, lam, tol, a, 0)
        if best is None or cand.bound > best.bound:
            best = cand
    if best is None:
        raise ValueError(f"no vertex plane with |x1| < {window} on N={g.N}")
    return SliceCertificate(best.x1_star, best.bound, best.lam, best.tol, best.plane, scanned)


def lower_bound_energy(u: DisplacementField, plane: int) -> float:
    """``sum over cells left of the plane of h^3 (2 e12^2 + 2 e13^2)``.

    The quantity the discrete bound is actually dominated by; never exceeds
    the two-well elastic energy.
    """
    from .grid import cell_strains

    e = cell_strains(u)
    dens = 2.0 * e["e12"][:plane] ** 2 + 2.0 * e["e13"][:plane] ** 2
    return float(np.sum(dens) * u.grid.h**3)


def certificate_quality(bound: float, eps: float) -> float:
    """Bound relative to the expected eps^(2/3) scale; diagnostic only."""
    return bound / eps ** (2.0 / 3.0) if eps > 0 else math.nan
