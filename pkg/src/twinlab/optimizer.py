"""Alternating minimisation of the two-well energy on the grid.

The discrete energy for a fixed sign field ``s`` is quadratic in the flat
displacement ``u``::

    E(u) = h^3 sum_c [ q(e(u)) + 2 (e23(u) - s)^2 ] + eps TV(s) - gamma M'(u)
         = 1/2 u^T A u - b_s^T u + const

so the displacement step is one linear solve (conjugate gradients, Jacobi
preconditioner, Dirichlet dofs eliminated).  For fixed ``u`` the sign step is
an Ising model with field ``e23``, minimised exactly by a minimum cut (the
pair terms are submodular) or approximately by checkerboard ICM sweeps.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import maxflow
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import constructions as C
from .energy import EnergyDensityModel
from .grid import (
    BCKind,
    BoundaryCondition,
    DisplacementField,
    EnergyBreakdown,
    GridSpec,
    SignField,
    apply_bc,
    cell_strains,
    dirichlet_mask,
    dirichlet_values,
    strain_operators,
    total_energy,
    trapezoid_weights,
)

log = logging.getLogger(__name__)

_WEIGHTS = {"e11": 1.0, "e22": 1.0, "e33": 1.0, "e12": 2.0, "e13": 2.0, "e23": 2.0}


@dataclass(frozen=True)
class ProblemSpec:
    bc: BoundaryCondition
    eps: float
    grid: GridSpec | None = None  # not needed by the analytic family search
    model: EnergyDensityModel = EnergyDensityModel.TWO_WELL

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.model is not EnergyDensityModel.TWO_WELL:
            raise ValueError("the grid solver works with the two-well model only")
        if self.bc.kind is BCKind.NEUMANN and self.grid is not None and self.grid.N % 2:
            # odd N leaves an hourglass mode that the load sees: unbounded below
            raise ValueError("Neumann problems need an even N")

    @property
    def alpha(self) -> float:
        """Bending amplitude of the natural laminate seeds."""
        if self.bc.kind is BCKind.NEUMANN:
            return -1.0 if self.bc.gamma >= 0 else 1.0
        return self.bc.alpha


@dataclass
class SolverConfig:
    cg_rel_tol: float = 1e-8
    cg_max_iters: int | None = None
    outer_max: int = 200
    seeds: list | None = None
    rng_seed: int = 0
    n_random_seeds: int = 0
    sign_method: str = "graphcut"
    x2_invariant: bool = False
    energy_rel_tol: float = 1e-10

    def __post_init__(self):
        if not (self.cg_rel_tol > 0 and self.energy_rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.sign_method not in ("icm", "graphcut"):
            raise ValueError(f"unknown sign method {self.sign_method!r}")

    def max_cg(self, grid: GridSpec) -> int:
        return self.cg_max_iters if self.cg_max_iters is not None else 10 * grid.N**3

    def to_dict(self) -> dict:
        return {
            "cg_rel_tol": self.cg_rel_tol,
            "cg_max_iters": self.cg_max_iters,
            "outer_max": self.outer_max,
            "rng_seed": self.rng_seed,
            "n_random_seeds": self.n_random_seeds,
            "sign_method": self.sign_method,
            "x2_invariant": self.x2_invariant,
            "energy_rel_tol": self.energy_rel_tol,
        }


@dataclass
class SolveResult:
    u: DisplacementField
    s: SignField
    energy: EnergyBreakdown
    trace: list
    converged: bool
    seed_label: str = ""
    cg_converged: bool = True
    seed_energies: dict = field(default_factory=dict)


# -- quadratic system ------------------------------------------------------------


class QuadraticSystem:
    """Hessian, parametrisation and load vector of the displacement sub-problem.

    The displacement is parametrised as ``u = P z + u_fixed``; ``P`` drops
    pinned dofs and, when the boundary condition asks for it, imposes the
    structural form ``u2 = u2(x1, x3)``, ``u3 = x2 * g(x1, x3)``.
    """

    def __init__(self, grid: GridSpec, bc: BoundaryCondition):
        self.grid, self.bc = grid, bc
        h = grid.h
        S = strain_operators(grid)
        self.S23 = S["e23"]
        B = sp.vstack([math.sqrt(_WEIGHTS[k]) * S[k] for k in S], format="csr")
        self.P = self._parametrisation()
        self.BP = (B @ self.P).tocsr()
        self.scale = 2.0 * h**3
        self.diag = self.scale * np.asarray(self.BP.multiply(self.BP).sum(axis=0)).ravel()
        self.u_fixed = dirichlet_values(grid, bc).ravel()
        self.load = self._load_vector()
        # affine part contributed by the pinned values
        self.Bu_fixed = B @ self.u_fixed
        self.B = B

    def _parametrisation(self) -> sp.csr_matrix:
        g, n = self.grid, self.grid.N + 1
        mask = dirichlet_mask(g, self.bc)
        total = 3 * n**3
        if not self.bc.ansatz_constrained:
            free = np.flatnonzero(~mask.ravel())
            return sp.csr_matrix(
                (np.ones(free.size), (free, np.arange(free.size))), shape=(total, free.size)
            )
        idx = np.arange(total).reshape(3, n, n, n)
        x2 = g.nodes
        rows, cols, vals = [], [], []
        col = 0
        free1 = idx[0][~mask[0]]
        rows.append(free1)
        cols.append(np.arange(free1.size))
        vals.append(np.ones(free1.size))
        col = free1.size
        for comp, weight in ((1, np.ones(n)), (2, x2)):
            for i in range(n):
                for k in range(n):
                    if mask[comp, i, 0, k]:
                        continue
                    rows.append(idx[comp, i, :, k])
                    cols.append(np.full(n, col))
                    vals.append(weight)
                    col += 1
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(total, col)
        )

    def _load_vector(self) -> np.ndarray:
        g, n = self.grid, self.grid.N + 1
        m = np.zeros((3, n, n, n))
        if self.bc.kind is BCKind.NEUMANN:
            w = trapezoid_weights(g)
            wx = np.outer(w, w * g.nodes)
            m[0, :, :, -1] = wx
            m[0, :, :, 0] = -wx
        return self.bc.gamma * m.ravel()

    def hessian(self) -> spla.LinearOperator:
        BP, c = self.BP, self.scale
        size = BP.shape[1]
        return spla.LinearOperator((size, size), matvec=lambda z: c * (BP.T @ (BP @ z)), dtype=float)

    def rhs(self, s: SignField) -> np.ndarray:
        # gradient of the linear terms: 4 h^3 S23^T s + gamma m, minus the pinned part
        h3 = self.grid.h**3
        b = 4.0 * h3 * (self.S23.T @ s.values.astype(float).ravel()) + self.load
        b_reduced = self.P.T @ b
        return b_reduced - self.scale * (self.BP.T @ self.Bu_fixed)

    def to_field(self, z: np.ndarray) -> DisplacementField:
        return DisplacementField.from_flat(self.grid, self.P @ z + self.u_fixed)

    def from_field(self, u: DisplacementField) -> np.ndarray:
        """Least-squares reduced coordinates of ``u`` (exact when ``u`` is representable)."""
        PtP = (self.P.T @ self.P).diagonal()
        return (self.P.T @ (u.flat - self.u_fixed)) / PtP

    def quadratic_value(self, z: np.ndarray, b: np.ndarray) -> float:
        return 0.5 * float(z @ (self.scale * (self.BP.T @ (self.BP @ z)))) - float(b @ z)


_SYSTEM_CACHE: dict = {}


def _system(grid: GridSpec, bc: BoundaryCondition) -> QuadraticSystem:
    key = (grid.N, bc.kind, bc.alpha, bc.gamma, bc.ansatz_constrained)
    if key not in _SYSTEM_CACHE:
        if len(_SYSTEM_CACHE) > 8:
            _SYSTEM_CACHE.clear()
        _SYSTEM_CACHE[key] = QuadraticSystem(grid, bc)
    return _SYSTEM_CACHE[key]


def solve_elastic(
    s: SignField,
    problem: ProblemSpec,
    u0: DisplacementField | None = None,
    config: SolverConfig | None = None,
):
    """Minimise the quadratic energy for fixed signs; returns ``(u, cg_converged)``."""
    config = config or SolverConfig()
    system = _system(problem.grid, problem.bc)
    if u0 is None:
        u0 = apply_bc(DisplacementField.zeros(problem.grid), problem.bc)
    z0 = system.from_field(apply_bc(u0, problem.bc))
    b = system.rhs(s)
    A = system.hessian()
    dinv = np.where(system.diag > 0, 1.0 / np.where(system.diag > 0, system.diag, 1.0), 0.0)
    M = spla.LinearOperator(A.shape, matvec=lambda r: dinv * r, dtype=float)
    z, info = spla.cg(
        A, b, x0=z0, rtol=config.cg_rel_tol, atol=0.0, maxiter=config.max_cg(problem.grid), M=M
    )
    # CG decreases the quadratic monotonically; keep the start if rounding says otherwise
    if system.quadratic_value(z, b) > system.quadratic_value(z0, b):
        z = z0
    if info != 0:
        log.warning("CG did not reach rtol=%g (info=%d)", config.cg_rel_tol, info)
    return system.to_field(z), info == 0


# -- sign updates ----------------------------------------------------------------


def _neighbour_sum(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v, dtype=float)
    for ax in range(v.ndim):
        lo = [slice(None)] * v.ndim
        hi = [slice(None)] * v.ndim
        lo[ax], hi[ax] = slice(None, -1), slice(1, None)
        out[tuple(lo)] += v[tuple(hi)]
        out[tuple(hi)] += v[tuple(lo)]
    return out


def _icm(field_e23: np.ndarray, s: np.ndarray, unary: float, pair: float) -> np.ndarray:
    """Checkerboard ICM for ``sum unary*(... - s e23) + pair * sum s_i s_j`` flips.

    A flip of cell ``c`` changes the energy by ``s_c * (unary*e23_c + pair*sum_nbrs s)``,
    which for same-colour cells does not depend on the other same-colour flips.
    """
    s = s.astype(float).copy()
    color = np.indices(s.shape).sum(axis=0) % 2
    while True:
        flips = 0
        for c in (0, 1):
            local = unary * field_e23 + pair * _neighbour_sum(s)
            flip = (color == c) & (s * local < 0.0)
            s[flip] = -s[flip]
            flips += int(flip.sum())
        if flips == 0:
            return s


def signs_energy(e23: np.ndarray, s: np.ndarray, eps: float, h: float) -> float:
    """The sign-dependent part of the energy."""
    tv = sum(np.sum(np.abs(np.diff(s.astype(float), axis=ax))) for ax in range(3))
    return float(2.0 * h**3 * np.sum((e23 - s) ** 2) + eps * h * h * tv)


def update_signs(
    u: DisplacementField,
    s: SignField,
    eps: float,
    method: str = "graphcut",
    x2_invariant: bool = False,
) -> SignField:
    """Lower the energy in ``s`` with ``u`` frozen.

    ``"graphcut"`` (default) returns a global minimiser; it is kept only if
    strictly better than ``s``.  ``"icm"`` flips any cell whose flip strictly
    lowers the energy, sweeping red then black cells until a full sweep makes
    no flip (ties keep the current sign); it only reaches a local minimum.
    With ``x2_invariant`` the field is kept constant along ``x2`` and whole
    columns are flipped instead.
    """
    h = u.grid.h
    e23 = cell_strains(u)["e23"]
    if method == "graphcut":
        cut = _graphcut(e23, eps, h, x2_invariant)
        # ties keep the current field
        if signs_energy(e23, cut, eps, h) < signs_energy(e23, s.values, eps, h):
            return SignField(u.grid, cut)
        return s
    if method != "icm":
        raise ValueError(f"unknown method {method!r}")
    if x2_invariant:
        col = _icm(e23.sum(axis=1), s.values[:, 0, :], 8.0 * h**3, 2.0 * eps * h * h * u.grid.N)
        out = np.repeat(col[:, None, :], u.grid.N, axis=1)
        return SignField(u.grid, out)
    return SignField(u.grid, _icm(e23, s.values, 8.0 * h**3, 2.0 * eps * h * h))


def _graphcut(e23: np.ndarray, eps: float, h: float, x2_invariant: bool) -> np.ndarray:
    """Global minimiser of the sign energy by an s-t minimum cut.

    Source side is ``+1``; a node there pays its sink capacity (the ``+1``
    cost), a node on the sink side pays its source capacity (the ``-1`` cost).
    Each differing neighbour pair costs ``2 eps h^2`` (one face, jump 2).
    """
    if x2_invariant:
        plus = (2.0 * h**3 * (e23 - 1.0) ** 2).sum(axis=1)
        minus = (2.0 * h**3 * (e23 + 1.0) ** 2).sum(axis=1)
        pair = 2.0 * eps * h * h * e23.shape[1]
    else:
        plus = 2.0 * h**3 * (e23 - 1.0) ** 2
        minus = 2.0 * h**3 * (e23 + 1.0) ** 2
        pair = 2.0 * eps * h * h
    shift = np.minimum(plus, minus)
    graph = maxflow.Graph[float]()
    nodes = graph.add_grid_nodes(plus.shape)
    graph.add_grid_edges(nodes, weights=pair, symmetric=True)
    graph.add_grid_tedges(nodes, minus - shift, plus - shift)
    graph.maxflow()
    out = np.where(graph.get_grid_segments(nodes), -1, 1).astype(np.int8)
    if x2_invariant:
        out = np.repeat(out[:, None, :], e23.shape[1], axis=1)
    return out


# -- driver ------------------------------------------------------------------------


def default_seeds(problem: ProblemSpec, config: SolverConfig | None = None):
    """``(label, s0, u0)`` triples: both constants and laminates for n in {1, 2, n_opt}."""
    config = config or SolverConfig()
    g, bc = problem.grid, problem.bc
    alpha = problem.alpha
    X = g.vertex_mesh()
    if bc.is_dirichlet:
        base = apply_bc(DisplacementField(g, C.u_star(alpha, X)), bc)
    else:
        base = DisplacementField.zeros(g)
    seeds = [("const+1", SignField.constant(g, 1), base), ("const-1", SignField.constant(g, -1), base)]
    n_opt = C.laminate_optimal_n(alpha, problem.eps)
    for n in sorted({1, 2, n_opt}):
        lam = C.LaminateParams(alpha, n, symmetric=True)
        s0 = SignField.from_function(g, lambda a, b, c: C.laminate_sign(lam, (a, b, c)))
        u0 = apply_bc(DisplacementField(g, C.laminate_u(lam, X)), bc)
        seeds.append((f"laminate-n{n}", s0, u0))
    rng = np.random.default_rng(config.rng_seed)
    for r in range(config.n_random_seeds):
        s0 = SignField(g, rng.choice(np.array([-1, 1], dtype=np.int8), size=(g.N,) * 3))
        seeds.append((f"random-{r}", s0, base))
    if config.x2_invariant:
        seeds = [(lab, SignField(g, np.repeat(s.values[:, :1, :], g.N, axis=1)), u) for lab, s, u in seeds]
    return seeds


def _run_seed(problem, config, label, s, u):
    bc, eps = problem.bc, problem.eps
    u = apply_bc(u, bc)
    energy = total_energy(u, s, eps, bc)
    trace = [energy.total]
    u, cg_ok = solve_elastic(s, problem, u, config)
    energy = total_energy(u, s, eps, bc)
    trace.append(energy.total)
    converged = False
    for it in range(config.outer_max):
        s_new = update_signs(u, s, eps, config.sign_method, config.x2_invariant)
        u_new, ok = solve_elastic(s_new, problem, u, config)
        cg_ok = cg_ok and ok
        e_new = total_energy(u_new, s_new, eps, bc)
        if e_new.total > energy.total:
            # the inexact linear solve overshot; keep the monotone state
            converged = True
            break
        decrease = energy.total - e_new.total
        u, s, energy = u_new, s_new, e_new
        trace.append(energy.total)
        if decrease <= config.energy_rel_tol * max(abs(trace[-2]), 1e-12):
            converged = True
            break
    return SolveResult(u, s, energy, trace, converged, label, cg_ok)


def minimize(problem: ProblemSpec, config: SolverConfig | None = None) -> SolveResult:
    """Multi-start alternating minimisation; returns the best seed's result."""
    if problem.grid is None:
        raise ValueError("minimize needs a grid")
    config = config or SolverConfig()
    if config.seeds is not None:
        base = (
            apply_bc(DisplacementField(problem.grid, C.u_star(problem.alpha, problem.grid.vertex_mesh())), problem.bc)
            if problem.bc.is_dirichlet
            else DisplacementField.zeros(problem.grid)
        )
        seeds = [(f"seed-{i}", s, base) for i, s in enumerate(config.seeds)]
    else:
        seeds = default_seeds(problem, config)
    best = None
    seed_energies = {}
    for label, s0, u0 in seeds:
        t0 = time.perf_counter()
        res = _run_seed(problem, config, label, s0, u0)
        log.info("seed %s: E=%.6g after %d steps (%.2fs)", label, res.energy.total, len(res.trace), time.perf_counter() - t0)
        seed_energies[label] = res.energy.total
        if best is None or res.energy.total < best.energy.total:
            best = res
    best.seed_energies = seed_energies
    return best


# -- analytic family search --------------------------------------------------------


@dataclass
class FamilyResult:
    kind: str
    energy: EnergyBreakdown
    laminate: C.LaminateParams | None = None
    t: float | None = None
    alpha: float | None = None
    candidates: list = field(default_factory=list)

    @property
    def n_used(self) -> int:
        return self.laminate.n if self.laminate is not None else 0

    def sample(self, grid: GridSpec):
        """Grid samples ``(u, s)`` of the winning construction."""
        X = grid.vertex_mesh()
        if self.kind == "laminate":
            lam = self.laminate
            u = DisplacementField(grid, C.laminate_u(lam, X))
            s = SignField.from_function(grid, lambda a, b, c: C.laminate_sign(lam, (a, b, c)))
        elif self.kind == "affine-w":
            u = DisplacementField(grid, C.affine_w(self.alpha, X))
            s = SignField.constant(grid, 1)
        else:
            u = DisplacementField(grid, C.neumann_affine_u(self.t, X))
            s = SignField.constant(grid, 1)
        return u, s


def laminate_candidates(alpha: float, eps: float, gamma: float = 0.0):
    n_max = 4 * C.laminate_optimal_n(alpha, eps)
    out = []
    for symmetric in (True, False):
        for n in range(1, n_max + 1):
            lam = C.LaminateParams(alpha, n, symmetric)
            out.append((lam, C.analytic_energy_laminate(lam, eps, gamma)))
    return out


def family_search(problem: ProblemSpec) -> FamilyResult:
    """Best explicit construction, evaluated in closed form (no grid)."""
    bc, eps = problem.bc, problem.eps
    cands = []
    if bc.kind is BCKind.NEUMANN:
        t, _ = C.neumann_affine_optimum(bc.gamma)
        cands.append(FamilyResult("neumann-affine", C.analytic_energy_neumann_affine(t, eps, bc.gamma), t=t))
        alpha = problem.alpha
    else:
        alpha = bc.alpha
        if bc.kind is BCKind.LEFT_RIGHT:
            cands.append(FamilyResult("affine-w", C.analytic_energy_affine_w(alpha, eps), alpha=alpha))
    for lam, energy in laminate_candidates(alpha, eps, bc.gamma if bc.kind is BCKind.NEUMANN else 0.0):
        cands.append(FamilyResult("laminate", energy, laminate=lam, alpha=alpha))
    # first minimum wins ties: affine before laminates, symmetric before plain, small n first
    best = min(cands, key=lambda r: r.energy.total)
    return FamilyResult(best.kind, best.energy, best.laminate, best.t, best.alpha, cands)
