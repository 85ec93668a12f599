"""Closed-form deformations and their exact energies.

Every construction takes points as ``x = (x1, x2, x3)`` where the entries may
be scalars or broadcastable arrays, and returns a ``(3, ...)`` array.  Each one
has a hand-derived ``*_strain`` companion returning the exact strain as a dict
of arrays keyed ``e11 .. e23``, so energies never need numerical
differentiation.

Laminates split ``[-1, 1]`` in ``x3`` into ``2n`` slices of thickness
``delta = 1/n``, indexed ``k = -n .. n-1``.  In slice ``k`` the interface is
``x3 = f_k(x1) = (sigma_k alpha x1 + 1) delta / 2 + k delta`` with
``sigma_k = 1`` (plain) or ``(-1)^k`` (symmetric); below it the phase is
``e23 = sigma_k``, above it ``-sigma_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyDensityModel, density_array
from .grid import EnergyBreakdown


def _split(x):
    x1, x2, x3 = x
    return np.asarray(x1, dtype=float), np.asarray(x2, dtype=float), np.asarray(x3, dtype=float)


def _strain_dict(shape, **comps):
    out = {k: np.zeros(shape) for k in ("e11", "e22", "e33", "e12", "e13", "e23")}
    for k, v in comps.items():
        out[k] = np.broadcast_to(np.asarray(v, dtype=float), shape).copy()
    return out


# -- relaxed solution and its rigidity family ---------------------------------


def u_star(alpha: float, x) -> np.ndarray:
    x1, x2, x3 = _split(x)
    return alpha * np.stack(np.broadcast_arrays(-x2 * x3, x1 * x3, x1 * x2))


def u_star_strain(alpha: float, x) -> dict:
    x1, x2, x3 = _split(x)
    shape = np.broadcast(x1, x2, x3).shape
    return _strain_dict(shape, e23=alpha * x1)


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function given by breakpoints and values."""

    breaks: tuple
    values: tuple

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing, at least two")
        if len(self.values) != b.size:
            raise ValueError("need one value per breakpoint")

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(np.asarray(self.values, float)) / np.diff(np.asarray(self.breaks, float))

    @property
    def lipschitz(self) -> float:
        return float(np.max(np.abs(self.slopes)))

    def __call__(self, t):
        return np.interp(t, self.breaks, self.values)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        b = np.asarray(self.breaks, dtype=float)
        idx = np.clip(np.searchsorted(b, t, side="right") - 1, 0, b.size - 2)
        return self.slopes[idx]


@dataclass(frozen=True)
class RelaxedFamilyParams:
    alpha: float
    c: float = 0.0
    d: float = 0.0
    psi: PiecewiseLinear = field(default_factory=lambda: PiecewiseLinear((-1.0, 1.0), (0.0, 0.0)))
    validate: bool = True

    def __post_init__(self):
        if not -1.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [-1, 1]")
        if self.validate and self.psi.lipschitz > self.lip_bound * (1 + 1e-12):
            raise ValueError(
                f"Lip(psi) = {self.psi.lipschitz:.6g} exceeds 2(1-|alpha|) = {self.lip_bound:.6g}"
            )

    @property
    def lip_bound(self) -> float:
        return 2.0 * (1.0 - abs(self.alpha))


def relaxed_family(params: RelaxedFamilyParams, x) -> np.ndarray:
    x1, x2, x3 = _split(x)
    base = u_star(params.alpha, (x1, x2, x3))
    extra = np.stack(
        np.broadcast_arrays(params.d * x2 + params.c, -params.d * x1 + params.psi(x3), 0.0 * x1)
    )
    return base + extra


def relaxed_family_strain(params: RelaxedFamilyParams, x) -> dict:
    x1, x2, x3 = _split(x)
    shape = np.broadcast(x1, x2, x3).shape
    return _strain_dict(shape, e23=params.alpha * x1 + 0.5 * params.psi.derivative(x3))


def relaxed_energy_exact(params: RelaxedFamilyParams, order: int = 6) -> float:
    """Quasiconvex-envelope energy of a family member from its exact strain.

    Tensor Gauss quadrature on each linear piece of ``psi`` (the strain is
    polynomial there), times 2 for the ``x2`` direction it does not depend on.

    The constraint ``|e23| <= 1`` is checked exactly rather than at the
    quadrature nodes: on a piece with slope ``m``, ``e23 = alpha x1 + m/2`` is
    affine in ``x1``, so it leaves ``[-1, 1]`` on a set of positive measure iff
    ``|alpha| + |m|/2 > 1``.
    """
    b = np.asarray(params.psi.breaks, dtype=float)
    peak = abs(params.alpha) + 0.5 * np.abs(params.psi.slopes)
    if np.any(peak > 1.0 + 1e-12):
        return math.inf
    t, w = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for lo, hi in zip(b[:-1], b[1:]):
        x3 = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
        X1, X3 = np.meshgrid(t, x3, indexing="ij")
        W = np.outer(w, w) * 0.5 * (hi - lo)
        dens = density_array(
            relaxed_family_strain(params, (X1, 0.0, X3)), EnergyDensityModel.QUASICONVEX_ENVELOPE
        )
        if not np.all(np.isfinite(dens)):
            return math.inf
        total += 2.0 * float(np.sum(W * dens))
    return total


# -- laminates -------------------------------------------------------------------


@dataclass(frozen=True)
class LaminateParams:
    alpha: float
    n: int
    symmetric: bool = True

    def __post_init__(self):
        if not -1.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [-1, 1]")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")

    @property
    def delta(self) -> float:
        return 1.0 / self.n


def _sigma(params: LaminateParams, k):
    k = np.asarray(k)
    if not params.symmetric:
        return np.ones(k.shape)
    return np.where(k % 2 == 0, 1.0, -1.0)


def _slice_index(params: LaminateParams, x3):
    # a point exactly on k*delta belongs to the upper slice
    k = np.floor(np.asarray(x3, dtype=float) * params.n).astype(int)
    return np.clip(k, -params.n, params.n - 1)


def laminate_interface(params: LaminateParams, k: int, x1):
    """Height ``x3`` of the interface inside slice ``k`` at abscissa ``x1``."""
    if not -params.n <= k <= params.n - 1:
        raise IndexError(f"slice index {k} outside [-{params.n}, {params.n - 1}]")
    d = params.delta
    return (_sigma(params, k) * params.alpha * np.asarray(x1, dtype=float) + 1.0) * 0.5 * d + k * d


def _laminate_parts(params: LaminateParams, x1, x3):
    a, d = params.alpha, params.delta
    k = _slice_index(params, x3)
    sig = _sigma(params, k)
    f = (sig * a * x1 + 1.0) * 0.5 * d + k * d
    lower = x3 <= f
    return k, sig, lower


def laminate_u(params: LaminateParams, x) -> np.ndarray:
    x1, x2, x3 = np.broadcast_arrays(*_split(x))
    a, d = params.alpha, params.delta
    k, sig, lower = _laminate_parts(params, x1, x3)
    u2_left = (2 * sig - a * x1) * x3 + 2 * a * x1 * k * d - 2 * sig * k * d
    u2_right = (-2 * sig - a * x1) * x3 + 2 * a * x1 * (k + 1) * d + 2 * sig * (k + 1) * d
    u2 = np.where(lower, u2_left, u2_right)
    return np.stack([-a * x2 * x3, u2, a * x1 * x2])


def laminate_sign(params: LaminateParams, x):
    x1, x2, x3 = np.broadcast_arrays(*_split(x))
    k, sig, lower = _laminate_parts(params, x1, x3)
    return np.where(lower, sig, -sig).astype(int)


def laminate_strain(params: LaminateParams, x) -> dict:
    x1, x2, x3 = np.broadcast_arrays(*_split(x))
    a, d = params.alpha, params.delta
    k, sig, lower = _laminate_parts(params, x1, x3)
    e12 = np.where(lower, a * (k * d - x3), a * ((k + 1) * d - x3))
    return _strain_dict(x1.shape, e12=e12, e23=np.where(lower, sig, -sig))


def laminate_optimal_n(alpha: float, eps: float) -> int:
    """Smallest ``n >= 1`` with ``n^3 >= alpha^2 / eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    target = alpha * alpha
    n = max(1, math.ceil((target / eps) ** (1.0 / 3.0)))
    # repair cube-root rounding at exact cubes
    while n > 1 and (n - 1) ** 3 * eps >= target:
        n -= 1
    while n**3 * eps < target:
        n += 1
    return n


def laminate_elastic_exact(params: LaminateParams) -> float:
    """Exact integral of ``2 e12^2`` over the cube.

    Per slice, with ``g = f_k - k delta``:
    ``2 * (2 a^2 / 3) * int (g^3 + (delta - g)^3) dx1 = (2/3) a^2 (1 + a^2) delta^3``.
    """
    a, d = params.alpha, params.delta
    return 2 * params.n * (2.0 / 3.0) * a * a * (1.0 + a * a) * d**3


def laminate_interface_area(params: LaminateParams) -> float:
    a, d, n = params.alpha, params.delta, params.n
    oblique = 2 * n * 2.0 * math.sqrt(4.0 + (a * d) ** 2)
    joins = 0.0 if params.symmetric else 4.0 * (2 * n - 1)
    return oblique + joins


def laminate_m_prime(params: LaminateParams) -> float:
    return -8.0 * params.alpha / 3.0


def analytic_energy_laminate(params: LaminateParams, eps: float, gamma: float = 0.0) -> EnergyBreakdown:
    """Exact elastic and surface energy of a laminate; ``gamma`` adds the load term."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    el = laminate_elastic_exact(params)
    sur = 2.0 * laminate_interface_area(params)
    load = -gamma * laminate_m_prime(params) if gamma else 0.0
    return EnergyBreakdown.compose(el, sur, load, eps)


# -- affine competitors -----------------------------------------------------------


def affine_w(alpha: float, x) -> np.ndarray:
    x1, x2, x3 = _split(x)
    return np.stack(np.broadcast_arrays(0.0 * x1, 2 * x3 - alpha * x1 * x3, alpha * x1 * x2))


def affine_w_strain(alpha: float, x) -> dict:
    x1, x2, x3 = _split(x)
    shape = np.broadcast(x1, x2, x3).shape
    return _strain_dict(shape, e12=-0.5 * alpha * x3, e13=0.5 * alpha * x2, e23=1.0)


def affine_w_elastic_exact(alpha: float) -> float:
    # W = alpha^2 (x2^2 + x3^2) / 2 and int x_i^2 over the cube = 8/3
    return 8.0 * alpha * alpha / 3.0


def analytic_energy_affine_w(alpha: float, eps: float) -> EnergyBreakdown:
    return EnergyBreakdown.compose(affine_w_elastic_exact(alpha), 0.0, 0.0, eps)


def neumann_affine_u(t: float, x) -> np.ndarray:
    x1, x2, x3 = _split(x)
    return np.stack(np.broadcast_arrays(t * x2 * x3, 2 * x3 + 0.0 * x1, 0.0 * x1))


def neumann_affine_strain(t: float, x) -> dict:
    x1, x2, x3 = _split(x)
    shape = np.broadcast(x1, x2, x3).shape
    return _strain_dict(shape, e12=0.5 * t * x3, e13=0.5 * t * x2, e23=1.0)


def neumann_affine_elastic_exact(t: float) -> float:
    return 8.0 * t * t / 3.0


def neumann_affine_m_prime(t: float) -> float:
    return 8.0 * t / 3.0


def neumann_affine_optimum(gamma: float) -> tuple[float, float]:
    """Optimal ``t`` and objective of ``(8/3) t^2 - gamma (8/3) t``."""
    t = 0.5 * gamma
    return t, neumann_affine_elastic_exact(t) - gamma * neumann_affine_m_prime(t)


def analytic_energy_neumann_affine(t: float, eps: float, gamma: float) -> EnergyBreakdown:
    load = -gamma * neumann_affine_m_prime(t)
    return EnergyBreakdown.compose(neumann_affine_elastic_exact(t), 0.0, load, eps)


def exact_energy_by_quadrature(strain_fn, order: int = 8, model=EnergyDensityModel.HARD_CONSTRAINT):
    """Tensor Gauss quadrature of a smooth exact strain over the whole cube.

    Only valid for strains that are polynomial on the whole cube (no
    interfaces): ``u_star``, ``affine_w``, ``neumann_affine``.
    """
    t, w = np.polynomial.legendre.leggauss(order)
    X1, X2, X3 = np.meshgrid(t, t, t, indexing="ij")
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    dens = density_array(strain_fn((X1, X2, X3)), model)
    if not np.all(np.isfinite(dens)):
        return math.inf
    return float(np.sum(W * dens))

