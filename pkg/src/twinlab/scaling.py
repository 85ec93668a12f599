"""Parameter sweeps and power-law fits.

Two instruments are available.  The *analytic* mode evaluates the explicit
construction families in closed form, so it has no resolution limit and is
the one used for exponents.  The *grid* mode runs the alternating minimiser
and only corroborates at moderate ``eps``, on an ``N = min(64, 16 n_opt)``
grid.

CSV rows are written with ``repr`` of the floats, so an identical sweep
reproduces the file byte for byte as long as timing is left off.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import constructions as C
from .grid import BCKind, BoundaryCondition, GridSpec
from .optimizer import ProblemSpec, SolverConfig, family_search, minimize

CSV_HEADER = ("eps", "alpha", "gamma", "mode", "n_used", "elastic", "surface", "load", "total", "wall_time_s")
MODES = ("analytic", "grid")
MIN_FIT_POINTS = 4
BISECT_REL_WIDTH = 1e-3


@dataclass(frozen=True)
class SweepRow:
    eps: float
    alpha: float | None
    gamma: float | None
    mode: str
    n_used: int
    elastic: float
    surface: float
    load: float
    total: float
    wall_time: float | None = None
    kind: str = ""  # winning construction; JSON only

    def __post_init__(self):
        recomposed = self.elastic + self.eps * self.surface + self.load
        if not math.isclose(recomposed, self.total, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"total {self.total!r} inconsistent with its components ({recomposed!r})")

    def csv_fields(self) -> list[str]:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return [
            fmt(self.eps),
            fmt(self.alpha),
            fmt(self.gamma),
            self.mode,
            str(self.n_used),
            fmt(self.elastic),
            fmt(self.surface),
            fmt(self.load),
            fmt(self.total),
            fmt(self.wall_time),
        ]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    x: tuple = field(default=(), repr=False)
    y: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r_squared, "n_points": self.n_points}


# -- fitting ---------------------------------------------------------------------


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> FitResult:
    """Least-squares line through ``(log x, log y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    if x.size < MIN_FIT_POINTS:
        raise ValueError(f"need at least {MIN_FIT_POINTS} points for a fit, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(ly) == 0.0:
        # linregress reports r = 0 here; the constant fit is exact
        return FitResult(0.0, float(ly[0]), 1.0, int(x.size), tuple(x), tuple(y))
    res = stats.linregress(lx, ly)
    return FitResult(float(res.slope), float(res.intercept), float(res.rvalue**2), int(x.size), tuple(x), tuple(y))


def fit_exponent(rows: Iterable[SweepRow]) -> FitResult:
    """Exponent of ``total ~ eps^p``.

    Raises
    ------
    ValueError
        If any row has a non-positive total (the offending rows are listed)
        or fewer than four rows are given.
    """
    rows = list(rows)
    bad = [(r.eps, r.total) for r in rows if not r.total > 0]
    if bad:
        listing = ", ".join(f"eps={e:g}: total={t:g}" for e, t in bad)
        raise ValueError(f"cannot fit non-positive totals ({listing})")
    return fit_loglog([r.eps for r in rows], [r.total for r in rows])


# -- sweeps ------------------------------------------------------------------------


def _row_from_family(eps, res, bc: BoundaryCondition, wall) -> SweepRow:
    e = res.energy
    gamma = bc.gamma if bc.kind is BCKind.NEUMANN else None
    alpha = res.alpha if res.kind != "neumann-affine" else None
    return SweepRow(eps, alpha, gamma, "analytic", res.n_used, e.elastic, e.surface, e.load, e.total, wall, res.kind)


def grid_size_for(alpha: float, eps: float) -> int:
    """``min(64, 16 n_opt)``, rounded up to even so Neumann problems are bounded."""
    n_opt = C.laminate_optimal_n(alpha, eps) if alpha != 0 else 1
    N = min(64, 16 * n_opt)
    return N + (N % 2)


def sweep_eps(
    bc: BoundaryCondition,
    alpha: float | None,
    eps_list: Sequence[float],
    mode: str = "analytic",
    *,
    timing: bool = False,
    config: SolverConfig | None = None,
) -> list[SweepRow]:
    """One row per ``eps``: family search (analytic) or grid minimisation.

    ``alpha`` overrides the amplitude of a left/right condition; it is ignored
    for the other kinds.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    eps_list = [float(e) for e in eps_list]
    if any(not e > 0 for e in eps_list):
        raise ValueError("eps values must be positive")
    if eps_list != sorted(eps_list):
        raise ValueError("eps_list must be sorted")
    if bc.kind is BCKind.LEFT_RIGHT and alpha is not None:
        bc = BoundaryCondition.left_right(alpha, bc.ansatz_constrained)
    rows = []
    for eps in eps_list:
        t0 = time.perf_counter()
        if mode == "analytic":
            res = family_search(ProblemSpec(bc, eps))
            wall = time.perf_counter() - t0 if timing else None
            rows.append(_row_from_family(eps, res, bc, wall))
        else:
            probe = ProblemSpec(bc, eps)
            grid = GridSpec(grid_size_for(probe.alpha, eps))
            sol = minimize(ProblemSpec(bc, eps, grid), config)
            wall = time.perf_counter() - t0 if timing else None
            e = sol.energy
            gamma = bc.gamma if bc.kind is BCKind.NEUMANN else None
            rows.append(
                SweepRow(eps, probe.alpha, gamma, "grid", grid.N, e.elastic, e.surface, e.load, e.total, wall, sol.seed_label)
            )
    return rows


def neumann_winner(eps: float, gamma: float):
    """``(laminate_wins, FamilyResult)`` for the Neumann family at load ``gamma``."""
    res = family_search(ProblemSpec(BoundaryCondition.neumann(gamma), eps))
    return res.kind == "laminate", res


def default_gamma_list(eps: float, points: int = 41, span: float = 20.0) -> list[float]:
    """Symmetric loads out to ``span * eps^(2/3)``, where the crossover lives."""
    g = span * eps ** (2.0 / 3.0)
    return [float(v) for v in np.linspace(-g, g, points)]


def _bisect_crossover(eps: float, lo: float, hi: float) -> float:
    """Midpoint of a bracket ``lo < gamma* <= hi`` shrunk to relative width 1e-3."""
    while hi - lo > BISECT_REL_WIDTH * hi:
        mid = 0.5 * (lo + hi)
        if neumann_winner(eps, mid)[0]:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def sweep_gamma(eps: float, gamma_list: Sequence[float] | None = None, *, timing: bool = False):
    """Energy-vs-load rows and the crossover load ``gamma*``.

    Each row records the better of the elastic (affine) response and the best
    laminate.  ``gamma*`` is the smallest ``|gamma|`` at which the laminate
    wins.  It is located from the sampled list and then refined by bisection
    (the family objective depends on ``|gamma|`` only).  ``nan`` if the
    laminate never wins on the list.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    gamma_list = default_gamma_list(eps) if gamma_list is None else [float(g) for g in gamma_list]
    rows = []
    wins = []
    for gamma in gamma_list:
        t0 = time.perf_counter()
        lam_wins, res = neumann_winner(eps, gamma)
        wall = time.perf_counter() - t0 if timing else None
        rows.append(_row_from_family(eps, res, BoundaryCondition.neumann(gamma), wall))
        wins.append((abs(gamma), lam_wins))
    winners = sorted(a for a, w in wins if w)
    if not winners:
        return rows, math.nan
    hi = winners[0]
    losers = [a for a, w in wins if not w and a < hi]
    lo = max(losers) if losers else 0.0
    return rows, _bisect_crossover(eps, lo, hi)


def crossover_fit(eps_list: Sequence[float], gamma_list: Sequence[float] | None = None):
    """Fit ``log gamma*`` against ``log eps``; returns ``(FitResult, gamma_stars)``."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < MIN_FIT_POINTS:
        raise ValueError(f"need at least {MIN_FIT_POINTS} eps values, got {len(eps_list)}")
    stars = []
    for eps in eps_list:
        _, g = sweep_gamma(eps, gamma_list)
        if math.isnan(g):
            raise ValueError(f"no crossover found at eps={eps:g}; widen the load range")
        stars.append(g)
    return fit_loglog(eps_list, stars), stars


# -- output ------------------------------------------------------------------------


def rows_to_csv(rows: Iterable[SweepRow], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_fields())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
