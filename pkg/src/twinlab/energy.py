"""Pointwise energy densities for the two-variant model.

Three densities share one quadratic part
``q(xi) = xi11^2 + xi22^2 + xi33^2 + 2 xi12^2 + 2 xi13^2`` and differ in how
the shear component ``xi23`` is treated:

* ``HARD_CONSTRAINT``: ``q`` if ``|xi23| == 1``, else ``+inf``;
* ``QUASICONVEX_ENVELOPE``: ``q`` if ``|xi23| <= 1``, else ``+inf``;
* ``TWO_WELL``: squared Frobenius distance to the nearer of the two wells
  ``+-E23``, i.e. ``q + 2 (|xi23| - 1)^2``.

``math.inf`` is the infinite value; it poisons sums and compares correctly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

INF = math.inf


class EnergyDensityModel(enum.Enum):
    HARD_CONSTRAINT = "hard"
    QUASICONVEX_ENVELOPE = "qc"
    TWO_WELL = "two-well"


@dataclass(frozen=True)
class SymTensor3:
    """Symmetric 3x3 strain, off-diagonal entries stored once."""

    e11: float = 0.0
    e22: float = 0.0
    e33: float = 0.0
    e12: float = 0.0
    e13: float = 0.0
    e23: float = 0.0

    def __post_init__(self):
        for name in ("e11", "e22", "e33", "e12", "e13", "e23"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")

    @classmethod
    def well(cls, sign: int = 1) -> "SymTensor3":
        return cls(e23=float(sign))

    @classmethod
    def from_matrix(cls, m) -> "SymTensor3":
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3) or not np.allclose(m, m.T, rtol=0.0, atol=1e-14):
            raise ValueError("expected a symmetric 3x3 matrix")
        return cls(m[0, 0], m[1, 1], m[2, 2], m[0, 1], m[0, 2], m[1, 2])

    def as_matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.e11, self.e12, self.e13],
                [self.e12, self.e22, self.e23],
                [self.e13, self.e23, self.e33],
            ]
        )


def quadratic_part(xi: SymTensor3) -> float:
    # plain products: ``x * x`` is correctly rounded, ``x ** 2`` goes through libm pow
    return xi.e11 * xi.e11 + xi.e22 * xi.e22 + xi.e33 * xi.e33 + 2.0 * (xi.e12 * xi.e12) + 2.0 * (xi.e13 * xi.e13)


def eval_W(xi: SymTensor3) -> float:
    """Constrained density: finite only on ``|xi23| = 1`` (exact equality)."""
    if abs(xi.e23) != 1.0:
        return INF
    return quadratic_part(xi)


def eval_W_qc(xi: SymTensor3) -> float:
    """Quasiconvex envelope of :func:`eval_W`."""
    if abs(xi.e23) > 1.0:
        return INF
    return quadratic_part(xi)


def eval_W_twowell(xi: SymTensor3) -> tuple[float, int]:
    """Two-well quadratic density and the sign of the nearer well.

    The tie at ``xi23 = 0`` resolves to ``+1``.
    """
    q = quadratic_part(xi)
    dp = xi.e23 - 1.0
    dm = xi.e23 + 1.0
    plus = q + 2.0 * (dp * dp)
    minus = q + 2.0 * (dm * dm)
    if minus < plus:
        return minus, -1
    return plus, 1


def eval_density(xi: SymTensor3, model: EnergyDensityModel) -> float:
    if model is EnergyDensityModel.HARD_CONSTRAINT:
        return eval_W(xi)
    if model is EnergyDensityModel.QUASICONVEX_ENVELOPE:
        return eval_W_qc(xi)
    return eval_W_twowell(xi)[0]


def is_admissible(xi: SymTensor3, model: EnergyDensityModel) -> bool:
    """True when the density of ``model`` is finite at ``xi``."""
    return math.isfinite(eval_density(xi, model))


# Array versions.  ``strain`` is a dict-like with keys e11..e23 holding arrays
# of equal shape (see :func:`twinlab.grid.cell_strains`).


def quadratic_part_array(strain) -> np.ndarray:
    e11, e22, e33, e12, e13 = (strain[k] for k in ("e11", "e22", "e33", "e12", "e13"))
    return e11 * e11 + e22 * e22 + e33 * e33 + 2.0 * (e12 * e12) + 2.0 * (e13 * e13)


def density_array(strain, model: EnergyDensityModel, signs=None) -> np.ndarray:
    """Vectorised density.  ``signs`` fixes the well under ``TWO_WELL``."""
    q = quadratic_part_array(strain)
    e23 = strain["e23"]
    if model is EnergyDensityModel.TWO_WELL:
        if signs is None:
            dp = e23 - 1.0
            dm = e23 + 1.0
            return np.minimum(q + 2.0 * (dp * dp), q + 2.0 * (dm * dm))
        d = e23 - signs
        return q + 2.0 * (d * d)
    if model is EnergyDensityModel.HARD_CONSTRAINT:
        bad = np.abs(e23) != 1.0
    else:
        bad = np.abs(e23) > 1.0
    return np.where(bad, INF, q)
