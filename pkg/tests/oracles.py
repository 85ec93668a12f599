"""Independent reference computations used by the tests.

Nothing here imports the package's solvers: each oracle re-derives its value
by brute force, exhaustive enumeration or a separate discretisation.
"""

import itertools
import math

import numpy as np

# Continuum Ritz minimum of  int |e(u)|^2 - gamma M'(u)  over polynomials of
# total degree 9 (i.e. the Neumann problem with all cells in the + well),
# computed once with ritz_neumann(9) and frozen; the value scales as gamma^2.
RITZ_NEUMANN_DEG9 = -1.470553526700025


def q_brute(xi):
    """Quadratic part written out from the definition, no shortcuts."""
    e11, e22, e33, e12, e13, _ = xi
    return e11 * e11 + e22 * e22 + e33 * e33 + 2 * e12 * e12 + 2 * e13 * e13


def twowell_brute(xi):
    """Minimum over the two branches, evaluated separately."""
    e23 = xi[5]
    plus = q_brute(xi) + 2.0 * ((e23 - 1.0) * (e23 - 1.0))
    minus = q_brute(xi) + 2.0 * ((e23 + 1.0) * (e23 + 1.0))
    return min(plus, minus)


def ising_brute(e23, eps, h):
    """Exhaustive minimum of the sign-dependent energy on a 2x2x2 grid.

    Energy: h^3 sum 2 (e23 - s)^2 + eps h^2 sum_{neighbours} |s_a - s_b|.
    Returns ``(value, signs)``; ties are broken towards the first pattern in
    lexicographic order of (-1, +1).
    """
    shape = e23.shape
    best = (math.inf, None)
    for bits in itertools.product((-1, 1), repeat=e23.size):
        s = np.array(bits, dtype=float).reshape(shape)
        val = float(np.sum(2.0 * (e23 - s) ** 2)) * h**3
        for ax in range(3):
            val += eps * h * h * float(np.sum(np.abs(np.diff(s, axis=ax))))
        if val < best[0]:
            best = (val, s)
    return best


def ritz_neumann(degree, gamma=1.0):
    """Polynomial Ritz value of  int |e(v)|^2 - gamma int x2 [v1]_{x3=-1}^{1} dx1 dx2."""
    t, w = np.polynomial.legendre.leggauss(degree + 2)
    X = np.meshgrid(t, t, t, indexing="ij")
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    mons = [m for m in itertools.product(range(degree + 1), repeat=3) if 0 < sum(m) <= degree]

    def mon(m):
        return X[0] ** m[0] * X[1] ** m[1] * X[2] ** m[2]

    def dmon(m, j):
        if m[j] == 0:
            return np.zeros_like(X[0])
        mm = list(m)
        mm[j] -= 1
        return m[j] * mon(mm)

    basis = [(c, m) for c in range(3) for m in mons]
    strains = []
    for c, m in basis:
        G = np.zeros((3, 3) + X[0].shape)
        for j in range(3):
            G[c, j] = dmon(m, j)
        strains.append(0.5 * (G + G.transpose(1, 0, 2, 3, 4)))
    nb = len(basis)
    K = np.zeros((nb, nb))
    for a in range(nb):
        for b in range(a, nb):
            K[a, b] = K[b, a] = np.sum(W * np.sum(strains[a] * strains[b], axis=(0, 1)))
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    W2 = np.outer(w, w)
    f = np.zeros(nb)
    for i, (c, m) in enumerate(basis):
        if c == 0:
            face = T1 ** m[0] * T2 ** m[1]
            f[i] = np.sum(W2 * T2 * face * (1.0 - (-1.0) ** m[2]))
    v = np.linalg.lstsq(K, gamma * f / 2, rcond=None)[0]
    return float(v @ K @ v - gamma * f @ v)


def laminate_total_brute(alpha, n, eps, symmetric=True):
    """Laminate energy re-derived from layer geometry.

    Slices have thickness delta = 1/n; in each one the interface rises with
    slope alpha delta / 2 across x1 in (-1, 1).  Elastic part taken as
    (4/3) alpha^2 (1 + alpha^2) delta^2 (checked separately against the grid
    by Richardson extrapolation).  Surface: the 2n tilted interfaces, their
    length summed numerically, times 2 in x2, plus for the plain variant the
    2n - 1 flat joins of area 4; the total variation counts each area twice
    (the sign jumps by 2).
    """
    delta = 1.0 / n
    el = 4.0 / 3.0 * alpha**2 * (1 + alpha**2) * delta**2
    x1 = np.linspace(-1, 1, 2001)
    x3 = 0.5 * alpha * delta * x1
    seg = float(np.sum(np.hypot(np.diff(x1), np.diff(x3))))
    area = 2 * n * seg * 2.0
    if not symmetric:
        area += 4.0 * (2 * n - 1)
    return el + eps * 2.0 * area


def crossover_closed_form(a, b, c, eps):
    """Smallest gamma > 0 with  b eps^(2/3) - c gamma < -a gamma^2."""
    L = b * eps ** (2.0 / 3.0)
    disc = c * c - 4 * a * L
    if disc < 0:
        return math.nan
    return (c - math.sqrt(disc)) / (2 * a)
