"""Figures for sweep and solver outputs (written to files, never shown)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_eps_sweep(rows, fit, path, title: str = "energy scaling"):
    eps = np.array([r.eps for r in rows])
    tot = np.array([r.total for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(eps, tot, "o", label="total energy")
    if fit is not None:
        xs = np.geomspace(eps.min(), eps.max(), 50)
        ax.loglog(xs, np.exp(fit.intercept) * xs**fit.slope, "-", label=f"fit, slope {fit.slope:.3f}")
        ax.loglog(xs, tot[-1] * (xs / eps[-1]) ** (2 / 3), ":", color="grey", label="slope 2/3")
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel("energy")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_gamma_sweep(rows, gamma_star, path):
    """Objective against load; elastic parabola and laminate points coloured apart."""
    g = np.array([r.gamma for r in rows])
    tot = np.array([r.total for r in rows])
    lam = np.array([r.kind == "laminate" for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    gg = np.linspace(g.min(), g.max(), 200)
    ax.plot(gg, -(2.0 / 3.0) * gg**2, "-", color="grey", lw=1, label=r"$-\frac{2}{3}\gamma^2$")
    ax.plot(g[~lam], tot[~lam], "o", label="elastic wins")
    ax.plot(g[lam], tot[lam], "s", label="laminate wins")
    if gamma_star is not None and not math.isnan(gamma_star):
        for sgn in (-1, 1):
            ax.axvline(sgn * gamma_star, ls="--", color="k", lw=0.8)
    ax.set_xlabel(r"$\gamma$")
    ax.set_ylabel("objective")
    ax.legend()
    return _save(fig, path)


def plot_crossover(eps_list, gamma_stars, fit, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(eps_list, gamma_stars, "o", label=r"$\gamma^*$")
    xs = np.geomspace(min(eps_list), max(eps_list), 50)
    ax.loglog(xs, np.exp(fit.intercept) * xs**fit.slope, "-", label=f"fit, slope {fit.slope:.3f}")
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel("crossover load")
    ax.legend()
    return _save(fig, path)


def plot_trace(trace, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(range(len(trace)), trace, ".-")
    ax.set_xlabel("half-step")
    ax.set_ylabel("total energy")
    return _save(fig, path)
