"""Command-line entry point: ``twinlab <command> ...``.

Commands
--------
construct   sample an explicit construction, report analytic and grid energies
minimize    alternating grid minimisation from the default seeds
sweep       eps / gamma / crossover sweeps (CSV + JSON fit + figures)
certify     slice duality lower bound for a saved field snapshot

Every command writes into ``--out`` (default ``twinlab-out``).  Options can
also come from a YAML or JSON document given with ``--config``; flags on the
command line win.  The fully resolved configuration is stored in
``run_config.json`` and embedded in every JSON output.

Exit codes: 0 success, 1 usage or invalid input, 2 numeric failure under
``--strict``.

Numerical modules are imported lazily so that ``--threads`` can cap the
BLAS/OpenMP pools before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import __version__

log = logging.getLogger("twinlab")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
CONSTRUCT_KINDS = ("ustar", "laminate", "laminate-symmetric", "affine-w", "neumann-affine")
BC_CHOICES = ("top-bottom", "left-right", "neumann")
ACCEPTANCE_CROSSOVER_EPS = "1e-4,3e-4,1e-3,3e-3,1e-2"


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("common")
    g.add_argument("--config", help="YAML/JSON document with option defaults")
    g.add_argument("--out", default="twinlab-out", help="output directory")
    g.add_argument("--threads", type=int, default=None, help="cap worker threads (also TWINLAB_THREADS)")
    g.add_argument("--rng-seed", type=int, default=0)
    g.add_argument("--timing", action="store_true", help="record wall times (makes CSV non-reproducible)")
    g.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    g.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twinlab", description="Two-variant martensite energy laboratory.")
    parser.add_argument("--version", action="version", version=f"twinlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("construct", help="sample an explicit construction")
    p.add_argument("kind", choices=CONSTRUCT_KINDS)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--n", type=int, default=None, help="number of layers (default: optimal rule)")
    p.add_argument("--gamma", type=float, default=1.0, help="load for neumann-affine")
    p.add_argument("--t", type=float, default=None, help="amplitude for neumann-affine (default: optimum)")
    p.add_argument("--N", type=int, default=32, help="grid cells per side")
    _common(p)

    p = sub.add_parser("minimize", help="grid minimisation")
    p.add_argument("--bc", choices=BC_CHOICES, default="top-bottom")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--N", type=int, default=16)
    p.add_argument("--sign-method", choices=("graphcut", "icm"), default="graphcut")
    p.add_argument("--outer-max", type=int, default=200)
    p.add_argument("--cg-rel-tol", type=float, default=1e-8)
    p.add_argument("--random-seeds", type=int, default=0)
    p.add_argument("--x2-invariant", action="store_true")
    p.add_argument("--strict", action="store_true", help="exit 2 if the solver did not converge")
    _common(p)

    p = sub.add_parser("sweep", help="parameter sweeps")
    p.add_argument("kind", choices=("eps", "gamma", "crossover"))
    p.add_argument("--bc", choices=BC_CHOICES, default="top-bottom")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0, help="load for an eps sweep with --bc neumann")
    p.add_argument("--from", dest="eps_from", type=float, default=1e-5)
    p.add_argument("--to", dest="eps_to", type=float, default=1e-2)
    p.add_argument("--points", type=int, default=7)
    p.add_argument("--mode", choices=("analytic", "grid"), default="analytic")
    p.add_argument("--eps", type=float, default=1e-3, help="eps for a gamma sweep")
    p.add_argument("--gamma-max", type=float, default=None, help="load range (default 20 eps^(2/3))")
    p.add_argument("--eps-list", type=_float_list, default=None, help="comma-separated eps values")
    p.add_argument("--strict", action="store_true")
    _common(p)

    p = sub.add_parser("certify", help="duality lower bound for a snapshot")
    p.add_argument("snapshot", help="field snapshot (.twf)")
    p.add_argument("--window", type=float, default=0.25, help="scan planes with |x1| < window")
    _common(p)
    return parser


# -- configuration ---------------------------------------------------------------


def load_config(path) -> dict:
    import yaml

    text = Path(path).read_text()
    data = yaml.safe_load(text) if text.strip() else {}
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a key-value document")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.config:
        try:
            cfg = load_config(ns.config)
        except OSError as exc:
            parser.exit(EXIT_USAGE, f"twinlab: cannot read config: {exc}\n")
        except UsageError as exc:
            parser.exit(EXIT_USAGE, f"twinlab: {exc}\n")
        cfg.pop("command", None)
        sub = parser._subparsers._group_actions[0].choices[ns.command]  # noqa: SLF001
        known = {a.dest for a in sub._actions}  # noqa: SLF001
        unknown = sorted(set(cfg) - known)
        if unknown:
            parser.exit(EXIT_USAGE, f"twinlab: unknown config keys for {ns.command}: {', '.join(unknown)}\n")
        if "eps_list" in cfg and isinstance(cfg["eps_list"], str):
            cfg["eps_list"] = _float_list(cfg["eps_list"])
        sub.set_defaults(**cfg)
        ns = parser.parse_args(argv)
    return ns


def resolved_config(ns: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(ns).items()}
    cfg["version"] = __version__
    return cfg


def _apply_threads(ns):
    threads = ns.threads
    if threads is None and os.environ.get("TWINLAB_THREADS"):
        try:
            threads = int(os.environ["TWINLAB_THREADS"])
        except ValueError:
            raise UsageError("TWINLAB_THREADS must be an integer")
        ns.threads = threads
    if threads is not None:
        if threads < 1:
            raise UsageError("--threads must be at least 1")
        for var in THREAD_VARS:
            os.environ[var] = str(threads)


def _write_json(path: Path, data: dict):
    def default(o):
        if isinstance(o, float) and not math.isfinite(o):
            return str(o)
        if hasattr(o, "item"):
            return o.item()
        if isinstance(o, Path):
            return str(o)
        raise TypeError(f"not serialisable: {type(o).__name__}")

    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=default) + "\n")


def _bc_from_args(ns):
    from .grid import BoundaryCondition

    if ns.bc == "top-bottom":
        return BoundaryCondition.top_bottom()
    if ns.bc == "left-right":
        return BoundaryCondition.left_right(ns.alpha)
    return BoundaryCondition.neumann(ns.gamma)


# -- commands ------------------------------------------------------------------------


def cmd_construct(ns, out: Path, cfg: dict) -> int:
    from . import constructions as C
    from .energy import EnergyDensityModel
    from .grid import (
        BoundaryCondition,
        DisplacementField,
        GridSpec,
        SignField,
        elastic_energy,
        total_energy,
        write_snapshot,
    )

    if not ns.eps > 0:
        raise UsageError("--eps must be positive")
    grid = GridSpec(ns.N)
    X = grid.vertex_mesh()
    report = {"kind": ns.kind}
    if ns.kind == "ustar":
        u = DisplacementField(grid, C.u_star(ns.alpha, X))
        s = None
        relaxed = C.exact_energy_by_quadrature(
            lambda x: C.u_star_strain(ns.alpha, x), model=EnergyDensityModel.QUASICONVEX_ENVELOPE
        )
        report["analytic"] = {"relaxed_energy": relaxed}
        report["grid"] = {"relaxed_energy": elastic_energy(u, model=EnergyDensityModel.QUASICONVEX_ENVELOPE)}
    elif ns.kind in ("laminate", "laminate-symmetric"):
        n = ns.n if ns.n is not None else C.laminate_optimal_n(ns.alpha, ns.eps)
        lam = C.LaminateParams(ns.alpha, n, symmetric=ns.kind == "laminate-symmetric")
        u = DisplacementField(grid, C.laminate_u(lam, X))
        s = SignField.from_function(grid, lambda a, b, c: C.laminate_sign(lam, (a, b, c)))
        report["n"] = n
        report["analytic"] = C.analytic_energy_laminate(lam, ns.eps).to_dict()
        report["grid"] = total_energy(u, s, ns.eps, BoundaryCondition.top_bottom()).to_dict()
    elif ns.kind == "affine-w":
        u = DisplacementField(grid, C.affine_w(ns.alpha, X))
        s = SignField.constant(grid, 1)
        report["analytic"] = C.analytic_energy_affine_w(ns.alpha, ns.eps).to_dict()
        report["grid"] = total_energy(u, s, ns.eps, BoundaryCondition.left_right(ns.alpha)).to_dict()
    else:
        t = ns.t if ns.t is not None else C.neumann_affine_optimum(ns.gamma)[0]
        u = DisplacementField(grid, C.neumann_affine_u(t, X))
        s = SignField.constant(grid, 1)
        report["t"] = t
        report["analytic"] = C.analytic_energy_neumann_affine(t, ns.eps, ns.gamma).to_dict()
        report["grid"] = total_energy(u, s, ns.eps, BoundaryCondition.neumann(ns.gamma)).to_dict()
    snap = out / "field.twf"
    write_snapshot(snap, u, s, meta={"kind": ns.kind, "alpha": ns.alpha, "eps": ns.eps})
    report["snapshot"] = str(snap)
    report["config"] = cfg
    _write_json(out / "energy.json", report)
    print(json.dumps({"analytic": report["analytic"], "grid": report["grid"]}, default=str))
    return EXIT_OK


def cmd_minimize(ns, out: Path, cfg: dict) -> int:
    import csv

    from .grid import GridSpec, write_snapshot
    from .optimizer import ProblemSpec, SolverConfig, family_search, minimize

    if not ns.eps > 0:
        raise UsageError("--eps must be positive")
    bc = _bc_from_args(ns)
    try:
        problem = ProblemSpec(bc, ns.eps, GridSpec(ns.N))
        config = SolverConfig(
            cg_rel_tol=ns.cg_rel_tol,
            outer_max=ns.outer_max,
            rng_seed=ns.rng_seed,
            n_random_seeds=ns.random_seeds,
            sign_method=ns.sign_method,
            x2_invariant=ns.x2_invariant,
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    res = minimize(problem, config)
    fam = family_search(ProblemSpec(bc, ns.eps))
    write_snapshot(out / "field.twf", res.u, res.s, meta={"bc": bc.to_dict(), "eps": ns.eps})
    with open(out / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step", "total"))
        for i, e in enumerate(res.trace):
            w.writerow((i, repr(float(e))))
    monotone = all(b <= a for a, b in zip(res.trace, res.trace[1:]))
    summary = {
        "energy": res.energy.to_dict(),
        "converged": res.converged,
        "cg_converged": res.cg_converged,
        "seed": res.seed_label,
        "seed_energies": res.seed_energies,
        "trace_monotone": monotone,
        "steps": len(res.trace),
        "family": {"kind": fam.kind, "n_used": fam.n_used, "energy": fam.energy.to_dict()},
        "solver": config.to_dict(),
        "config": cfg,
    }
    _write_json(out / "summary.json", summary)
    if not ns.no_figures:
        from .plotting import plot_trace

        plot_trace(res.trace, out / "trace.png")
    print(f"total={res.energy.total:.8g} family={fam.energy.total:.8g} seed={res.seed_label} converged={res.converged}")
    if ns.strict and not (res.converged and res.cg_converged):
        raise NumericFailure("solver did not converge")
    return EXIT_OK


def cmd_sweep(ns, out: Path, cfg: dict) -> int:
    import numpy as np

    from . import scaling as S

    figures = not ns.no_figures
    if ns.kind == "eps":
        eps_list = ns.eps_list or list(np.geomspace(ns.eps_from, ns.eps_to, ns.points))
        eps_list = sorted(float(e) for e in eps_list)
        if any(not e > 0 for e in eps_list):
            raise UsageError("eps values must be positive")
        rows = S.sweep_eps(_bc_from_args(ns), ns.alpha, eps_list, ns.mode, timing=ns.timing)
        S.rows_to_csv(rows, out / "sweep_eps.csv")
        summary = {"rows": [r.to_dict() for r in rows], "config": cfg}
        fit = None
        try:
            fit = S.fit_exponent(rows)
            summary["fit"] = fit.to_dict()
        except ValueError as exc:
            summary["fit"] = None
            summary["fit_error"] = str(exc)
            log.warning("no fit: %s", exc)
            if ns.strict:
                _write_json(out / "summary.json", summary)
                raise NumericFailure(str(exc))
        _write_json(out / "summary.json", summary)
        if figures and all(r.total > 0 for r in rows):
            from .plotting import plot_eps_sweep

            plot_eps_sweep(rows, fit, out / "sweep_eps.png")
        print(f"slope={fit.slope:.6f} r2={fit.r_squared:.6f}" if fit else f"no fit: {summary['fit_error']}")
        return EXIT_OK

    if ns.kind == "gamma":
        if not ns.eps > 0:
            raise UsageError("--eps must be positive")
        glist = None
        if ns.gamma_max is not None:
            glist = list(np.linspace(-ns.gamma_max, ns.gamma_max, max(ns.points, 3)))
        rows, gstar = S.sweep_gamma(ns.eps, glist, timing=ns.timing)
        S.rows_to_csv(rows, out / "sweep_gamma.csv")
        _write_json(out / "summary.json", {"gamma_star": gstar, "eps": ns.eps, "config": cfg})
        if figures:
            from .plotting import plot_gamma_sweep

            plot_gamma_sweep(rows, gstar, out / "sweep_gamma.png")
        print(f"gamma_star={gstar:.8g}")
        if ns.strict and math.isnan(gstar):
            raise NumericFailure("no crossover on the load range")
        return EXIT_OK

    eps_list = ns.eps_list or _float_list(ACCEPTANCE_CROSSOVER_EPS)
    if len(eps_list) < S.MIN_FIT_POINTS:
        raise UsageError(f"crossover sweep needs at least {S.MIN_FIT_POINTS} eps values")
    all_rows, stars = [], []
    for eps in eps_list:
        rows, g = S.sweep_gamma(eps, timing=ns.timing)
        all_rows.extend(rows)
        stars.append(g)
    S.rows_to_csv(all_rows, out / "sweep_crossover.csv")
    if any(math.isnan(g) for g in stars):
        _write_json(out / "summary.json", {"gamma_star": stars, "eps": eps_list, "fit": None, "config": cfg})
        raise NumericFailure("no crossover found for some eps")
    fit = S.fit_loglog(eps_list, stars)
    _write_json(out / "summary.json", {"gamma_star": stars, "eps": eps_list, "fit": fit.to_dict(), "config": cfg})
    if figures:
        from .plotting import plot_crossover

        plot_crossover(eps_list, stars, fit, out / "crossover.png")
    print(f"slope={fit.slope:.6f} r2={fit.r_squared:.6f}")
    return EXIT_OK


def cmd_certify(ns, out: Path, cfg: dict) -> int:
    from .certificate import best_slice_bound, lower_bound_energy
    from .grid import SignField, elastic_energy, read_snapshot

    try:
        u, _, meta = read_snapshot(ns.snapshot)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read snapshot: {exc}")
    try:
        cert = best_slice_bound(u, window=ns.window)
    except ValueError as exc:
        raise UsageError(str(exc))
    el = elastic_energy(u, SignField.from_strain(u))
    report = cert.to_dict()
    report.update(
        {
            "elastic_energy": el,
            "slab_energy": lower_bound_energy(u, cert.plane),
            "snapshot": str(ns.snapshot),
            "snapshot_meta": meta,
            "config": cfg,
        }
    )
    _write_json(out / "certificate.json", report)
    print(f"bound={cert.bound:.8g} x1*={cert.x1_star:.6g} lambda={cert.lam:.6g} tol={cert.tol:.3g} elastic={el:.8g}")
    return EXIT_OK


COMMANDS = {"construct": cmd_construct, "minimize": cmd_minimize, "sweep": cmd_sweep, "certify": cmd_certify}


def main(argv=None) -> int:
    ns = parse_args(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_threads(ns)
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)
        cfg = resolved_config(ns)
        _write_json(out / "run_config.json", cfg)
        return COMMANDS[ns.command](ns, out, cfg)
    except (UsageError, ValueError) as exc:
        # ValueError: parameters rejected by the library (bad alpha, odd N, ...)
        print(f"twinlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailure as exc:
        print(f"twinlab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
