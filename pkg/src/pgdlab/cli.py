"""Command-line interface.

Subcommands: ``solve`` (run PGD on a problem file), ``analyze`` (convergence
certificates per step size), ``experiment`` (seeded random instance plus a
theory-versus-measurement bundle), and ``verify`` (property suites).

Exit codes: 0 success, 1 input or domain error, 2 divergence,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import analysis
from .applications import analyze_problem
from .empirics import run_experiment
from .engine import run_pgd
from .errors import (
    ConstraintDomainError,
    DivergenceError,
    GenerationError,
    InfeasibleStartWarning,
    NoCertificateError,
    ProblemFileError,
    RateEstimationError,
    StationarityError,
)
from .problem_io import load_problem
from .verify import SUITES, run_suites

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DIVERGED = 2
EXIT_VERIFY = 3


def _default_seed():
    raw = os.environ.get("PGDLAB_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"PGDLAB_SEED must be an integer, got {raw!r}")


def cmd_solve(args):
    problem, x_star, x0 = load_problem(args.problem)
    if args.eta <= 0:
        raise ProblemFileError("--eta", "step size must be positive")
    if x0 is None:
        rng = np.random.default_rng(args.seed)
        x0 = problem.constraint.random_member(rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InfeasibleStartWarning)
        trace = run_pgd(
            problem,
            args.eta,
            x0,
            max_iters=args.max_iters,
            error_floor=args.tol,
            x_ref=x_star,
        )
    if trace.x0_projected:
        print("notice: x0 was infeasible and has been projected onto the constraint set")
    if args.out:
        trace.write_csv(args.out)
        print(f"trace written to {args.out}")
    print(f"iterations: {trace.n_iterations}")
    print(f"stop reason: {trace.stop_reason}")
    print(f"final objective: {trace.objectives[-1]:.6e}")
    if trace.errors is not None:
        print(f"final error: {trace.errors[-1]:.6e}")
    return EXIT_OK


def cmd_analyze(args):
    problem, x_star, _ = load_problem(args.problem)
    report = analyze_problem(problem, x_star)
    if x_star is None:
        x_star = report.x_star

    etas = list(args.eta) if args.eta else []
    if report.eta_opt is not None and not etas:
        etas = [0.5 * report.eta_opt, report.eta_opt]

    out = {
        "application": report.to_json(etas),
        "etas": [],
    }
    for eta in etas:
        entry = {"eta": float(eta)}
        try:
            conv = analysis.analyze_fixed_point(problem, x_star, eta)
            entry["convergence"] = conv.to_json(args.eps)
            if conv.certified and args.eps:
                # Bounds need an initial error; report them per unit of the
                # certified radius when available.
                if conv.region_radius is not None and np.isfinite(conv.region_radius):
                    initial = 0.5 * conv.region_radius
                    entry["iteration_bounds"] = [
                        {
                            "accuracy": float(eps),
                            "initial_error": initial,
                            "bound": conv.bound(eps, initial_error=initial),
                        }
                        for eps in args.eps
                    ]
                else:
                    entry["iteration_bounds"] = [
                        {
                            "accuracy": float(eps),
                            "bound": analysis.iterations_to_accuracy(
                                eps, conv.rate, conv.eigvec_condition, 1.0
                            ),
                        }
                        for eps in args.eps
                    ]
        except (NoCertificateError, ConstraintDomainError) as exc:
            entry["convergence"] = None
            entry["no_certificate"] = str(exc)
        out["etas"].append(entry)

    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(text + "\n")
        print(f"report written to {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_experiment(args):
    params = {}
    for key in ("m", "n", "p", "r", "s"):
        value = getattr(args, key)
        if value is not None:
            params[key] = value
    if args.gamma is not None:
        params["gamma"] = args.gamma
    if args.residual:
        params["residual"] = True

    required = {
        "lcls": ("m", "n", "p"),
        "iht": ("m", "n", "s"),
        "sphere": ("m", "n"),
        "mcp": ("m", "n", "r", "s"),
    }[args.kind]
    missing = [key for key in required if key not in params]
    if missing:
        raise ProblemFileError("flags", f"{args.kind} needs --" + ", --".join(missing))

    etas = args.etas if args.etas else _auto_etas(args)
    bundle = run_experiment(
        args.kind,
        params,
        etas,
        args.seed,
        outdir=args.outdir,
        max_iters=args.max_iters,
    )
    for run in bundle["runs"]:
        eta = run["eta"]
        rho = run.get("theoretical_rate")
        rho_hat = run.get("rho_hat")
        gap = run.get("relative_gap")
        flag = "" if run["admissible"] else "  [no certificate]"
        parts = [f"eta={eta:g}"]
        parts.append(f"rate={rho:.6f}" if rho is not None else "rate=n/a")
        parts.append(f"measured={rho_hat:.6f}" if rho_hat is not None else "measured=n/a")
        if gap is not None:
            parts.append(f"gap={100 * gap:.2f}%")
        if run.get("diverged"):
            parts.append("DIVERGED")
        print("  ".join(parts) + flag)
    if args.outdir:
        print(f"bundle written to {args.outdir}")
    return EXIT_OK


def _auto_etas(args):
    """Default step grid: 0.5, 1.0, and the optimal step of the instance."""
    from .applications import analyze_problem as _ap
    from .empirics import make_instance

    params = {
        key: getattr(args, key)
        for key in ("m", "n", "p", "r", "s")
        if getattr(args, key) is not None
    }
    if args.gamma is not None:
        params["gamma"] = args.gamma
    problem, x_star = make_instance(args.kind, params, args.seed)
    report = _ap(problem, x_star)
    etas = [0.5, 1.0]
    if report.eta_opt is not None:
        etas.append(report.eta_opt)
    return etas


def cmd_verify(args):
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = run_suites(names, seed=args.seed)
    failures = [r for r in results if not r.ok]
    for result in results:
        status = "PASS" if result.ok else "FAIL"
        print(f"{status} {result.name}: {result.detail}")
    print(f"{len(results) - len(failures)}/{len(results)} checks passed")
    return EXIT_OK if not failures else EXIT_VERIFY


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pgdlab",
        description="Projected gradient descent for constrained least squares, "
        "with local convergence certificates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run PGD on a problem file")
    p_solve.add_argument("problem", help="problem JSON file")
    p_solve.add_argument("--eta", type=float, required=True, help="step size")
    p_solve.add_argument("--max-iters", type=int, default=10_000, dest="max_iters")
    p_solve.add_argument("--tol", type=float, default=None,
                         help="stop when the error to x_star falls below this")
    p_solve.add_argument("--out", default=None, help="trace CSV path")
    p_solve.add_argument("--seed", type=int, default=_default_seed())
    p_solve.set_defaults(func=cmd_solve)

    p_an = sub.add_parser("analyze", help="convergence certificates for a problem file")
    p_an.add_argument("problem", help="problem JSON file")
    p_an.add_argument("--eta", type=float, nargs="*", default=None)
    p_an.add_argument("--eps", type=float, nargs="*", default=[1e-2, 1e-4, 1e-6, 1e-8])
    p_an.add_argument("--out", default=None, help="report JSON path")
    p_an.set_defaults(func=cmd_analyze)

    p_ex = sub.add_parser("experiment", help="seeded random instance, theory vs measurement")
    p_ex.add_argument("kind", choices=["lcls", "iht", "sphere", "mcp"])
    p_ex.add_argument("--m", type=int)
    p_ex.add_argument("--n", type=int)
    p_ex.add_argument("--p", type=int)
    p_ex.add_argument("--r", type=int)
    p_ex.add_argument("--s", type=int)
    p_ex.add_argument("--gamma", type=float)
    p_ex.add_argument("--residual", action="store_true",
                      help="iht: keep a gradient component off the support")
    p_ex.add_argument("--etas", type=float, nargs="*", default=None)
    p_ex.add_argument("--seed", type=int, default=_default_seed())
    p_ex.add_argument("--outdir", default=None)
    p_ex.add_argument("--max-iters", type=int, default=20_000, dest="max_iters")
    p_ex.set_defaults(func=cmd_experiment)

    p_ver = sub.add_parser("verify", help="run the property suites")
    p_ver.add_argument("--suite", choices=["projections", "rates", "bounds", "all"],
                       default="all")
    p_ver.add_argument("--seed", type=int, default=_default_seed())
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ProblemFileError, StationarityError, ConstraintDomainError,
            GenerationError, RateEstimationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
