"""Random instances, empirical rate estimation, and experiment bundles.

All randomness flows through ``numpy.random.default_rng`` (PCG64), so a given
seed reproduces an instance bit for bit. Instance generators return a problem
together with a solution that is stationary by construction; ``run_experiment``
drives PGD across a step-size grid and compares measured contraction rates
against the closed-form predictions.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .analysis import iterations_to_accuracy, transient_offset
from .applications import analyze_problem, mcp_problem
from .constraints import AffineConstraint, SparsityConstraint, SphereConstraint
from .engine import ERROR_FLOOR_SCALE, Problem, certify_stationary, run_pgd
from .errors import (
    DivergenceError,
    GenerationError,
    NoCertificateError,
    RateEstimationError,
)

BOUND_ACCURACIES = (1e-2, 1e-4, 1e-6, 1e-8)


@dataclass(frozen=True)
class RateEstimate:
    """Geometric-mean contraction ratio over the usable tail of a trace."""

    rho_hat: float
    window: tuple
    per_step_ratios: np.ndarray
    floor_hit: bool


def estimate_rate(trace, burn_in_fraction=0.5, floor=None):
    """Estimate the asymptotic contraction rate from recorded errors.

    Uses the geometric mean of consecutive error ratios over the tail window,
    skipping the early transient and everything at or below the noise floor.
    """
    if trace.errors is None:
        raise RateEstimationError("trace has no error sequence (no reference point)")
    errors = np.asarray(trace.errors, dtype=float)
    if floor is None:
        floor = trace.error_floor if trace.error_floor is not None else 0.0
    above = np.flatnonzero(errors > floor)
    if above.size == 0:
        raise RateEstimationError("no errors above the floor")
    k_end = int(above[-1])
    k_start = int(np.floor(burn_in_fraction * k_end))
    usable = k_end - k_start
    if usable < 20:
        raise RateEstimationError(
            f"only {usable} usable iterations after burn-in; need at least 20"
        )
    window = errors[k_start : k_end + 1]
    if np.any(window <= 0):
        raise RateEstimationError("window contains zero errors")
    ratios = window[1:] / window[:-1]
    rho_hat = float(np.exp(np.mean(np.log(ratios))))
    return RateEstimate(
        rho_hat=rho_hat,
        window=(k_start, k_end),
        per_step_ratios=ratios,
        floor_hit=bool(errors.min() <= floor),
    )


def make_lcls_instance(m, n, p, seed):
    """Random equality-constrained least squares with its exact solution."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    C = rng.standard_normal((p, n))
    d = C @ rng.standard_normal(n)
    b = rng.standard_normal(m)
    problem = Problem(A, b, AffineConstraint(C, d))
    report = analyze_problem(problem)
    return problem, report.x_star


def make_iht_instance(m, n, s, seed, residual=False):
    """Random sparse-recovery instance around a stationary s-sparse point.

    With ``residual`` the observation keeps a component in the left null space
    of the compressed sensing matrix, so the gradient at the solution is
    nonzero off the support.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    support = np.sort(rng.choice(n, size=s, replace=False))
    x_star = np.zeros(n)
    x_star[support] = rng.uniform(0.5, 2.0, size=s) * rng.choice([-1.0, 1.0], size=s)
    b = A @ x_star
    if residual:
        AS = A[:, support]
        q, _ = np.linalg.qr(AS, mode="complete")
        left_null = q[:, s:]
        w = left_null @ rng.standard_normal(m - s)
        w *= 0.1 / max(np.linalg.norm(w), 1e-300)
        b = b - w
    problem = Problem(A, b, SparsityConstraint(s, n))
    _check_generated(problem, x_star)
    return problem, x_star


def make_sphere_instance(m, n, gamma, seed, max_tries=100):
    """Unit-norm least squares whose solution has the requested multiplier.

    Retries until the multiplier sits below the smallest tangent eigenvalue,
    which is what certifies the solution as a strict local minimum.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        A = rng.standard_normal((m, n))
        x_star = rng.standard_normal(n)
        x_star /= np.linalg.norm(x_star)
        gram = A.T @ A
        b = A @ x_star - gamma * (A @ np.linalg.solve(gram, x_star))
        q, _ = np.linalg.qr(x_star.reshape(-1, 1), mode="complete")
        AB = A @ q[:, 1:]
        lam_min = float(np.linalg.eigvalsh(AB.T @ AB)[0])
        if gamma < lam_min:
            problem = Problem(A, b, SphereConstraint(n))
            _check_generated(problem, x_star)
            return problem, x_star
    raise GenerationError(
        f"could not draw a sphere instance with multiplier {gamma} below the "
        f"smallest tangent eigenvalue in {max_tries} tries"
    )


def make_mcp_instance(m_mat, n_mat, r, s, seed):
    """Random matrix completion: rank-r product factors, uniform sampling."""
    if not 0 < s < m_mat * n_mat:
        raise ValueError("need 0 < s < m*n observations")
    if r > min(m_mat, n_mat):
        raise ValueError("rank exceeds matrix dimensions")
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((m_mat, r))
    G = rng.standard_normal((n_mat, r))
    X_star = F @ G.T
    sig = np.linalg.svd(X_star, compute_uv=False)
    if sig[r - 1] / sig[0] <= 1e-8:
        raise GenerationError("generated factors are numerically rank deficient")
    omega = np.sort(rng.choice(m_mat * n_mat, size=s, replace=False))
    x_star = X_star.reshape(-1, order="F")
    problem = mcp_problem(x_star[omega], omega, (m_mat, n_mat), r)
    _check_generated(problem, x_star)
    return problem, X_star


def _check_generated(problem, x_star, tol=1e-10):
    x_ref = np.asarray(x_star, dtype=float).reshape(-1, order="F")
    cert = certify_stationary(problem, x_ref, eta=1.0 / (1.0 + np.linalg.norm(problem.A) ** 2))
    scale = 1.0 + np.linalg.norm(x_ref)
    if cert.stationarity_residual > tol * scale:
        raise GenerationError(
            f"generated point is not stationary (residual {cert.stationarity_residual:.3e})"
        )


def make_instance(kind, params, seed):
    """Uniform entry point used by the CLI; returns (problem, x_star_vector)."""
    if kind == "lcls":
        problem, x_star = make_lcls_instance(
            params["m"], params["n"], params["p"], seed
        )
    elif kind == "iht":
        problem, x_star = make_iht_instance(
            params["m"], params["n"], params["s"], seed,
            residual=params.get("residual", False),
        )
    elif kind == "sphere":
        problem, x_star = make_sphere_instance(
            params["m"], params["n"], params.get("gamma", -0.5), seed
        )
    elif kind == "mcp":
        problem, X_star = make_mcp_instance(
            params["m"], params["n"], params["r"], params["s"], seed
        )
        x_star = X_star.reshape(-1, order="F")
    else:
        raise ValueError(f"unknown experiment kind {kind!r}")
    return problem, x_star


def _start_point(problem, x_star, region, rng, offset=None):
    """Pick a feasible start: half the certified radius,or a fixed offset when
    the certificate is global. Shrinks until the projected point is inside."""
    spec = problem.constraint
    direction = rng.standard_normal(spec.n)
    direction /= np.linalg.norm(direction)
    if offset is None:
        offset = 1e3 if np.isinf(region) else 0.5 * region
    target = offset
    for _ in range(80):
        x0 = spec.project(x_star + target * direction)
        dist = np.linalg.norm(x0 - x_star)
        if dist > 0:
            # Rescale along the feasible displacement to hit the target length.
            x0 = spec.project(x_star + target * (x0 - x_star) / dist)
            dist = np.linalg.norm(x0 - x_star)
        if dist < region and dist > 0:
            return x0, float(dist)
        target *= 0.5
    raise GenerationError("could not place a feasible start inside the region")


def run_experiment(kind, params, etas, seed, outdir=None, max_iters=20_000,
                   init_offset=None):
    """Run PGD over a step grid and compare measured rates with theory.

    Returns the bundle dictionary; when ``outdir`` is given also writes
    ``manifest.json`` plus one ``trace_eta_<value>.csv`` per step size.
    """
    problem, x_star = make_instance(kind, params, seed)
    report = analyze_problem(problem, x_star)
    rng = np.random.default_rng(seed + 1)

    if outdir is not None:
        os.makedirs(outdir, exist_ok=True)

    runs = []
    for eta in etas:
        eta = float(eta)
        row = {"eta": eta, "admissible": report.admissible(eta)}
        try:
            row["theoretical_rate"] = report.rate(eta)
        except (NoCertificateError, ValueError):
            row["theoretical_rate"] = None
        region = None
        if row["admissible"]:
            region = report.region(eta)
            row["region_radius"] = "inf" if np.isinf(region) else region
        else:
            row["region_radius"] = None

        if region is not None:
            x0, initial_error = _start_point(problem, x_star, region, rng, init_offset)
        else:
            scale = 1e-3 * (1.0 + np.linalg.norm(x_star))
            x0, initial_error = _start_point(problem, x_star, np.inf, rng, scale)
        row["initial_error"] = initial_error

        floor = ERROR_FLOOR_SCALE * (1.0 + np.linalg.norm(x_star))
        if row["admissible"]:
            floor = min(floor, initial_error * min(BOUND_ACCURACIES) / 3.0)
        try:
            trace = run_pgd(
                problem, eta, x0, max_iters=max_iters, error_floor=floor, x_ref=x_star
            )
            row["stop_reason"] = trace.stop_reason
            row["diverged"] = False
        except DivergenceError as exc:
            row["stop_reason"] = "diverged"
            row["diverged"] = True
            row["divergence_iteration"] = exc.iteration
            runs.append(row)
            continue

        try:
            estimate = estimate_rate(trace)
            row["rho_hat"] = estimate.rho_hat
            row["window"] = list(estimate.window)
        except RateEstimationError as exc:
            row["rho_hat"] = None
            row["estimate_error"] = str(exc)

        theory = row["theoretical_rate"]
        if theory is not None and theory > 0 and row.get("rho_hat") is not None:
            row["relative_gap"] = abs(row["rho_hat"] - theory) / theory

        if row["admissible"]:
            row["bound_checks"] = _bound_checks(report, eta, trace, initial_error)

        if outdir is not None:
            name = f"trace_eta_{eta:g}.csv"
            trace.write_csv(os.path.join(outdir, name))
            row["csv"] = name
        runs.append(row)

    bundle = {
        "kind": kind,
        "params": dict(params),
        "seed": int(seed),
        "etas": [float(e) for e in etas],
        "application": report.to_json(etas),
        "runs": runs,
    }
    if outdir is not None:
        with open(os.path.join(outdir, "manifest.json"), "w", encoding="ascii") as fh:
            json.dump(bundle, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return bundle


def _bound_checks(report, eta, trace, initial_error):
    """Compare iterations-to-accuracy against the certified bound.

    Uses the family's closed forms (all four have a symmetric update, so the
    eigenvector condition number is one and the error fraction is the initial
    error over the quadratic-term radius).
    """
    rate = report.rate(eta)
    if not 0.0 < rate < 1.0:
        return None
    quad = report.quad_coefficient(eta)
    fraction = quad * initial_error / (1.0 - rate)
    if fraction >= 1.0:
        return None
    offset = 1.0 if fraction == 0.0 else transient_offset(rate, fraction)
    errors = trace.errors
    checks = []
    for accuracy in BOUND_ACCURACIES:
        target = accuracy * errors[0]
        hit = np.flatnonzero(errors <= target)
        iterations = int(hit[0]) if hit.size else None
        bound = iterations_to_accuracy(accuracy, rate, 1.0, offset)
        checks.append(
            {
                "accuracy": accuracy,
                "iterations": iterations,
                "bound": bound,
                "ok": iterations is not None and iterations <= bound,
            }
        )
    return checks
