"""Closed-form convergence analysis for four concrete problem families.

Every analysis follows the same outline: identify the tangent basis of the
constraint set at the solution, compress the least-squares curvature onto it,
and read the admissible step sizes, the asymptotic rate, the optimal step, and
the certified region from the extreme eigenvalues of the compressed matrix.

Families: equality-constrained least squares (affine), sparse recovery via
hard thresholding, least squares on the unit sphere, and low-rank matrix
completion.
"""

from __future__ import annotations

import numpy as np

from .analysis import optimal_step
from .constraints import RANK_RTOL, SQRT2, AffineConstraint, LowRankConstraint
from .engine import Problem
from .errors import NoCertificateError, StationarityError

RANK_CURVATURE = 4.0 * (1.0 + SQRT2)
FULL_RANK_RTOL = 1e-10
STATIONARITY_TOL = 1e-10


def _ata_extremes(A):
    """Largest and smallest eigenvalues of A^T A."""
    A = np.asarray(A, dtype=float)
    sig = np.linalg.svd(A, compute_uv=False)
    hi = float(sig[0] ** 2)
    lo = float(sig[-1] ** 2) if A.shape[0] >= A.shape[1] else 0.0
    return hi, lo


class ApplicationReport:
    """Per-family convergence summary around a certified solution.

    ``rate(eta)`` and ``region(eta)`` evaluate the closed forms; ``region``
    raises NoCertificateError outside the admissible step range.
    """

    def __init__(self, kind, tangent_basis, lam_max, lam_min, eta_max, flags,
                 x_star, ata_extremes, gamma=None, fixed_point_eta_max=np.inf,
                 details=None):
        self.kind = kind
        self.tangent_basis = tangent_basis
        self.lam_max = float(lam_max)
        self.lam_min = float(lam_min)
        self.gamma = None if gamma is None else float(gamma)
        self.eta_max = float(eta_max)
        self.fixed_point_eta_max = float(fixed_point_eta_max)
        self.flags = dict(flags)
        self.x_star = x_star
        self.ata_extremes = (float(ata_extremes[0]), float(ata_extremes[1]))
        self.details = dict(details or {})

        self.eta_opt = None
        self.rho_opt = None
        if self.flags.get("K_full_rank", False):
            if self.kind == "sphere":
                self.eta_opt = 2.0 / (self.lam_max + self.lam_min)
                self.rho_opt = (self.lam_max - self.lam_min) / (
                    self.lam_max + self.lam_min - 2.0 * self.gamma
                )
            else:
                self.eta_opt, self.rho_opt = optimal_step(self.lam_max, self.lam_min)
            self.flags["eta_opt_admissible"] = bool(self.eta_opt < self.eta_max)

    @property
    def certified(self):
        return all(
            self.flags.get(key, False)
            for key in ("K_full_rank", "stationarity_ok", "fixed_point_ok")
        )

    def admissible(self, eta):
        return self.certified and 0.0 < eta < self.eta_max

    def contraction(self, eta):
        """Unconstrained gradient-descent contraction factor at step ``eta``."""
        hi, lo = self.ata_extremes
        return max(abs(1.0 - eta * hi), abs(1.0 - eta * lo))

    def rate(self, eta):
        """Asymptotic linear rate at step ``eta``."""
        eta = float(eta)
        if eta <= 0:
            raise ValueError("eta must be positive")
        base = max(abs(1.0 - eta * self.lam_max), abs(1.0 - eta * self.lam_min))
        if self.kind != "sphere":
            return float(base)
        scale = 1.0 - eta * self.gamma
        if scale <= 0:
            raise NoCertificateError(
                f"sphere: not a fixed point at eta={eta:g} (1 - eta*gamma <= 0)"
            )
        return float(base / scale)

    def quad_coefficient(self, eta):
        """Coefficient of the squared error in the one-step error recursion."""
        eta = float(eta)
        if self.kind in ("lcls", "iht"):
            return 0.0
        u = self.contraction(eta)
        if self.kind == "sphere":
            t = u / (1.0 - eta * self.gamma)
            return float(2.0 * (t**2 + t))
        return float(RANK_CURVATURE * (u**2 + u))

    def region(self, eta):
        """Radius of the certified ball of linear convergence at step ``eta``.

        The minimum of the two linearization radii (scaled by the contraction
        factor) and the quadratic-term radius (1 - rate) / quad_coefficient.
        """
        eta = float(eta)
        if not self.admissible(eta):
            raise NoCertificateError(f"eta={eta:g} is outside the admissible interval")
        if self.kind == "lcls":
            return np.inf
        if self.kind == "iht":
            smallest = self.details["smallest_magnitude"]
            grad_inf = self.details["gradient_sup_norm"]
            u = self.contraction(eta)
            return float(
                min(smallest / SQRT2, (smallest - eta * grad_inf) / (SQRT2 * u))
            )
        rho = self.rate(eta)
        return float((1.0 - rho) / self.quad_coefficient(eta))

    def sample(self, etas):
        """Evaluate rate and region on a grid, marking inadmissible steps."""
        rows = []
        for eta in etas:
            row = {"eta": float(eta), "admissible": self.admissible(eta)}
            try:
                row["rate"] = self.rate(eta)
            except (NoCertificateError, ValueError):
                row["rate"] = None
            try:
                row["region"] = _encode(self.region(eta))
            except NoCertificateError:
                row["region"] = None
            rows.append(row)
        return rows

    def to_json(self, etas=()):
        return {
            "kind": self.kind,
            "lam_max": self.lam_max,
            "lam_min": self.lam_min,
            "gamma": self.gamma,
            "eta_max": _encode(self.eta_max),
            "eta_opt": self.eta_opt,
            "rho_opt": self.rho_opt,
            "certified": self.certified,
            "flags": self.flags,
            "tangent_dimension": int(self.tangent_basis.shape[1]),
            "rate_table": self.sample(etas),
        }


def _encode(v):
    v = float(v)
    return "inf" if np.isinf(v) else v


def _compressed_eigs(A, basis):
    AB = A @ basis
    lams = np.linalg.eigvalsh(AB.T @ AB)
    return float(lams[-1]), float(lams[0])


def analyze_lcls(A, b, C, d):
    """Equality-constrained least squares: min 0.5||Ax-b||^2 s.t. Cx = d.

    Also computes the constrained solution by solving the normal equations in
    the coordinates of the constraint's null-space basis; the certificate is
    global, so the region is unbounded.
    """
    constraint = AffineConstraint(C, d)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    basis = constraint.null_basis
    AB = A @ basis
    K = AB.T @ AB
    lams = np.linalg.eigvalsh(K)
    lam_max, lam_min = float(lams[-1]), float(lams[0])
    full_rank = lam_min > FULL_RANK_RTOL * max(lam_max, 1e-300)

    rhs = AB.T @ (b - A @ constraint.offset)
    if full_rank:
        y = np.linalg.solve(K, rhs)
    else:
        y = np.linalg.lstsq(K, rhs, rcond=None)[0]
    x_star = basis @ y + constraint.offset

    flags = {
        "K_full_rank": bool(full_rank),
        "stationarity_ok": True,
        "fixed_point_ok": True,
    }
    eta_max = 2.0 / lam_max if lam_max > 0 else np.inf
    return ApplicationReport(
        "lcls", basis, lam_max, lam_min, eta_max, flags, x_star,
        ata_extremes=_ata_extremes(A), details={"constraint": constraint},
    )


def analyze_iht(A, b, x_star, tol=STATIONARITY_TOL):
    """Sparse recovery by hard thresholding around a stationary s-sparse point."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    support = np.flatnonzero(x_star)
    s = support.size
    if s == 0:
        raise StationarityError("x_star has no nonzero entries")

    v = A.T @ (A @ x_star - b)
    residual = np.linalg.norm(v[support]) / (1.0 + np.linalg.norm(v))
    if residual > tol:
        raise StationarityError(
            f"x_star is not stationary: gradient on the support has residual {residual:.3e}"
        )

    basis = np.zeros((x_star.size, s))
    basis[support, np.arange(s)] = 1.0
    lam_max, lam_min = _compressed_eigs(A, basis)
    full_rank = lam_min > FULL_RANK_RTOL * max(lam_max, 1e-300)

    smallest = float(np.min(np.abs(x_star[support])))
    off = np.ones(x_star.size, dtype=bool)
    off[support] = False
    grad_inf = float(np.max(np.abs(v[off]))) if off.any() else 0.0
    fixed_point_cap = smallest / grad_inf if grad_inf > 0 else np.inf
    eta_max = min(2.0 / lam_max if lam_max > 0 else np.inf, fixed_point_cap)

    flags = {
        "K_full_rank": bool(full_rank),
        "stationarity_ok": True,
        "fixed_point_ok": bool(eta_max > 0),
    }
    return ApplicationReport(
        "iht", basis, lam_max, lam_min, eta_max, flags, x_star,
        ata_extremes=_ata_extremes(A), fixed_point_eta_max=fixed_point_cap,
        details={
            "s": s,
            "support": support,
            "smallest_magnitude": smallest,
            "gradient_sup_norm": grad_inf,
        },
    )


def analyze_sphere(A, b, x_star, tol=STATIONARITY_TOL):
    """Least squares on the unit sphere around a stationary unit vector.

    The gradient at a stationary point is collinear with the point; its signed
    length (the constraint multiplier) enters the admissible step range, the
    rate, and the region. A certificate needs the multiplier strictly below
    the smallest tangent eigenvalue.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    if abs(np.linalg.norm(x_star) - 1.0) > tol:
        raise StationarityError("x_star is not on the unit sphere")

    v = A.T @ (A @ x_star - b)
    gamma = float(x_star @ v)
    residual = np.linalg.norm(v - gamma * x_star) / (1.0 + np.linalg.norm(v))
    if residual > tol:
        raise StationarityError(
            f"x_star is not a stationary point: tangential gradient residual {residual:.3e}"
        )

    # Deterministic orthonormal completion of x_star.
    q, _ = np.linalg.qr(x_star.reshape(-1, 1), mode="complete")
    basis = q[:, 1:]
    lam_max, lam_min = _compressed_eigs(A, basis)

    local_min = gamma < lam_min
    eta_max = np.inf if gamma <= -lam_max else 2.0 / (gamma + lam_max)
    flags = {
        "K_full_rank": bool(local_min),
        "stationarity_ok": True,
        "fixed_point_ok": bool(local_min),
    }
    return ApplicationReport(
        "sphere", basis, lam_max, lam_min, eta_max, flags, x_star, gamma=gamma,
        ata_extremes=_ata_extremes(A),
    )


def rank_tangent_basis(U, V):
    """Orthonormal basis of the tangent space to the rank-r matrices at U S V^T.

    Columns are Kronecker products pairing the row-space directions with all
    column directions and the row-space complement with the column-space
    directions; stacking them reproduces the tangent projector.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
        raise ValueError("U and V must be matrices with the same number of columns")
    r = U.shape[1]
    for name, M in (("U", U), ("V", V)):
        defect = np.linalg.norm(M.T @ M - np.eye(r))
        if defect > 1e-10:
            raise ValueError(f"{name} columns are not orthonormal (defect {defect:.3e})")
    qu, _ = np.linalg.qr(U, mode="complete")
    qv, _ = np.linalg.qr(V, mode="complete")
    U_perp = qu[:, r:]
    V_perp = qv[:, r:]
    blocks = [np.kron(V, U), np.kron(V, U_perp), np.kron(V_perp, U)]
    return np.hstack([blk for blk in blocks if blk.shape[1] > 0])


def analyze_mcp(observed, omega, X_star, r=None, tol=STATIONARITY_TOL):
    """Low-rank matrix completion around an exactly consistent rank-r solution.

    ``omega`` holds column-major flat indices into the vectorized matrix and
    ``observed`` the corresponding values; X_star must have rank exactly r and
    reproduce every observation.
    """
    X_star = np.asarray(X_star, dtype=float)
    if X_star.ndim != 2:
        raise ValueError("X_star must be a matrix")
    m_mat, n_mat = X_star.shape
    omega = np.asarray(omega, dtype=int).reshape(-1)
    observed = np.asarray(observed, dtype=float).reshape(-1)
    if omega.size != observed.size:
        raise ValueError("omega and observed must have matching lengths")
    if omega.size == 0:
        raise ValueError("need at least one observation")
    if np.unique(omega).size != omega.size:
        raise ValueError("omega contains repeated indices")
    if omega.min() < 0 or omega.max() >= m_mat * n_mat:
        raise ValueError("omega index out of range")

    U, sig, Vt = np.linalg.svd(X_star, full_matrices=False)
    cutoff = RANK_RTOL * (sig[0] if sig[0] > 0 else 1.0)
    numerical_rank = int(np.count_nonzero(sig > cutoff))
    if r is None:
        r = numerical_rank
    r = int(r)
    if numerical_rank != r:
        raise StationarityError(
            f"X_star has numerical rank {numerical_rank}, expected exactly {r}"
        )

    x_star = X_star.reshape(-1, order="F")
    fit = np.linalg.norm(x_star[omega] - observed) / (1.0 + np.linalg.norm(observed))
    if fit > tol:
        raise StationarityError(
            f"X_star does not reproduce the observations (residual {fit:.3e})"
        )

    basis = rank_tangent_basis(U[:, :r], Vt[:r].T)
    B = basis[omega, :]
    K = B.T @ B
    lams = np.linalg.eigvalsh(K)
    lam_max, lam_min = float(lams[-1]), float(lams[0])
    full_rank = lam_min > FULL_RANK_RTOL * max(lam_max, 1e-300)

    flags = {
        "K_full_rank": bool(full_rank),
        "stationarity_ok": True,
        "fixed_point_ok": True,
    }
    eta_max = 2.0 / lam_max if lam_max > 0 else np.inf
    # The sampling operator is a 0/1 diagonal in the vectorized coordinates.
    fully_observed = omega.size == m_mat * n_mat
    extremes = (1.0, 1.0 if fully_observed else 0.0)
    return ApplicationReport(
        "mcp", basis, lam_max, lam_min, eta_max, flags, x_star,
        ata_extremes=extremes,
        details={"shape": (m_mat, n_mat), "r": r, "omega": omega, "observed": observed},
    )


def mcp_problem(observed, omega, shape, r):
    """Vectorized completion problem: mask objective plus a rank constraint."""
    m_mat, n_mat = shape
    n = m_mat * n_mat
    omega = np.asarray(omega, dtype=int).reshape(-1)
    A = np.zeros((n, n))
    A[omega, omega] = 1.0
    b = np.zeros(n)
    b[omega] = np.asarray(observed, dtype=float).reshape(-1)
    return Problem(A, b, LowRankConstraint(r, shape))


def analyze_problem(problem, x_star=None):
    """Dispatch a problem to the matching family analysis."""
    spec = problem.constraint
    if spec.kind == "affine":
        return analyze_lcls(problem.A, problem.b, spec.C, spec.d)
    if x_star is None:
        raise ValueError(f"analysis of a {spec.kind} problem needs x_star")
    if spec.kind == "sparse":
        return analyze_iht(problem.A, problem.b, x_star)
    if spec.kind == "sphere":
        return analyze_sphere(problem.A, problem.b, x_star)
    if spec.kind == "lowrank":
        diag = np.diag(problem.A)
        mask_ok = (
            np.allclose(problem.A, np.diag(diag), atol=1e-12)
            and np.all((np.abs(diag) < 1e-12) | (np.abs(diag - 1.0) < 1e-12))
        )
        if not mask_ok:
            raise ValueError(
                "low-rank analysis requires a completion-structured objective "
                "(0/1 diagonal sampling operator)"
            )
        omega = np.flatnonzero(diag > 0.5)
        off = np.ones(diag.size, dtype=bool)
        off[omega] = False
        if np.any(np.abs(problem.b[off]) > 1e-12):
            raise ValueError("observations must vanish outside the sampled set")
        X_star = np.asarray(x_star, dtype=float).reshape(spec.shape, order="F")
        return analyze_mcp(problem.b[omega], omega, X_star, spec.r)
    raise ValueError(f"unknown constraint kind {spec.kind!r}")
