"""Local convergence theory for fixed-step projected gradient descent.

Given a fixed point x* of the iteration and its gradient step z = x* - eta*g,
the linearized update matrix is

    H = dP(z) (I - eta A^T A) dP(x*).

Its spectral radius is the asymptotic linear rate; together with the
linearization constants of the projection at x* and z it yields the radius of
the ball around x* inside which linear convergence is certified, and an
explicit bound on the number of iterations needed to reach a relative
accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintDomainError, NoCertificateError

SYMMETRY_RTOL = 1e-12
EIGVEC_CONDITION_LIMIT = 1e12
IMAG_TOL = 1e-10

EULER_GAMMA = float(np.euler_gamma)


def _ata_eigenvalues(A):
    """Eigenvalues of A^T A (squared singular values, padded with zeros)."""
    A = np.asarray(A, dtype=float)
    sig = np.linalg.svd(A, compute_uv=False)
    lams = np.zeros(A.shape[1])
    lams[: sig.size] = sig**2
    return lams


def gradient_contraction(A, eta):
    """Spectral norm of I - eta A^T A, the plain gradient-descent contraction factor."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    lams = _ata_eigenvalues(A)
    return float(np.max(np.abs(1.0 - eta * lams)))


def _linearized_update(problem, x_star, eta):
    """H together with the linearizations at the fixed point and its gradient step."""
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    eta = float(eta)
    grad = problem.gradient(x_star)
    z = x_star - eta * grad
    spec = problem.constraint
    if spec.kind == "sphere":
        multiplier = float(x_star @ grad)
        if 1.0 - eta * multiplier <= 0.0:
            raise ConstraintDomainError(
                "sphere: fixed-point condition violated "
                f"(1 - eta*gamma = {1.0 - eta * multiplier:.3e} <= 0)"
            )
    lin_x = spec.linearize(x_star)
    lin_z = spec.linearize(z)
    if lin_x.matrix is None or lin_z.matrix is None:
        raise ValueError("iteration matrix needs dense projection derivatives")
    middle = np.eye(spec.n) - eta * (problem.A.T @ problem.A)
    return lin_z.matrix @ middle @ lin_x.matrix, lin_x, lin_z


def iteration_matrix(problem, x_star, eta):
    """Linearized PGD update matrix at a fixed point x* with step eta."""
    H, _, _ = _linearized_update(problem, x_star, eta)
    return H


@dataclass(frozen=True)
class EigenData:
    """Eigendecomposition of the update matrix with the quantities used downstream."""

    Q: np.ndarray
    eigenvalues: np.ndarray
    spectral_radius: float
    eigvec_condition: float
    symmetric: bool
    diagonalizable: bool


def eigendecompose(H):
    """Eigendecomposition of H, preferring the symmetric solver when applicable.

    A symmetric H gets an orthogonal eigenvector basis (condition number one).
    The decomposition is flagged non-diagonalizable when the eigenvector basis
    is numerically singular or the spectrum is not real.
    """
    H = np.asarray(H, dtype=float)
    asym = np.linalg.norm(H - H.T)
    symmetric = asym <= SYMMETRY_RTOL * (1.0 + np.linalg.norm(H))
    if symmetric:
        eigenvalues, Q = np.linalg.eigh(0.5 * (H + H.T))
        return EigenData(
            Q=Q,
            eigenvalues=eigenvalues,
            spectral_radius=float(np.max(np.abs(eigenvalues))),
            eigvec_condition=1.0,
            symmetric=True,
            diagonalizable=True,
        )
    eigenvalues, Q = np.linalg.eig(H)
    scale = np.max(np.abs(eigenvalues)) if eigenvalues.size else 0.0
    real_spectrum = bool(np.max(np.abs(eigenvalues.imag)) <= IMAG_TOL * (1.0 + scale))
    sing = np.linalg.svd(Q, compute_uv=False)
    condition = float(sing[0] / sing[-1]) if sing[-1] > 0 else np.inf
    diagonalizable = real_spectrum and condition <= EIGVEC_CONDITION_LIMIT
    return EigenData(
        Q=Q.real if real_spectrum else Q,
        eigenvalues=eigenvalues.real if real_spectrum else eigenvalues,
        spectral_radius=float(np.max(np.abs(eigenvalues))),
        eigvec_condition=condition,
        symmetric=False,
        diagonalizable=diagonalizable,
    )


def quadratic_coefficient(eigvec_condition, contraction, curvature_z, proj_norm_z, curvature_x):
    """Coefficient of the squared-error term in the one-step error recursion."""
    if min(contraction, curvature_z, proj_norm_z, curvature_x) < 0:
        raise ValueError("inputs must be nonnegative")
    if eigvec_condition < 1.0:
        raise ValueError("eigenvector condition number is at least one")
    return float(
        eigvec_condition**2
        * contraction
        * (curvature_z * contraction + proj_norm_z * curvature_x)
    )


def _safe_div(num, den):
    """num / den with a positive numerator over zero mapping to +inf."""
    if den == 0.0:
        return np.inf if num != 0.0 else np.nan
    return num / den


def convergence_radius(radius_x, radius_z, eigvec_condition, contraction, rate, quad_coeff):
    """Radius of the certified ball of linear convergence around the fixed point."""
    if not rate < 1.0:
        raise NoCertificateError("no linear convergence certificate (rate >= 1)")
    terms = (
        _safe_div(radius_x, eigvec_condition),
        _safe_div(radius_z, eigvec_condition * contraction),
        _safe_div(1.0 - rate, quad_coeff),
    )
    return float(min(terms))


def exp_integral_e1(t):
    """Exponential integral E1(t) for t > 0.

    Power series about zero for t <= 1, modified Lentz continued fraction for
    t > 1; absolute error well below 1e-12 across (0, 700].
    """
    t = float(t)
    if t <= 0:
        raise ValueError("t must be positive")
    if t <= 1.0:
        total = -EULER_GAMMA - np.log(t)
        term = 1.0
        for k in range(1, 200):
            term *= -t / k
            contribution = -term / k
            total += contribution
            if abs(contribution) < 1e-18 * max(1.0, abs(total)):
                break
        return float(total)
    # Continued fraction E1(t) = exp(-t) / (t + 1 - 1/(t + 3 - 4/(t + 5 - ...)))
    # evaluated with the modified Lentz algorithm.
    tiny = 1e-300
    b = t + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for k in range(1, 10_000):
        a = -float(k) ** 2
        b += 2.0
        d = a * d + b
        if d == 0.0:
            d = tiny
        d = 1.0 / d
        c = b + a / c
        if c == 0.0:
            c = tiny
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return float(h * np.exp(-t))


def transient_offset(rate, error_fraction):
    """Additive iteration count covering the nonlinear early stage.

    ``error_fraction`` is the initial error divided by the certified radius of
    the quadratic term; the offset tends to one as it tends to zero.
    """
    rate = float(rate)
    tau = float(error_fraction)
    if not 0.0 < rate < 1.0:
        raise ValueError("rate must lie in (0, 1)")
    if not 0.0 < tau < 1.0:
        raise ValueError("error fraction must lie in (0, 1)")
    shifted = rate + tau * (1.0 - rate)
    log_inv_rate = np.log(1.0 / rate)
    log_inv_shifted = np.log(1.0 / shifted)
    bracket = (
        exp_integral_e1(log_inv_shifted)
        - exp_integral_e1(log_inv_rate)
        + 0.5 * np.log(log_inv_rate / log_inv_shifted)
    )
    return float(bracket / (rate * log_inv_rate) + 1.0)


def iterations_to_accuracy(accuracy, rate, eigvec_condition=1.0, offset=1.0):
    """Iterations guaranteeing the error shrank by the given relative accuracy."""
    accuracy = float(accuracy)
    rate = float(rate)
    if not 0.0 < accuracy < 1.0:
        raise ValueError("accuracy must lie in (0, 1)")
    if not 0.0 < rate < 1.0:
        raise ValueError("rate must lie in (0, 1)")
    return float(
        (np.log(1.0 / accuracy) + np.log(eigvec_condition)) / np.log(1.0 / rate) + offset
    )


def compressed_rate(A, basis, eta):
    """Rate and extreme eigenvalues of the objective compressed onto a tangent basis.

    ``basis`` must have orthonormal columns; the rate is the contraction factor
    of gradient descent restricted to its span.
    """
    basis = np.asarray(basis, dtype=float)
    eta = float(eta)
    if eta <= 0:
        raise ValueError("eta must be positive")
    d = basis.shape[1]
    gram_defect = np.linalg.norm(basis.T @ basis - np.eye(d))
    if gram_defect > 1e-10:
        raise ValueError(f"basis columns are not orthonormal (defect {gram_defect:.3e})")
    AB = np.asarray(A, dtype=float) @ basis
    lams = np.linalg.eigvalsh(AB.T @ AB)
    lam_max, lam_min = float(lams[-1]), float(lams[0])
    rate = max(abs(1.0 - eta * lam_max), abs(1.0 - eta * lam_min))
    return float(rate), lam_max, lam_min


def optimal_step(lam_max, lam_min):
    """Step size minimizing max(|1 - eta*lam_max|, |1 - eta*lam_min|) and its rate."""
    lam_max = float(lam_max)
    lam_min = float(lam_min)
    if not lam_max >= lam_min:
        raise ValueError("need lam_max >= lam_min")
    if lam_min <= 0:
        raise NoCertificateError("smallest eigenvalue is not positive: no finite optimal rate")
    condition = lam_max / lam_min
    return 2.0 / (lam_max + lam_min), 1.0 - 2.0 / (condition + 1.0)


@dataclass
class ConvergenceReport:
    """All certified quantities at a fixed point for one step size."""

    H: np.ndarray
    eigvec_basis: np.ndarray
    eigenvalues: np.ndarray
    rate: float
    eigvec_condition: float
    contraction: float
    quad_coeff: float
    region_radius: float | None
    certified: bool
    symmetric: bool
    diagonalizable: bool
    radius_x: float
    radius_z: float
    curvature_x: float
    curvature_z: float
    initial_error: float | None = None
    error_fraction: float | None = None
    offset: float | None = None

    def fraction_of(self, initial_error):
        """Initial error normalized by the quadratic-term radius (zero when exact)."""
        if self.quad_coeff == 0.0:
            return 0.0
        return float(self.quad_coeff * initial_error / (1.0 - self.rate))

    def offset_of(self, initial_error):
        """Transient offset for a run started at the given distance from the fixed point."""
        tau = self.fraction_of(initial_error)
        if tau == 0.0:
            return 1.0
        if tau >= 1.0:
            raise NoCertificateError(
                f"initial error is outside the certified region (fraction {tau:.3e})"
            )
        return transient_offset(self.rate, tau)

    def bound(self, accuracy, initial_error=None):
        """Iteration bound for the given relative accuracy."""
        if not self.certified:
            raise NoCertificateError("no linear convergence certificate (rate >= 1)")
        if initial_error is None:
            if self.offset is None:
                raise ValueError("no initial error supplied")
            offset = self.offset
        else:
            offset = self.offset_of(initial_error)
        return iterations_to_accuracy(accuracy, self.rate, self.eigvec_condition, offset)

    def to_json(self, accuracies=()):
        out = {
            "rate": self.rate,
            "eigvec_condition": self.eigvec_condition,
            "contraction": self.contraction,
            "quad_coeff": self.quad_coeff,
            "region_radius": _json_float(self.region_radius),
            "certified": self.certified,
            "symmetric": self.symmetric,
            "diagonalizable": self.diagonalizable,
            "initial_error": self.initial_error,
            "error_fraction": self.error_fraction,
            "transient_offset": self.offset,
        }
        if accuracies and self.certified and self.offset is not None:
            out["iteration_bounds"] = [
                {"accuracy": float(eps), "bound": self.bound(eps)} for eps in accuracies
            ]
        return out


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    if np.isinf(v):
        return "inf"
    return v


def analyze_fixed_point(problem, x_star, eta, initial_error=None):
    """Full convergence report for PGD at a fixed point with step ``eta``."""
    H, lin_x, lin_z = _linearized_update(problem, x_star, eta)
    eig = eigendecompose(H)
    contraction = gradient_contraction(problem.A, eta)
    if eig.diagonalizable:
        quad = quadratic_coefficient(
            eig.eigvec_condition,
            contraction,
            lin_z.curvature,
            lin_z.operator_norm(),
            lin_x.curvature,
        )
    else:
        quad = np.inf

    certified = eig.diagonalizable and eig.spectral_radius < 1.0
    region = None
    if certified:
        region = convergence_radius(
            lin_x.radius,
            lin_z.radius,
            eig.eigvec_condition,
            contraction,
            eig.spectral_radius,
            quad,
        )

    report = ConvergenceReport(
        H=H,
        eigvec_basis=eig.Q,
        eigenvalues=eig.eigenvalues,
        rate=eig.spectral_radius,
        eigvec_condition=eig.eigvec_condition,
        contraction=contraction,
        quad_coeff=quad,
        region_radius=region,
        certified=certified,
        symmetric=eig.symmetric,
        diagonalizable=eig.diagonalizable,
        radius_x=lin_x.radius,
        radius_z=lin_z.radius,
        curvature_x=lin_x.curvature,
        curvature_z=lin_z.curvature,
    )
    if initial_error is not None and certified:
        report.initial_error = float(initial_error)
        report.error_fraction = report.fraction_of(initial_error)
        if report.error_fraction < 1.0:
            report.offset = report.offset_of(initial_error)
    return report
