"""Projection operators for the four supported constraint families.

Each constraint set C comes with three pieces of local geometry:

* ``project(x)``        -- a closest point to x in C (deterministic tie-break),
* ``linearize(x)``      -- the derivative of the projection at x together with
  the pair (radius, curvature): inside a ball of ``radius`` around x the
  projection deviates from its linearization by at most
  ``curvature * ||step||^2``,
* ``membership_residual(x)`` -- how far x is from satisfying the constraint.

The four families are an affine subspace {Cx = d}, the s-sparse vectors, the
unit sphere, and the matrices of rank at most r (flattened column-major).
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import ConstraintDomainError, NonUniqueProjectionWarning

# Singular values below RANK_RTOL * sigma_1 count as zero.
RANK_RTOL = 1e-10
# Above this ambient dimension the low-rank derivative is kept matrix-free.
DENSE_DERIVATIVE_LIMIT = 4096

SQRT2 = float(np.sqrt(2.0))
# Quadratic remainder coefficient of rank-r truncation at a rank-r point.
RANK_CURVATURE = 4.0 * (1.0 + SQRT2)


def _as_vector(x, n, what="x"):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != n:
        raise ValueError(f"{what} has length {x.size}, expected {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} contains non-finite entries")
    return x


class Linearization:
    """Derivative of a projection at a point, with its quadratic error bound.

    ``matrix`` is the dense derivative (ambient x ambient) or None when the
    ambient dimension is too large to materialize; ``apply`` always works.
    ``radius`` may be ``inf``; ``curvature`` is finite and nonnegative.
    """

    def __init__(self, radius, curvature, matrix=None, matvec=None):
        if matrix is None and matvec is None:
            raise ValueError("need a dense matrix or a matvec")
        self.radius = float(radius)
        self.curvature = float(curvature)
        self.matrix = None if matrix is None else np.asarray(matrix, dtype=float)
        self._matvec = matvec
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.curvature < 0:
            raise ValueError("curvature must be nonnegative")

    def apply(self, vec):
        """Apply the derivative to a vector."""
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if self._matvec is not None:
            return self._matvec(vec)
        return self.matrix @ vec

    def operator_norm(self):
        """Spectral norm of the derivative."""
        if self.matrix is None:
            raise ValueError("operator norm requires the dense derivative")
        return float(np.linalg.norm(self.matrix, 2))


class Constraint:
    """Common interface of all constraint families."""

    kind = "abstract"
    n = 0

    def project(self, x):
        raise NotImplementedError

    def linearize(self, x):
        raise NotImplementedError

    def membership_residual(self, x):
        raise NotImplementedError

    def contains(self, x, tol=1e-10):
        return self.membership_residual(x) <= tol

    def random_member(self, rng):
        """Sample some point of the constraint set (used by the check suites)."""
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n})"


class AffineConstraint(Constraint):
    """Affine subspace {x : Cx = d} with C full row rank, p < n.

    The projection is computed from a compact SVD of C; the orthonormal basis
    of the null space of C is cached because the derivative and the reduced
    least-squares solve both reuse it.
    """

    kind = "affine"

    def __init__(self, C, d):
        C = np.asarray(C, dtype=float)
        d = np.asarray(d, dtype=float).reshape(-1)
        if C.ndim != 2:
            raise ValueError("C must be a matrix")
        p, n = C.shape
        if not (0 < p < n):
            raise ValueError(f"need 0 < p < n, got shape {C.shape}")
        if d.size != p:
            raise ValueError(f"d has length {d.size}, expected {p}")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(d))):
            raise ValueError("C and d must be finite")
        U, sig, Vt = np.linalg.svd(C, full_matrices=True)
        if sig[-1] <= RANK_RTOL * sig[0]:
            raise ValueError("C is rank deficient (smallest singular value below tolerance)")
        self.C = C
        self.d = d
        self.n = n
        self.p = p
        self.null_basis = Vt[p:].T  # n x (n-p), orthonormal columns
        self.tangent_projector = self.null_basis @ self.null_basis.T
        # Minimum-norm solution of Cx = d.
        self.offset = Vt[:p].T @ (U.T @ d / sig)

    def project(self, x):
        x = _as_vector(x, self.n)
        return self.tangent_projector @ x + self.offset

    def linearize(self, x):
        _as_vector(x, self.n)
        return Linearization(np.inf, 0.0, matrix=self.tangent_projector)

    def membership_residual(self, x):
        x = _as_vector(x, self.n)
        return float(np.linalg.norm(self.C @ x - self.d) / (1.0 + np.linalg.norm(self.d)))

    def random_member(self, rng):
        return self.null_basis @ rng.standard_normal(self.n - self.p) + self.offset

    def to_json(self):
        return {"type": "affine", "C": self.C.tolist(), "d": self.d.tolist()}


class SparsityConstraint(Constraint):
    """Vectors with at most s nonzero entries."""

    kind = "sparse"

    def __init__(self, s, n):
        s = int(s)
        n = int(n)
        if not (1 <= s <= n):
            raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
        self.s = s
        self.n = n

    def top_support(self, x):
        """Indices of the s largest-magnitude entries; ties keep the smaller index."""
        x = _as_vector(x, self.n)
        order = np.argsort(-np.abs(x), kind="stable")
        return np.sort(order[: self.s])

    def project(self, x):
        x = _as_vector(x, self.n)
        out = np.zeros_like(x)
        keep = self.top_support(x)
        out[keep] = x[keep]
        return out

    def _magnitude_gap(self, x):
        """(kept magnitudes boundary, dropped magnitudes boundary) at rank s."""
        mags = np.sort(np.abs(x))[::-1]
        smallest_kept = mags[self.s - 1]
        largest_dropped = mags[self.s] if self.s < self.n else 0.0
        return smallest_kept, largest_dropped

    def linearize(self, x):
        x = _as_vector(x, self.n)
        smallest_kept, largest_dropped = self._magnitude_gap(x)
        if smallest_kept <= largest_dropped or smallest_kept == 0.0:
            raise ConstraintDomainError(
                "sparse: derivative needs a strict magnitude gap at rank s "
                f"(|x|_[s]={smallest_kept:.3e}, |x|_[s+1]={largest_dropped:.3e})"
            )
        mask = np.zeros(self.n)
        mask[self.top_support(x)] = 1.0
        # Support is stable within (gap)/sqrt(2); at an exactly s-sparse point
        # the dropped boundary is zero and the radius reduces to |x_[s]|/sqrt(2).
        radius = (smallest_kept - largest_dropped) / SQRT2
        return Linearization(radius, 0.0, matrix=np.diag(mask))

    def membership_residual(self, x):
        x = _as_vector(x, self.n)
        if self.s >= self.n:
            return 0.0
        mags = np.sort(np.abs(x))[::-1]
        return float(mags[self.s])

    def random_member(self, rng):
        out = np.zeros(self.n)
        support = rng.choice(self.n, size=self.s, replace=False)
        out[support] = rng.standard_normal(self.s)
        return out

    def to_json(self):
        return {"type": "sparse", "s": self.s}


class SphereConstraint(Constraint):
    """Unit sphere {x : ||x|| = 1}; the origin projects to the first basis vector."""

    kind = "sphere"

    def __init__(self, n):
        n = int(n)
        if n < 1:
            raise ValueError("n must be positive")
        self.n = n

    def project(self, x):
        x = _as_vector(x, self.n)
        norm = np.linalg.norm(x)
        if norm == 0.0:
            out = np.zeros(self.n)
            out[0] = 1.0
            return out
        return x / norm

    def linearize(self, x):
        x = _as_vector(x, self.n)
        norm = np.linalg.norm(x)
        if norm == 0.0:
            raise ConstraintDomainError("sphere: derivative undefined at the origin")
        outer = np.outer(x, x) / norm**2
        matrix = (np.eye(self.n) - outer) / norm
        return Linearization(np.inf, 2.0 / norm**2, matrix=matrix)

    def membership_residual(self, x):
        x = _as_vector(x, self.n)
        return float(abs(np.linalg.norm(x) - 1.0))

    def random_member(self, rng):
        v = rng.standard_normal(self.n)
        return v / np.linalg.norm(v)

    def to_json(self):
        return {"type": "sphere"}


class LowRankConstraint(Constraint):
    """Matrices of rank at most r, flattened column-major to length m*n.

    The derivative at a rank-r point is the projector onto the tangent space
    of the fixed-rank manifold; its quadratic remainder constant is the
    universal 4(1+sqrt(2)).
    """

    kind = "lowrank"

    def __init__(self, r, shape):
        m_mat, n_mat = (int(v) for v in shape)
        r = int(r)
        if m_mat < 1 or n_mat < 1:
            raise ValueError("matrix shape must be positive")
        if not (1 <= r <= min(m_mat, n_mat)):
            raise ValueError(f"need 1 <= r <= min{m_mat, n_mat}, got r={r}")
        self.r = r
        self.shape = (m_mat, n_mat)
        self.n = m_mat * n_mat

    def to_matrix(self, x):
        x = _as_vector(x, self.n)
        return x.reshape(self.shape, order="F")

    def to_vector(self, X):
        return np.asarray(X, dtype=float).reshape(-1, order="F")

    def project(self, x):
        X = self.to_matrix(x)
        U, sig, Vt = np.linalg.svd(X, full_matrices=False)
        if self.r < sig.size and sig[0] > 0:
            gap = sig[self.r - 1] - sig[self.r]
            if sig[self.r - 1] > RANK_RTOL * sig[0] and gap <= RANK_RTOL * sig[0]:
                warnings.warn(
                    "rank-r truncation is not unique (tied singular values); "
                    "returning the SVD routine's selection",
                    NonUniqueProjectionWarning,
                    stacklevel=2,
                )
        Y = (U[:, : self.r] * sig[: self.r]) @ Vt[: self.r]
        return self.to_vector(Y)

    def _rank_r_factors(self, x):
        X = self.to_matrix(x)
        U, sig, Vt = np.linalg.svd(X, full_matrices=False)
        tol = RANK_RTOL * (sig[0] if sig[0] > 0 else 1.0)
        if sig[self.r - 1] <= tol:
            raise ConstraintDomainError(
                f"lowrank: derivative needs rank exactly {self.r}, "
                f"but sigma_{self.r}={sig[self.r - 1]:.3e} is below tolerance"
            )
        if self.r < sig.size and sig[self.r] > tol:
            raise ConstraintDomainError(
                f"lowrank: derivative needs rank exactly {self.r}, "
                f"but sigma_{self.r + 1}={sig[self.r]:.3e} is above tolerance"
            )
        return U[:, : self.r], Vt[: self.r].T

    def linearize(self, x):
        U, V = self._rank_r_factors(x)
        m_mat, n_mat = self.shape
        left_null = np.eye(m_mat) - U @ U.T
        right_null = np.eye(n_mat) - V @ V.T

        def matvec(vec):
            D = vec.reshape(self.shape, order="F")
            return self.to_vector(D - left_null @ D @ right_null)

        matrix = None
        if self.n <= DENSE_DERIVATIVE_LIMIT:
            matrix = np.eye(self.n) - np.kron(right_null, left_null)
        return Linearization(np.inf, RANK_CURVATURE, matrix=matrix, matvec=matvec)

    def membership_residual(self, x):
        X = self.to_matrix(x)
        sig = np.linalg.svd(X, compute_uv=False)
        if self.r >= sig.size:
            return 0.0
        scale = sig[0] if sig[0] > 0 else 1.0
        return float(sig[self.r] / scale)

    def random_member(self, rng):
        m_mat, n_mat = self.shape
        F = rng.standard_normal((m_mat, self.r))
        G = rng.standard_normal((n_mat, self.r))
        return self.to_vector(F @ G.T)

    def to_json(self):
        return {"type": "lowrank", "r": self.r, "shape": list(self.shape)}


def constraint_from_json(obj, ambient_dim=None):
    """Build a constraint from its JSON form; ``ambient_dim`` resolves variants
    that do not carry their own dimension (sparse, sphere)."""
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValueError("constraint JSON must be an object with a 'type' field")
    kind = obj["type"]
    if kind == "affine":
        spec = AffineConstraint(obj["C"], obj["d"])
    elif kind == "sparse":
        if ambient_dim is None:
            raise ValueError("sparse constraint needs the ambient dimension")
        spec = SparsityConstraint(obj["s"], ambient_dim)
    elif kind == "sphere":
        if ambient_dim is None:
            raise ValueError("sphere constraint needs the ambient dimension")
        spec = SphereConstraint(ambient_dim)
    elif kind == "lowrank":
        spec = LowRankConstraint(obj["r"], obj["shape"])
    else:
        raise ValueError(f"unknown constraint type {kind!r}")
    if ambient_dim is not None and spec.n != ambient_dim:
        raise ValueError(f"constraint dimension {spec.n} does not match ambient {ambient_dim}")
    return spec


def finite_difference_check(constraint, x, step=1e-6, trials=100, seed=0):
    """Max relative residual of a central-difference probe of the derivative.

    For each random unit direction u the probe compares
    (P(x + h u) - P(x - h u)) / (2 h) against the linearization applied to u.
    """
    if not 1e-8 <= step <= 1e-4:
        raise ValueError("step must lie in [1e-8, 1e-4]")
    x = _as_vector(x, constraint.n)
    lin = constraint.linearize(x)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(int(trials)):
        u = rng.standard_normal(constraint.n)
        u /= np.linalg.norm(u)
        forward = constraint.project(x + step * u)
        backward = constraint.project(x - step * u)
        probe = (forward - backward) / (2.0 * step)
        reference = lin.apply(u)
        residual = np.linalg.norm(probe - reference) / (1.0 + np.linalg.norm(reference))
        worst = max(worst, float(residual))
    return worst


def quadratic_bound_margin(constraint, x, radius, trials=1000, seed=0):
    """Worst-case slack of the quadratic remainder bound over random steps.

    Samples steps uniformly in the ball of the given radius and returns the
    minimum of ``curvature * ||step||^2 - ||P(x+step) - P(x) - dP(x) step||``;
    a nonnegative value means the bound held on every sample.
    """
    x = _as_vector(x, constraint.n)
    lin = constraint.linearize(x)
    if not radius < lin.radius:
        raise ValueError("sampling radius must be smaller than the linearization radius")
    rng = np.random.default_rng(seed)
    base = constraint.project(x)
    worst = np.inf
    for _ in range(int(trials)):
        direction = rng.standard_normal(constraint.n)
        direction /= np.linalg.norm(direction)
        length = radius * rng.random() ** (1.0 / constraint.n)
        delta = length * direction
        actual = constraint.project(x + delta)
        residual = np.linalg.norm(actual - base - lin.apply(delta))
        margin = lin.curvature * float(length) ** 2 - float(residual)
        worst = min(worst, margin)
    return worst
