"""Discrete dual-norm Gram operators and extreme-eigenvalue estimation.

The Gram operator of the negative-order norm on the piecewise space is

    A x = M^t R^{-1} (M x) + beta L x

with M the P1/piecewise pairing, R the P1 Gram matrix of the primal norm
(stiffness for the zero-boundary variant, stiffness plus mass for the free
variant) and L the mesh-weighted piecewise mass matrix.  When the Dirichlet
P1 space is empty the first term vanishes and A reduces to beta L.

Condition numbers of preconditioned systems are estimated by power
iteration for the largest eigenvalue and inverse power iteration for the
smallest; both exploit that the iteration matrix is self-adjoint in inner
products that are available without extra solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import BasisSet, assemble_L, assemble_M, assemble_R, basis_set
from .errors import DimensionError, EigsNotConverged, EmptySpace, SolverFailure
from .mesh import SimplicialMesh
from .precond import SPACES, Preconditioner

# sparse factorization limit for the inner P1 solve; larger systems fall
# back to tightly converged conjugate gradients
DIRECT_SOLVE_LIMIT = 50_000
INNER_CG_TOL = 1e-12


# ---------------------------------------------------------------------------
# operator plumbing


def _as_matvec(operator):
    """Uniform matrix-vector interface for the accepted operator kinds."""
    if isinstance(operator, GramOperator):
        return operator.apply
    if sp.issparse(operator):
        return lambda x: operator @ x
    if isinstance(operator, np.ndarray):
        return lambda x: operator @ x
    if callable(operator):
        return operator
    raise DimensionError(f"unsupported operator type {type(operator)!r}")


def solve_spd(
    operator,
    rhs,
    preconditioner: Preconditioner | None = None,
    tol: float = 1e-10,
    max_iter: int | None = None,
    return_iterations: bool = False,
):
    """Preconditioned conjugate gradients for SPD systems.

    Stops once the preconditioned residual norm falls below ``tol`` relative
    to the preconditioned right-hand side; iteration cap 10 times the
    dimension (or ``max_iter``), beyond which :class:`SolverFailure` is
    raised.
    """
    matvec = _as_matvec(operator)
    b = np.asarray(rhs, dtype=float).ravel()
    n = b.size
    apply_p = preconditioner.apply if preconditioner is not None else lambda v: v
    cap = max_iter if max_iter is not None else 10 * n

    x = np.zeros(n)
    r = b.copy()
    z = apply_p(r)
    rz = float(r @ z)
    target = tol * np.sqrt(max(rz, 0.0))
    if rz == 0.0:
        return (x, 0) if return_iterations else x
    p = z.copy()
    for it in range(1, cap + 1):
        ap = matvec(p)
        denom = float(p @ ap)
        if denom <= 0.0:
            raise SolverFailure(
                "conjugate gradients met a non-positive curvature direction",
                residual=np.sqrt(max(rz, 0.0)),
                iterations=it,
            )
        step = rz / denom
        x += step * p
        r -= step * ap
        z = apply_p(r)
        rz_next = float(r @ z)
        if np.sqrt(max(rz_next, 0.0)) <= target:
            return (x, it) if return_iterations else x
        p = z + (rz_next / rz) * p
        rz = rz_next
    raise SolverFailure(
        f"conjugate gradients did not reach tol={tol} within {cap} iterations",
        residual=float(np.sqrt(max(rz, 0.0)) / (target / tol)),
        iterations=cap,
    )


class _JacobiScaling:
    def __init__(self, matrix):
        self.inv_diag = 1.0 / matrix.diagonal()

    def apply(self, x):
        return self.inv_diag * x


def _spd_solver(matrix: sp.spmatrix):
    """Exact factorization when affordable, else tight Jacobi-PCG."""
    if matrix.shape[0] <= DIRECT_SOLVE_LIMIT:
        lu = splu(matrix.tocsc())
        return lu.solve
    jacobi = _JacobiScaling(matrix)
    return lambda b: solve_spd(matrix, b, preconditioner=jacobi, tol=INNER_CG_TOL)


# ---------------------------------------------------------------------------
# Gram operator


class GramOperator:
    """Symmetric positive definite action of the discrete dual norm."""

    def __init__(self, pairing, r_solve, weighted_mass, beta: float, variant: str):
        self.pairing = pairing
        self.r_solve = r_solve
        self.weighted_mass = weighted_mass.tocsr()
        self.beta = float(beta)
        self.variant = variant
        self.dim = weighted_mass.shape[0]

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dim:
            raise DimensionError(f"expected vector of size {self.dim}, got {x.size}")
        out = self.beta * (self.weighted_mass @ x)
        if self.pairing is not None and self.pairing.shape[0] > 0:
            out = out + self.pairing.T @ self.r_solve(self.pairing @ x)
        return out


def apply_A(operator: GramOperator, x) -> np.ndarray:
    """Evaluate the Gram operator; see :class:`GramOperator`."""
    return operator.apply(x)


def gram_operator(
    mesh: SimplicialMesh,
    space: str = "hm1",
    degree: int = 0,
    beta: float = 0.1,
    basis: BasisSet | None = None,
) -> GramOperator:
    """Assemble the Gram operator of the requested dual-norm variant.

    space "hm1" pairs against the zero-boundary P1 space (stiffness R);
    "tilde" pairs against the free P1 space (stiffness plus mass).  A mesh
    whose Dirichlet space is empty yields the pure beta L operator.
    """
    if space not in SPACES:
        raise DimensionError(f"space must be one of {SPACES}, got {space!r}")
    if beta <= 0.0:
        raise DimensionError("beta must be positive")
    if basis is None:
        basis = basis_set(mesh, degree)
    weighted_mass = assemble_L(mesh, basis)
    bc = "dirichlet" if space == "hm1" else "free"
    try:
        gram_p1 = assemble_R(mesh, bc)
        pairing = assemble_M(mesh, basis, bc)
        r_solve = _spd_solver(gram_p1)
    except EmptySpace:
        pairing = None
        r_solve = None
    return GramOperator(pairing, r_solve, weighted_mass, beta, space)


# ---------------------------------------------------------------------------
# extreme eigenvalues


@dataclass(frozen=True)
class SpectralReport:
    """Extreme-eigenvalue estimates of a preconditioned system."""

    lambda_max: float
    lambda_min: float
    kappa: float
    iterations_max: int
    iterations_min: int
    residual_max: float
    residual_min: float


_MIN_SWEEPS = 5


def _rayleigh_iteration(step, start, tol, max_iter):
    """Shared loop: track the Rayleigh quotient until its change is small.

    ``step`` maps the current unit vector to (rayleigh, next unnormalized
    iterate).  Returns (value, iterations, last relative change, converged).
    """
    x = start / np.linalg.norm(start)
    previous = None
    change = np.inf
    rho = np.nan
    for it in range(1, max_iter + 1):
        rho, y = step(x)
        if previous is not None:
            change = abs(rho - previous) / abs(rho)
            if it >= _MIN_SWEEPS and change <= tol:
                return rho, it, change, True
        previous = rho
        x = y / np.linalg.norm(y)
    return rho, max_iter, change, False


def extreme_eigs(
    operator,
    preconditioner: Preconditioner,
    tol: float = 1e-6,
    max_iter: int = 2000,
    seed=0,
    inner_tol: float = 1e-10,
) -> SpectralReport:
    """Extreme eigenvalues of the preconditioned operator, and their ratio.

    The largest eigenvalue comes from power iteration on x -> P(A x) with
    the Rayleigh quotient taken in the A-inner product, where the iteration
    matrix is self-adjoint; the smallest from inverse power iteration whose
    inner SPD solves reuse the same preconditioner.  Iterations stop when
    the Rayleigh quotient changes by less than ``tol`` relatively; running
    out of iterations raises :class:`EigsNotConverged` carrying the best
    estimates found.
    """
    matvec = _as_matvec(operator)
    rng = np.random.default_rng(seed)
    n = preconditioner.dim

    def power_step(x):
        a = matvec(x)
        y = preconditioner.apply(a)
        return float(y @ a) / float(x @ a), y

    lam_max, it_max, res_max, ok_max = _rayleigh_iteration(
        power_step, rng.standard_normal(n), tol, max_iter
    )
    if not ok_max:
        report = SpectralReport(
            lam_max, np.nan, np.nan, it_max, 0, res_max, np.inf
        )
        raise EigsNotConverged(
            f"power iteration stalled at {lam_max} after {it_max} sweeps",
            report=report,
        )

    def inverse_step(x):
        w = preconditioner.solve(x)
        z = solve_spd(matvec, w, preconditioner, tol=inner_tol)
        return float(z @ w) / float(x @ w), z

    inv_lam, it_min, res_min, ok_min = _rayleigh_iteration(
        inverse_step, rng.standard_normal(n), tol, max_iter
    )
    lam_min = 1.0 / inv_lam
    report = SpectralReport(
        lam_max, lam_min, lam_max / lam_min, it_max, it_min, res_max, res_min
    )
    if not ok_min:
        raise EigsNotConverged(
            f"inverse iteration stalled at {lam_min} after {it_min} sweeps",
            report=report,
        )
    return report


def pencil_max_eig(
    weighted_mass,
    operator,
    preconditioner: Preconditioner,
    tol: float = 1e-6,
    max_iter: int = 2000,
    seed=0,
    inner_tol: float = 1e-10,
) -> float:
    """Largest generalized eigenvalue of L x = lambda A x.

    Power iteration on A^{-1} L in the A-inner product; the A-solves run
    preconditioned conjugate gradients with the supplied preconditioner.
    """
    l_matvec = _as_matvec(weighted_mass)
    a_matvec = _as_matvec(operator)
    rng = np.random.default_rng(seed)
    n = preconditioner.dim

    def step(x):
        w = l_matvec(x)
        z = solve_spd(a_matvec, w, preconditioner, tol=inner_tol)
        return float(x @ w) / float(x @ a_matvec(x)), z

    value, iterations, change, converged = _rayleigh_iteration(
        step, rng.standard_normal(n), tol, max_iter
    )
    if not converged:
        report = SpectralReport(value, np.nan, np.nan, iterations, 0, change, np.inf)
        raise EigsNotConverged(
            f"pencil iteration stalled at {value} after {iterations} sweeps",
            report=report,
        )
    return value


# ---------------------------------------------------------------------------
# dense oracles


def dense_action(operator, dim: int | None = None) -> np.ndarray:
    """Materialize an operator column by column (small problems only)."""
    if isinstance(operator, np.ndarray):
        return operator
    if sp.issparse(operator):
        return operator.toarray()
    matvec = _as_matvec(operator)
    if dim is None:
        if isinstance(operator, GramOperator):
            dim = operator.dim
        else:
            raise DimensionError("dim required for callable operators")
    eye = np.eye(dim)
    return np.column_stack([matvec(eye[:, k]) for k in range(dim)])


def dense_condition_number(operator, preconditioner: Preconditioner):
    """Spectrum of the preconditioned system via a dense generalized solve.

    Returns (lambda_min, lambda_max, kappa) of P(A .), computed from the
    symmetric-definite pencil (P A P, P).
    """
    action = preconditioner.to_dense()
    gram = dense_action(operator, preconditioner.dim)
    gram = 0.5 * (gram + gram.T)
    product = action @ gram @ action
    product = 0.5 * (product + product.T)
    eigs = scipy.linalg.eigh(product, action, eigvals_only=True)
    return float(eigs[0]), float(eigs[-1]), float(eigs[-1] / eigs[0])
