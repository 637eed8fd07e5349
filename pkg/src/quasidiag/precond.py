"""Quasi-diagonal and diagonal preconditioners for the discrete dual norms.

The central object is the facet-element incidence matrix I whose column for
facet E holds the piecewise-constant divergence coefficients of the
lowest-order Raviart-Thomas function attached to E: +|E|/|T+| on the first
neighbour and -|E|/|T-| on the second, a single entry |E|/|T| on boundary
facets.  Combined with the diagonal D = |E|^(-n/(n-1)) this yields

    apply(x) = I (D (I^t x))            (all facets)
    apply(x) = alpha (1^t x) 1 + I (D (I^t x))   (interior facets only)

where the rank-one term is evaluated lazily.  Higher-order variants act
block-wise with an extra diagonal on the bubble coefficients, and the
comparison preconditioner is the inverse of the diagonal |T|^((n+2)/n).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import BasisSet, basis_set
from .errors import DimensionError
from .mesh import SimplicialMesh

# ---------------------------------------------------------------------------
# building blocks


def build_incidence(
    mesh: SimplicialMesh, include_boundary_facets: bool = True
) -> sp.csr_matrix:
    """Sparse (#elements, #facets) divergence-coefficient matrix.

    Columns follow facet enumeration order; with boundary facets excluded
    only interior columns are kept (same order).  Every column has at most
    two nonzeros, and weighting rows by element volumes makes interior
    columns sum to zero and boundary columns to |E|.
    """
    topo = mesh.facets
    interior = ~topo.is_boundary
    if include_boundary_facets:
        keep = np.arange(len(topo))
    else:
        keep = np.flatnonzero(interior)
    ncols = keep.size
    col_index = np.arange(ncols)

    plus = topo.plus[keep]
    minus = topo.minus[keep]
    measure = topo.measure[keep]

    rows = [plus]
    cols = [col_index]
    vals = [measure / mesh.volumes[plus]]
    has_minus = minus >= 0
    rows.append(minus[has_minus])
    cols.append(col_index[has_minus])
    vals.append(-measure[has_minus] / mesh.volumes[minus[has_minus]])

    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.num_elements, ncols),
    ).tocsr()


def build_D(mesh: SimplicialMesh, include_boundary_facets: bool = True) -> np.ndarray:
    """Facet diagonal |E|^(-n/(n-1)), in facet enumeration order."""
    topo = mesh.facets
    measure = topo.measure
    if not include_boundary_facets:
        measure = measure[~topo.is_boundary]
    return measure ** (-mesh.dim / (mesh.dim - 1.0))


def build_Dp(mesh: SimplicialMesh, basis: BasisSet) -> np.ndarray:
    """Bubble diagonal (|T|^(1/n) ||chi_{T,j}||)^(-2), (element, bubble) order.

    Degree 0 has no bubbles and yields a size-0 diagonal.
    """
    if basis.degree == 0:
        return np.empty(0)
    weight = basis.mesh.volumes ** (2.0 / basis.mesh.dim)
    return 1.0 / (weight[:, None] * basis.bubble_norms_sq).ravel()


def build_C(mesh: SimplicialMesh) -> np.ndarray:
    """Element diagonal |T|^((n+2)/n) of the comparison scaling."""
    return mesh.volumes ** ((mesh.dim + 2.0) / mesh.dim)


# ---------------------------------------------------------------------------
# preconditioner objects


class Preconditioner:
    """Symmetric positive definite action x -> P^{-1} x.

    ``apply`` evaluates the preconditioner action; ``solve`` inverts it
    (needed by inverse power iteration); ``to_dense`` materializes the
    action for oracle comparisons.
    """

    dim: int

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dim:
            raise DimensionError(f"expected vector of size {self.dim}, got {x.size}")
        return x

    def apply(self, x) -> np.ndarray:
        raise NotImplementedError

    def solve(self, x) -> np.ndarray:
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        basis = np.eye(self.dim)
        cols = np.column_stack([self.apply(basis[:, k]) for k in range(self.dim)])
        return 0.5 * (cols + cols.T)


class DiagonalScaling(Preconditioner):
    """Pointwise multiplication by a fixed positive diagonal."""

    def __init__(self, action_diagonal):
        diag = np.asarray(action_diagonal, dtype=float).ravel()
        if diag.size and diag.min() <= 0.0:
            raise DimensionError("diagonal preconditioner requires positive entries")
        self.diagonal = diag
        self.dim = diag.size

    def apply(self, x):
        return self.diagonal * self._check(x)

    def solve(self, x):
        return self._check(x) / self.diagonal

    def to_dense(self):
        return np.diag(self.diagonal)


class QuasiDiagonal(Preconditioner):
    """Action I D I^t plus an optional lazy rank-one term alpha * 1 1^t."""

    def __init__(self, incidence: sp.spmatrix, facet_diagonal, alpha=None):
        self.incidence = incidence.tocsr()
        self.facet_diagonal = np.asarray(facet_diagonal, dtype=float).ravel()
        if self.facet_diagonal.size != self.incidence.shape[1]:
            raise DimensionError("facet diagonal does not match incidence columns")
        if alpha is not None and alpha <= 0.0:
            raise DimensionError("alpha must be positive")
        self.alpha = alpha
        self.dim = self.incidence.shape[0]
        self._factor = None

    def apply(self, x):
        x = self._check(x)
        out = self.incidence @ (self.facet_diagonal * (self.incidence.T @ x))
        if self.alpha is not None:
            out = out + self.alpha * x.sum()
        return out

    def _matrix(self) -> sp.csr_matrix:
        scaled = self.incidence @ sp.diags(self.facet_diagonal)
        return (scaled @ self.incidence.T).tocsc()

    def solve(self, x):
        x = self._check(x)
        if self._factor is None:
            if self.alpha is None:
                self._factor = splu(self._matrix())
            else:
                # bordered system: [S, 1; 1^t, -1/alpha][z; w] = [x; 0]
                # eliminates to (S + alpha 1 1^t) z = x without densifying
                S = self._matrix()
                ones = np.ones((self.dim, 1))
                aug = sp.bmat(
                    [[S, ones], [ones.T, [[-1.0 / self.alpha]]]], format="csc"
                )
                self._factor = splu(aug)
        if self.alpha is None:
            return self._factor.solve(x)
        return self._factor.solve(np.append(x, 0.0))[:-1]


class BlockDiag(Preconditioner):
    """Concatenation of preconditioners acting on consecutive sub-vectors."""

    def __init__(self, *blocks: Preconditioner):
        self.blocks = blocks
        self.dim = sum(b.dim for b in blocks)

    def _split(self, x):
        x = self._check(x)
        out = []
        start = 0
        for b in self.blocks:
            out.append(x[start : start + b.dim])
            start += b.dim
        return out

    def apply(self, x):
        return np.concatenate(
            [b.apply(part) for b, part in zip(self.blocks, self._split(x))]
        )

    def solve(self, x):
        return np.concatenate(
            [b.solve(part) for b, part in zip(self.blocks, self._split(x))]
        )

    def to_dense(self):
        import scipy.linalg

        return scipy.linalg.block_diag(*[b.to_dense() for b in self.blocks])


# ---------------------------------------------------------------------------
# factories

SPACES = ("hm1", "tilde")


def quasi_diagonal_preconditioner(
    mesh: SimplicialMesh,
    space: str = "hm1",
    degree: int = 0,
    alpha: float = 0.01,
    basis: BasisSet | None = None,
) -> Preconditioner:
    """Quasi-diagonal preconditioner of the requested dual-norm family.

    space "hm1" uses all facets; "tilde" restricts to interior facets and
    adds the rank-one constant coupling weighted by alpha.  Degree 1 appends
    the bubble diagonal as an independent block.
    """
    if space not in SPACES:
        raise DimensionError(f"space must be one of {SPACES}, got {space!r}")
    if basis is None:
        basis = basis_set(mesh, degree)
    boundary = space == "hm1"
    core = QuasiDiagonal(
        build_incidence(mesh, include_boundary_facets=boundary),
        build_D(mesh, include_boundary_facets=boundary),
        alpha=alpha if space == "tilde" else None,
    )
    if basis.degree == 0:
        return core
    return BlockDiag(core, DiagonalScaling(build_Dp(mesh, basis)))


def diagonal_preconditioner(
    mesh: SimplicialMesh, degree: int = 0, basis: BasisSet | None = None
) -> Preconditioner:
    """Comparison preconditioner: inverse element diagonal, plus bubbles."""
    if basis is None:
        basis = basis_set(mesh, degree)
    core = DiagonalScaling(1.0 / build_C(mesh))
    if basis.degree == 0:
        return core
    return BlockDiag(core, DiagonalScaling(build_Dp(mesh, basis)))
