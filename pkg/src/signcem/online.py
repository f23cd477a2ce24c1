"""Coarse Galerkin solve in the multiscale space, plus fine and coarse Q1 reference solvers."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import assemble_global, global_load
from .cem import MsBasisSet
from .coeff import CoefficientField, ExactSolution, SourceField
from .errors import ProvenanceError, SingularMatrixError
from .grid import GridHierarchy
from .linsolve import factor, solve

__all__ = [
    "CoarseSystem",
    "Solution",
    "assemble_online",
    "solve_online",
    "solve_reference",
    "interpolate_exact",
    "q1_prolongation",
    "solve_q1_coarse",
    "galerkin_residuals",
]

DENSE_LIMIT = 5000
COLUMN_BLOCK = 2048  # bounds the size of the A @ phi intermediate


def _column_blocks(n):
    return [(lo, min(lo + COLUMN_BLOCK, n)) for lo in range(0, n, COLUMN_BLOCK)]


def gram(A, phi) -> sp.csr_matrix:
    """phi^T A phi computed over column blocks of phi."""
    phi = phi.tocsc()
    pt = phi.T.tocsr()
    parts = [pt @ (A @ phi[:, lo:hi]) for lo, hi in _column_blocks(phi.shape[1])]
    return sp.hstack(parts, format="csr")


def column_quadratic(A, phi) -> np.ndarray:
    """diag(phi^T A phi) without forming the full product."""
    phi = phi.tocsc()
    out = np.empty(phi.shape[1])
    for lo, hi in _column_blocks(phi.shape[1]):
        blk = phi[:, lo:hi]
        out[lo:hi] = np.asarray(blk.multiply(A @ blk).sum(axis=0)).ravel()
    return out


@dataclass(frozen=True, eq=False)
class CoarseSystem:
    matrix: object  # ndarray when dense, csc otherwise
    rhs: np.ndarray
    basis: MsBasisSet

    @property
    def dim(self) -> int:
        return len(self.rhs)

    @property
    def dense(self) -> bool:
        return isinstance(self.matrix, np.ndarray)

    def index(self, p: int) -> tuple[int, int]:
        return self.basis.index(p)


@dataclass(frozen=True, eq=False)
class Solution:
    u: np.ndarray  # fine-node vector
    coefficients: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def assemble_online(g: GridHierarchy, field: CoefficientField, B: MsBasisSet,
                    f: SourceField, A_signed=None, load=None) -> CoarseSystem:
    if B.field_digest != field.digest:
        raise ProvenanceError("multiscale basis was built for a different coefficient")
    A = assemble_global(g, field, "signed-sigma", "stiffness") if A_signed is None else A_signed
    b = global_load(g, f) if load is None else load
    G = gram(A, B.phi)
    G = (G + G.T) * 0.5  # remove round-off asymmetry of the two products
    r = B.phi.T @ b
    if G.shape[0] <= DENSE_LIMIT:
        return CoarseSystem(G.toarray(), r, B)
    return CoarseSystem(G.tocsc(), r, B)


def solve_online(cs: CoarseSystem) -> Solution:
    t0 = time.perf_counter()
    try:
        F = factor(cs.matrix, symmetric=True)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"coarse multiscale system is singular: {exc}",
                                  pivot_index=exc.pivot_index) from exc
    c = solve(F, cs.rhs)
    u = cs.basis.phi @ c
    return Solution(u, c, {"dim": cs.dim, "inertia": F.inertia,
                           "solve_s": time.perf_counter() - t0})


def _dirichlet_solve(A: sp.csr_matrix, b: np.ndarray, free: np.ndarray, n: int) -> np.ndarray:
    Af = A[free][:, free]
    F = factor(Af.tocsc(), symmetric=True)
    u = np.zeros(n)
    u[free] = solve(F, b[free])
    return u


def solve_reference(g: GridHierarchy, field: CoefficientField, f: SourceField,
                    A_signed=None) -> Solution:
    """Fine-mesh Q1 solution with homogeneous Dirichlet data."""
    t0 = time.perf_counter()
    A = assemble_global(g, field, "signed-sigma", "stiffness") if A_signed is None else A_signed
    b = global_load(g, f)
    u = _dirichlet_solve(A, b, g.interior_nodes, g.n_nodes)
    return Solution(u, None, {"solve_s": time.perf_counter() - t0})


def interpolate_exact(g: GridHierarchy, e: ExactSolution) -> np.ndarray:
    xy = g.node_coords
    return e.u(xy[:, 0], xy[:, 1])


def q1_prolongation(g: GridHierarchy) -> sp.csr_matrix:
    """Bilinear interpolation from coarse-mesh nodes to fine-mesh nodes."""
    s, nc, nf = g.sub_n, g.coarse_n, g.fine_n
    t = np.arange(nf + 1)
    e = np.minimum(t // s, nc - 1)
    w1 = (t - e * s) / s
    P1 = sp.csr_matrix((np.concatenate([1 - w1, w1]),
                        (np.concatenate([t, t]), np.concatenate([e, e + 1]))),
                       shape=(nf + 1, nc + 1))
    P1.eliminate_zeros()
    return sp.kron(P1, P1, format="csr")  # y-major ordering, x fastest


def solve_q1_coarse(g: GridHierarchy, field: CoefficientField, f: SourceField,
                    A_signed=None) -> Solution:
    """Q1 on the coarse mesh with the fine sigma integrated exactly.

    Coarse bilinears are piecewise bilinear on the fine mesh, so
    ``P^T A_fine P`` is the exact coarse stiffness for piecewise-constant sigma.
    """
    A = assemble_global(g, field, "signed-sigma", "stiffness") if A_signed is None else A_signed
    P = q1_prolongation(g)
    Ac = (P.T @ A @ P).tocsr()
    bc = P.T @ global_load(g, f)
    nc = g.coarse_n + 1
    iy, ix = np.divmod(np.arange(nc * nc), nc)
    free = np.flatnonzero((ix > 0) & (iy > 0) & (ix < nc - 1) & (iy < nc - 1))
    c = _dirichlet_solve(Ac, bc, free, nc * nc)
    return Solution(P @ c, c)


def galerkin_residuals(A_signed, B: MsBasisSet, u_h, u_H) -> np.ndarray:
    """a(u_h - u_H, phi_p) for every basis function p."""
    return B.phi.T @ (A_signed @ (np.asarray(u_h) - np.asarray(u_H)))
