"""Element-wise auxiliary spaces from the |sigma|-weighted eigenproblem.

On each coarse element K we solve, with natural boundary conditions,

    (|sigma| grad v, grad w)_K = lambda (24 H^-2 |sigma| v, w)_K

and keep the ``l_star`` lowest eigenvectors. The projection onto their span
is orthogonal in the abs-mu mass inner product; the signed Gram matrix
``S_K = Psi^T M_signed Psi`` carries the sign information used by the
basis solves.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as la

from .assembly import local_q1_mass, local_q1_stiffness
from .coeff import CoefficientField
from .errors import ConfigurationError, EigenSolverError
from .grid import GridHierarchy, Region

__all__ = [
    "ElementEigen",
    "AuxSpace",
    "ProjectedField",
    "SpectralReport",
    "element_matrices",
    "solve_local_eigen",
    "signed_eigen_diagnostic",
    "build_aux_space",
    "project",
    "spectral_statistics",
]

ZERO_CLAMP = 1e-12


def _element_operator(g: GridHierarchy, cell_w: np.ndarray, loc: np.ndarray) -> np.ndarray:
    """Dense Neumann matrix on the (sub_n+1)^2 element nodes from per-cell weights."""
    s = g.sub_n
    ly, lx = np.divmod(np.arange(s * s), s)
    n0 = ly * (s + 1) + lx
    cn = np.column_stack([n0, n0 + 1, n0 + s + 2, n0 + s + 1])
    M = np.zeros(((s + 1) ** 2, (s + 1) ** 2))
    vals = cell_w[:, None, None] * loc[None, :, :]
    np.add.at(M, (cn[:, :, None], cn[:, None, :]), vals)
    return M


def element_matrices(g: GridHierarchy, field: CoefficientField, i: int):
    """(abs-sigma stiffness, abs-mu mass, signed-mu mass) on element ``i``."""
    field.check_grid(g)
    sig = field.flat[g.element_cells[i]]
    K = local_q1_stiffness(g.h)
    M = local_q1_mass(g.h)
    A = _element_operator(g, np.abs(sig), K)
    B = _element_operator(g, g.mu_scale * np.abs(sig), M)
    S = _element_operator(g, g.mu_scale * sig, M)
    return A, B, S


def _sign_convention(V: np.ndarray) -> np.ndarray:
    for k in range(V.shape[1]):
        col = V[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            V[:, k] = -col
    return V


@dataclass(frozen=True, eq=False)
class ElementEigen:
    """Eigen data of one coarse element.

    ``eigvals`` holds ``n_eig >= l_star + 1`` ascending values (only
    ``l_star`` when every local mode is kept); ``vectors`` the first
    ``l_star`` eigenvectors (columns, element-local nodes).
    """

    element: int
    eigvals: np.ndarray
    vectors: np.ndarray
    gram_signed: np.ndarray  # S_K = Psi^T M_signed Psi
    proj_rows: np.ndarray  # Psi^T M_abs, maps local values to aux coefficients

    @property
    def gap(self) -> float:
        ls = self.vectors.shape[1]
        return float(self.eigvals[ls]) if len(self.eigvals) > ls else np.inf


def _solve_pencil(A, B, n_eig, element):
    try:
        w, V = la.eigh(A, B, subset_by_index=[0, n_eig - 1], driver="gvx")
    except (la.LinAlgError, ValueError) as exc:
        raise EigenSolverError(f"eigensolver failed on element {element}: {exc}",
                               element=element) from exc
    w = np.where(np.abs(w) < ZERO_CLAMP, 0.0, w)
    return w, _sign_convention(V)


def _pattern_key(field: CoefficientField, g: GridHierarchy, i: int) -> np.ndarray:
    return np.abs(field.flat[g.element_cells[i]])


def solve_local_eigen(g: GridHierarchy, field: CoefficientField, i: int, l_star: int,
                      n_eig: int | None = None) -> ElementEigen:
    """Lowest eigenpairs of the |sigma| pencil on coarse element ``i``."""
    n_loc = (g.sub_n + 1) ** 2
    n_eig = l_star + 1 if n_eig is None else max(n_eig, l_star + 1)
    n_eig = min(n_eig, n_loc)
    if not 1 <= l_star <= n_loc:
        raise ConfigurationError(
            f"l_star={l_star} incompatible with {n_loc} local nodes (n_eig={n_eig})")
    A, B, S = element_matrices(g, field, i)
    w, V = _solve_pencil(A, B, n_eig, i)
    psi = V[:, :l_star]
    return ElementEigen(i, w, psi, psi.T @ S @ psi, psi.T @ B)


def signed_eigen_diagnostic(g: GridHierarchy, field: CoefficientField, i: int) -> np.ndarray:
    """All eigenvalues of the signed pencil (sigma on both sides) on element ``i``.

    The right-hand matrix is indefinite when the element straddles the
    interface, so this is solved as a general (non-symmetric) problem. Only
    used to show that the signed construction yields negative eigenvalues.
    """
    sig = field.flat[g.element_cells[i]]
    A = _element_operator(g, sig, local_q1_stiffness(g.h))
    S = _element_operator(g, g.mu_scale * sig, local_q1_mass(g.h))
    w = la.eigvals(A, S)
    w = w[np.isfinite(w)]
    return np.sort(w.real[np.abs(w.imag) <= 1e-8 * np.maximum(1.0, np.abs(w.real))])


@dataclass(frozen=True, eq=False)
class AuxSpace:
    grid: GridHierarchy
    l_star: int
    elements: tuple[ElementEigen, ...]
    field_digest: str

    @property
    def eigvals(self) -> np.ndarray:
        """(n_elem, n_eig) eigenvalues."""
        return np.array([e.eigvals for e in self.elements])

    @property
    def gaps(self) -> np.ndarray:
        return np.array([e.gap for e in self.elements])

    @property
    def epsilon(self) -> float:
        return 1.0 / float(self.gaps.max())

    @property
    def vectors(self) -> np.ndarray:
        """(n_elem, n_loc, l_star)"""
        return np.stack([e.vectors for e in self.elements])

    @property
    def proj_rows(self) -> np.ndarray:
        """(n_elem, l_star, n_loc)"""
        return np.stack([e.proj_rows for e in self.elements])

    @property
    def grams(self) -> np.ndarray:
        """(n_elem, l_star, l_star) signed Gram matrices."""
        return np.stack([e.gram_signed for e in self.elements])

    @property
    def digest(self) -> str:
        return aux_digest(self.grid, self.field_digest, self.l_star)

    @property
    def n_basis(self) -> int:
        return self.grid.n_elem * self.l_star

    def save(self, path):
        np.savez(path, l_star=self.l_star, fine_n=self.grid.fine_n, coarse_n=self.grid.coarse_n,
                 field_digest=self.field_digest, eigvals=self.eigvals, vectors=self.vectors,
                 grams=self.grams, proj_rows=self.proj_rows)

    @classmethod
    def load(cls, path) -> "AuxSpace":
        with np.load(Path(path)) as z:
            # each z[key] access re-reads the member, so load every array once
            z = {k: z[k] for k in z.files}
        g = GridHierarchy(int(z["fine_n"]), int(z["coarse_n"]))
        ev, vec, gr, pr = z["eigvals"], z["vectors"], z["grams"], z["proj_rows"]
        elems = tuple(ElementEigen(i, ev[i], vec[i], gr[i], pr[i]) for i in range(g.n_elem))
        return cls(g, int(z["l_star"]), elems, str(z["field_digest"]))


def aux_digest(g: GridHierarchy, field_digest: str, l_star: int) -> str:
    key = f"aux|{g.fine_n}|{g.coarse_n}|{l_star}|{field_digest}"
    return hashlib.sha256(key.encode()).hexdigest()


def build_aux_space(g: GridHierarchy, field: CoefficientField, l_star: int,
                    n_eig: int | None = None, threads: int = 1) -> AuxSpace:
    """Solve every element eigenproblem.

    Elements with an identical local |sigma| pattern share a pencil, so each
    distinct pattern is solved once.
    """
    field.check_grid(g)
    n_eig = max(l_star + 1, 4) if n_eig is None else max(n_eig, l_star + 1)
    n_eig = min(n_eig, (g.sub_n + 1) ** 2)
    keys = [_pattern_key(field, g, i).tobytes() for i in range(g.n_elem)]
    first = {}
    for i, k in enumerate(keys):
        first.setdefault(k, i)
    reps = sorted(first.values())

    def work(i):
        return solve_local_eigen(g, field, i, l_star, n_eig)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            solved = dict(zip(reps, ex.map(work, reps)))
    else:
        solved = {i: work(i) for i in reps}

    elems = []
    for i, k in enumerate(keys):
        src = solved[first[k]]
        if first[k] == i:
            elems.append(src)
            continue
        # same |sigma| pattern: eigvecs and B-projection carry over, the
        # signed Gram may differ in sign
        _, _, S = element_matrices(g, field, i)
        elems.append(ElementEigen(i, src.eigvals, src.vectors,
                                  src.vectors.T @ S @ src.vectors, src.proj_rows))
    return AuxSpace(g, l_star, tuple(elems), field.digest)


@dataclass(frozen=True, eq=False)
class ProjectedField:
    """P_H v as per-element coefficients in the local eigenbases."""

    aux: AuxSpace
    coefficients: np.ndarray  # (n_elem, l_star)

    def local(self, i: int) -> np.ndarray:
        return self.aux.elements[i].vectors @ self.coefficients[i]

    def broken(self) -> np.ndarray:
        """(n_elem, n_loc) element-local nodal values."""
        return np.einsum("enl,el->en", self.aux.vectors, self.coefficients)


def project(aux: AuxSpace, v: np.ndarray, r: Region | None = None) -> ProjectedField:
    """Apply P_H to ``v``.

    ``v`` is either a global fine-node vector (a continuous Q1 function) or a
    broken field of shape (n_elem, n_loc). Elements outside ``r`` get zero
    coefficients.
    """
    g = aux.grid
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        if len(v) != g.n_nodes:
            raise ConfigurationError("vector is not a fine-node vector of this grid")
        local = v[g.element_nodes]
    else:
        local = v
    coef = np.einsum("eln,en->el", aux.proj_rows, local)
    if r is not None:
        mask = np.zeros(g.n_elem, dtype=bool)
        mask[r.elements] = True
        coef[~mask] = 0.0
    return ProjectedField(aux, coef)


@dataclass(frozen=True)
class SpectralReport:
    H: float
    n_elem: int
    mins: tuple[float, ...]  # min over elements of lambda_2, lambda_3, ...
    maxs: tuple[float, ...]

    def row(self) -> dict:
        out = {"H": self.H}
        for k, (lo, hi) in enumerate(zip(self.mins, self.maxs), start=2):
            out[f"lambda{k}_min"] = lo
            out[f"lambda{k}_max"] = hi
        return out


def spectral_statistics(aux: AuxSpace, upto: int = 4) -> SpectralReport:
    """Min/max over elements of lambda_2 .. lambda_upto (truncated to what was solved)."""
    ev = aux.eigvals
    k = min(upto, ev.shape[1])
    sel = ev[:, 1:k]
    return SpectralReport(aux.grid.H, aux.grid.n_elem,
                          tuple(float(x) for x in sel.min(axis=0)),
                          tuple(float(x) for x in sel.max(axis=0)))
