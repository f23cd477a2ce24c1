"""Q1 assembly of stiffness and mass forms on the fine mesh."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .coeff import CoefficientField, SourceField
from .errors import ConfigurationError
from .grid import GridHierarchy, Region, whole_domain

__all__ = [
    "SparseSymMatrix",
    "WeightSpec",
    "local_q1_stiffness",
    "local_q1_mass",
    "cell_weights",
    "assemble",
    "assemble_global",
    "assemble_load",
    "global_load",
    "write_matrix_market",
]

MODES = ("signed-sigma", "abs-sigma", "signed-mu", "abs-mu", "unit")

_STIFF = np.array([[4.0, -1.0, -2.0, -1.0],
                   [-1.0, 4.0, -1.0, -2.0],
                   [-2.0, -1.0, 4.0, -1.0],
                   [-1.0, -2.0, -1.0, 4.0]]) / 6.0
_MASS = np.array([[4.0, 2.0, 1.0, 2.0],
                  [2.0, 4.0, 2.0, 1.0],
                  [1.0, 2.0, 4.0, 2.0],
                  [2.0, 1.0, 2.0, 4.0]]) / 36.0


def local_q1_stiffness(h: float) -> np.ndarray:
    """Element matrix of grad(phi_a).grad(phi_b) on an h x h square (h-independent in 2D)."""
    if h <= 0:
        raise ConfigurationError("cell size must be positive")
    return _STIFF.copy()


def local_q1_mass(h: float) -> np.ndarray:
    if h <= 0:
        raise ConfigurationError("cell size must be positive")
    return _MASS * h * h


@dataclass(frozen=True)
class WeightSpec:
    mode: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown weight mode {self.mode!r}; expected one of {MODES}")

    @property
    def signed(self) -> bool:
        return self.mode.startswith("signed")


@dataclass(frozen=True, eq=False)
class SparseSymMatrix:
    """CSR matrix (full symmetric storage) with the global node of every row."""

    matrix: sp.csr_matrix
    nodes: np.ndarray
    definiteness: str

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def is_symmetric(self, rtol=1e-14) -> bool:
        d = abs(self.matrix - self.matrix.T)
        scale = abs(self.matrix).max() if self.matrix.nnz else 1.0
        return d.nnz == 0 or d.max() <= rtol * scale

    def toarray(self):
        return self.matrix.toarray()


def cell_weights(g: GridHierarchy, field: CoefficientField, w: WeightSpec | str) -> np.ndarray:
    if isinstance(w, str):
        w = WeightSpec(w)
    field.check_grid(g)
    s = field.flat
    return {
        "signed-sigma": lambda: s,
        "abs-sigma": lambda: np.abs(s),
        "signed-mu": lambda: g.mu_scale * s,
        "abs-mu": lambda: g.mu_scale * np.abs(s),
        "unit": lambda: np.ones_like(s),
    }[w.mode]()


def _local(g, operator):
    if operator == "stiffness":
        return local_q1_stiffness(g.h)
    if operator == "mass":
        return local_q1_mass(g.h)
    raise ConfigurationError(f"unknown operator {operator!r}")


def _coo(g, cells, weights, operator):
    loc = _local(g, operator)
    cn = g.cell_nodes[cells]
    rows = np.repeat(cn, 4, axis=1).ravel()
    cols = np.tile(cn, (1, 4)).ravel()
    vals = (weights[cells][:, None] * loc.ravel()[None, :]).ravel()
    return rows, cols, vals


def _tag(w: WeightSpec, operator, restricted):
    if w.signed:
        return "indefinite"
    if operator == "mass":
        return "positive-definite"
    return "positive-definite" if restricted else "positive-semidefinite"


def assemble_global(g: GridHierarchy, field: CoefficientField, w, operator: str) -> sp.csr_matrix:
    """Unrestricted matrix over all fine nodes."""
    wts = cell_weights(g, field, w)
    rows, cols, vals = _coo(g, np.arange(g.n_cells), wts, operator)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(g.n_nodes, g.n_nodes))
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble(g: GridHierarchy, field: CoefficientField, w, r: Region | None = None,
             operator: str = "stiffness", restrict: bool = True) -> SparseSymMatrix:
    """Assemble over the cells of ``r``.

    With ``restrict`` the rows/columns are the interior nodes of the region
    (the discrete H^1_0 of the region intersected with the domain);
    otherwise all region nodes are kept (natural boundary conditions).
    """
    if isinstance(w, str):
        w = WeightSpec(w)
    r = whole_domain(g) if r is None else r
    wts = cell_weights(g, field, w)
    rows, cols, vals = _coo(g, r.cells, wts, operator)
    if restrict:
        nodes = r.interior_nodes
        ri, ci = r.interior_position(rows), r.interior_position(cols)
    else:
        nodes = r.nodes
        ri, ci = np.searchsorted(nodes, rows), np.searchsorted(nodes, cols)
    keep = (ri >= 0) & (ci >= 0)
    n = len(nodes)
    A = sp.csr_matrix((vals[keep], (ri[keep], ci[keep])), shape=(n, n))
    A.sum_duplicates()
    A.sort_indices()
    return SparseSymMatrix(A, nodes, _tag(w, operator, restrict))


def global_load(g: GridHierarchy, f: SourceField) -> np.ndarray:
    """Consistent-mass load over all nodes: b = M_unit f_nodes."""
    if len(f.values) != g.n_nodes:
        raise ConfigurationError("source is not sampled on this grid")
    rows, cols, vals = _coo(g, np.arange(g.n_cells), np.ones(g.n_cells), "mass")
    return np.bincount(rows, weights=vals * f.values[cols], minlength=g.n_nodes)


def assemble_load(g: GridHierarchy, f: SourceField, r: Region | None = None,
                  restrict: bool = True) -> np.ndarray:
    r = whole_domain(g) if r is None else r
    if len(f.values) != g.n_nodes:
        raise ConfigurationError("source is not sampled on this grid")
    rows, cols, vals = _coo(g, r.cells, np.ones(g.n_cells), "mass")
    full = np.bincount(rows, weights=vals * f.values[cols], minlength=g.n_nodes)
    nodes = r.interior_nodes if restrict else r.nodes
    return full[nodes]


def write_matrix_market(path, A):
    M = A.matrix if isinstance(A, SparseSymMatrix) else A
    scipy.io.mmwrite(str(path), sp.coo_matrix(M), symmetry="general")
