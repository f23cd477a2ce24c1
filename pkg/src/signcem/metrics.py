"""Weighted energy norm, L2 norm and the relative error indices."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble, assemble_global
from .coeff import CoefficientField
from .errors import NumericalError, UndefinedRatioError
from .grid import GridHierarchy, Region

__all__ = ["ErrorReport", "energy_norm", "l2_norm", "error_report", "Norms"]


def _quad(A, v):
    return max(float(v @ (A @ v)), 0.0)


def energy_norm(g: GridHierarchy, field: CoefficientField, v, r: Region | None = None) -> float:
    """(int_r |sigma| |grad v|^2)^(1/2); ``v`` lives on all fine nodes (or on r's nodes)."""
    v = np.asarray(v, dtype=np.float64)
    if r is None:
        return math.sqrt(_quad(assemble_global(g, field, "abs-sigma", "stiffness"), v))
    A = assemble(g, field, "abs-sigma", r, "stiffness", restrict=False)
    if len(v) == g.n_nodes:
        v = v[A.nodes]
    return math.sqrt(_quad(A.matrix, v))


def l2_norm(g: GridHierarchy, v) -> float:
    from .coeff import constant_field
    M = assemble_global(g, constant_field(g), "unit", "mass")
    return math.sqrt(_quad(M, np.asarray(v, dtype=np.float64)))


class Norms:
    """Cached global norm matrices for repeated evaluation on one grid/field."""

    def __init__(self, g: GridHierarchy, field: CoefficientField):
        self.grid = g
        self.A_abs = assemble_global(g, field, "abs-sigma", "stiffness")
        self.M = assemble_global(g, field, "unit", "mass")

    def energy(self, v) -> float:
        return math.sqrt(_quad(self.A_abs, v))

    def l2(self, v) -> float:
        return math.sqrt(_quad(self.M, v))


@dataclass(frozen=True)
class ErrorReport:
    rel_energy: float
    rel_l2: float
    ref_energy: float
    ref_l2: float
    err_energy: float
    err_l2: float
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(math.isnan(x) for x in (self.rel_energy, self.rel_l2)):
            raise NumericalError("relative error is NaN")


def error_report(g: GridHierarchy, field: CoefficientField, u_ref, u_num, config=None,
                 norms: Norms | None = None) -> ErrorReport:
    norms = Norms(g, field) if norms is None else norms
    e = np.asarray(u_ref, dtype=np.float64) - np.asarray(u_num, dtype=np.float64)
    re, rl = norms.energy(u_ref), norms.l2(u_ref)
    if re == 0.0 or rl == 0.0:
        raise UndefinedRatioError("reference solution has zero norm")
    ee, el = norms.energy(e), norms.l2(e)
    return ErrorReport(ee / re, el / rl, re, rl, ee, el, dict(config or {}))
