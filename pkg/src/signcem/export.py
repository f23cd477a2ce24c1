"""Field dumps: VTK legacy ASCII structured points and CSV node tables."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .grid import GridHierarchy


def write_vtk(path, g: GridHierarchy, point_data=None, cell_data=None, title="signcem field"):
    """Write node and cell arrays on the fine mesh as a STRUCTURED_POINTS dataset."""
    point_data = point_data or {}
    cell_data = cell_data or {}
    n = g.fine_n + 1
    lines = [
        "# vtk DataFile Version 3.0",
        title[:255],
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {n} {n} 1",
        "ORIGIN 0 0 0",
        f"SPACING {g.h!r} {g.h!r} 1",
    ]
    if point_data:
        lines.append(f"POINT_DATA {g.n_nodes}")
        for name, arr in point_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{x:.12e}" for x in np.asarray(arr, dtype=float).ravel()]
    if cell_data:
        # a 2D structured-points set with DIMENSIONS n n 1 has n-1 x n-1 cells
        lines.append(f"CELL_DATA {g.n_cells}")
        for name, arr in cell_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{x:.12e}" for x in np.asarray(arr, dtype=float).ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_point_data(path) -> dict:
    """Minimal reader for files produced by :func:`write_vtk` (point data only)."""
    out, name, vals, section = {}, None, None, None
    for line in Path(path).read_text().splitlines():
        tok = line.split()
        if not tok:
            continue
        if tok[0] in ("POINT_DATA", "CELL_DATA"):
            section = tok[0]
            continue
        if tok[0] == "SCALARS":
            name, vals = tok[1], []
            if section == "POINT_DATA":
                out[name] = vals
            continue
        if tok[0] == "LOOKUP_TABLE":
            continue
        if vals is not None and section is not None:
            vals.append(float(tok[0]))
    return {k: np.array(v) for k, v in out.items()}


def write_node_csv(path, g: GridHierarchy, columns: dict):
    xy = g.node_coords
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "x", "y", *names])
        cols = [np.asarray(columns[k], dtype=float) for k in names]
        for k in range(g.n_nodes):
            w.writerow([k, repr(float(xy[k, 0])), repr(float(xy[k, 1])),
                        *(repr(float(c[k])) for c in cols)])
