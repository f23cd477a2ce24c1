"""Nested structured quadrilateral meshes on the unit square.

Fine nodes are numbered lexicographically with x fastest::

    node(ix, iy) = iy * (fine_n + 1) + ix

fine cells as ``cy * fine_n + cx`` and coarse elements as ``ey * coarse_n + ex``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "GridHierarchy",
    "Region",
    "LocalDofMap",
    "build_hierarchy",
    "oversample",
    "local_dof_map",
]


@dataclass(frozen=True)
class GridHierarchy:
    fine_n: int
    coarse_n: int

    def __post_init__(self):
        if self.coarse_n < 1 or self.fine_n < self.coarse_n:
            raise ConfigurationError(
                f"need fine_n >= coarse_n >= 1, got ({self.fine_n}, {self.coarse_n})")
        if self.fine_n % self.coarse_n:
            raise ConfigurationError(
                f"fine_n={self.fine_n} is not a multiple of coarse_n={self.coarse_n}")

    @property
    def h(self) -> float:
        return 1.0 / self.fine_n

    @property
    def H(self) -> float:
        return 1.0 / self.coarse_n

    @property
    def sub_n(self) -> int:
        return self.fine_n // self.coarse_n

    @property
    def elem_diam(self) -> float:
        return np.sqrt(2.0) * self.H

    @property
    def n_elem(self) -> int:
        return self.coarse_n ** 2

    @property
    def n_nodes(self) -> int:
        return (self.fine_n + 1) ** 2

    @property
    def n_cells(self) -> int:
        return self.fine_n ** 2

    @property
    def mu_scale(self) -> float:
        """Weight 24 H^-2 multiplying sigma in the weighted mass forms."""
        return 24.0 / self.H ** 2

    def node_index(self, ix, iy):
        return np.asarray(iy) * (self.fine_n + 1) + np.asarray(ix)

    @cached_property
    def node_coords(self) -> np.ndarray:
        """(n_nodes, 2) array of node coordinates."""
        t = np.linspace(0.0, 1.0, self.fine_n + 1)
        X, Y = np.meshgrid(t, t)
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def cell_centers(self) -> np.ndarray:
        """(fine_n, fine_n, 2) array; ``[cy, cx]`` is the center of that cell."""
        t = (np.arange(self.fine_n) + 0.5) * self.h
        X, Y = np.meshgrid(t, t)
        return np.stack([X, Y], axis=-1)

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """(n_cells, 4) corner nodes of every fine cell, counter-clockwise from (0, 0)."""
        n = self.fine_n
        cy, cx = np.divmod(np.arange(n * n), n)
        n0 = cy * (n + 1) + cx
        return np.column_stack([n0, n0 + 1, n0 + n + 2, n0 + n + 1])

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        n = self.fine_n
        iy, ix = np.divmod(np.arange(self.n_nodes), n + 1)
        return (ix == 0) | (iy == 0) | (ix == n) | (iy == n)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    def element_coords(self, i: int) -> tuple[int, int]:
        if not 0 <= i < self.n_elem:
            raise ConfigurationError(f"coarse element {i} out of range")
        ey, ex = divmod(int(i), self.coarse_n)
        return ex, ey

    @cached_property
    def element_nodes(self) -> np.ndarray:
        """(n_elem, (sub_n+1)^2) global fine nodes of each coarse element, lexicographic."""
        s, nc = self.sub_n, self.coarse_n
        ly, lx = np.divmod(np.arange((s + 1) ** 2), s + 1)
        ey, ex = np.divmod(np.arange(nc * nc), nc)
        ix = ex[:, None] * s + lx[None, :]
        iy = ey[:, None] * s + ly[None, :]
        return self.node_index(ix, iy)

    @cached_property
    def element_cells(self) -> np.ndarray:
        """(n_elem, sub_n^2) fine cells of each coarse element."""
        s, nc = self.sub_n, self.coarse_n
        ly, lx = np.divmod(np.arange(s * s), s)
        ey, ex = np.divmod(np.arange(nc * nc), nc)
        cx = ex[:, None] * s + lx[None, :]
        cy = ey[:, None] * s + ly[None, :]
        return cy * self.fine_n + cx

    @cached_property
    def cell_element(self) -> np.ndarray:
        """Owning coarse element of every fine cell."""
        n, s = self.fine_n, self.sub_n
        cy, cx = np.divmod(np.arange(n * n), n)
        return (cy // s) * self.coarse_n + cx // s


def build_hierarchy(fine_n: int, coarse_n: int) -> GridHierarchy:
    return GridHierarchy(int(fine_n), int(coarse_n))


@dataclass(frozen=True)
class Region:
    """A union of coarse elements forming an axis-aligned block.

    ``bbox`` is ``(ex0, ey0, ex1, ey1)`` in coarse-cell coordinates with
    exclusive upper ends.
    """

    grid: GridHierarchy = field(repr=False)
    bbox: tuple[int, int, int, int]

    @cached_property
    def elements(self) -> np.ndarray:
        ex0, ey0, ex1, ey1 = self.bbox
        ey, ex = np.mgrid[ey0:ey1, ex0:ex1]
        return (ey * self.grid.coarse_n + ex).ravel()

    @property
    def fine_box(self) -> tuple[int, int, int, int]:
        s = self.grid.sub_n
        ex0, ey0, ex1, ey1 = self.bbox
        return ex0 * s, ey0 * s, ex1 * s, ey1 * s

    @cached_property
    def nodes(self) -> np.ndarray:
        x0, y0, x1, y1 = self.fine_box
        iy, ix = np.mgrid[y0:y1 + 1, x0:x1 + 1]
        return self.grid.node_index(ix, iy).ravel()

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        # the box boundary contains every part of dOmega the region touches
        x0, y0, x1, y1 = self.fine_box
        iy, ix = np.mgrid[y0 + 1:y1, x0 + 1:x1]
        return self.grid.node_index(ix, iy).ravel()

    @cached_property
    def cells(self) -> np.ndarray:
        x0, y0, x1, y1 = self.fine_box
        cy, cx = np.mgrid[y0:y1, x0:x1]
        return (cy * self.grid.fine_n + cx).ravel()

    def interior_position(self, nodes) -> np.ndarray:
        """Row index of ``nodes`` among the interior nodes, -1 where not interior."""
        x0, y0, x1, y1 = self.fine_box
        iy, ix = np.divmod(np.asarray(nodes), self.grid.fine_n + 1)
        inside = (ix > x0) & (ix < x1) & (iy > y0) & (iy < y1)
        pos = (iy - y0 - 1) * (x1 - x0 - 1) + (ix - x0 - 1)
        return np.where(inside, pos, -1)

    def __len__(self):
        return len(self.elements)


def oversample(g: GridHierarchy, i: int, m: int) -> Region:
    """m-layer oversampling region of coarse element ``i``, clipped to the domain.

    On a structured mesh the closure-neighbourhood recursion is the block of
    elements within Chebyshev distance ``m``.
    """
    if m < 0:
        raise ConfigurationError(f"layer count must be >= 0, got {m}")
    ex, ey = g.element_coords(i)
    nc = g.coarse_n
    return Region(g, (max(ex - m, 0), max(ey - m, 0), min(ex + m + 1, nc), min(ey + m + 1, nc)))


def whole_domain(g: GridHierarchy) -> Region:
    return Region(g, (0, 0, g.coarse_n, g.coarse_n))


@dataclass(frozen=True)
class LocalDofMap:
    local_to_global: np.ndarray
    interior_mask: np.ndarray

    def to_global(self, local):
        return self.local_to_global[np.asarray(local)]

    def to_local(self, glob):
        glob = np.asarray(glob)
        pos = np.searchsorted(self.local_to_global, glob)
        pos = np.clip(pos, 0, len(self.local_to_global) - 1)
        if np.any(self.local_to_global[pos] != glob):
            raise KeyError("node not in region")
        return pos

    def __len__(self):
        return len(self.local_to_global)


def local_dof_map(g: GridHierarchy, r: Region) -> LocalDofMap:
    nodes = r.nodes
    mask = r.interior_position(nodes) >= 0
    return LocalDofMap(nodes, mask)
