"""Coefficient profiles, source terms and the flat-interface exact solution."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .grid import GridHierarchy

__all__ = [
    "CoefficientField",
    "SourceField",
    "ExactSolution",
    "flat_interface",
    "flat_wellposed",
    "periodic_square",
    "periodic_cross",
    "random_inclusions",
    "gaussian_source",
    "constant_field",
    "DEFAULT_GAUSSIAN_CENTERS",
]

DEFAULT_GAUSSIAN_CENTERS = ((0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75))


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Piecewise-constant sigma, ``values[cy, cx]`` with row 0 at the bottom."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ConfigurationError(f"coefficient must be a square array, got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v == 0.0):
            raise ConfigurationError("coefficient values must be finite and nonzero")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def fine_n(self) -> int:
        return self.values.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @property
    def abs(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def sign(self) -> np.ndarray:
        return np.sign(self.values)

    @property
    def positive(self) -> np.ndarray:
        return self.values > 0

    @property
    def negative(self) -> np.ndarray:
        return self.values < 0

    def _extreme(self, mask, fn):
        sel = np.abs(self.values[mask])
        return float(fn(sel)) if sel.size else float("nan")

    @property
    def sigma_plus_max(self):
        return self._extreme(self.positive, np.max)

    @property
    def sigma_plus_min(self):
        return self._extreme(self.positive, np.min)

    @property
    def sigma_minus_max(self):
        return self._extreme(self.negative, np.max)

    @property
    def sigma_minus_min(self):
        return self._extreme(self.negative, np.min)

    @property
    def contrast(self) -> float:
        """Upsilon = sigma+_min / sigma-_max (nan when a subdomain is empty)."""
        return self.sigma_plus_min / self.sigma_minus_max

    @property
    def negative_fraction(self) -> float:
        return float(np.mean(self.negative))

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(self.values.tobytes()).hexdigest()

    def check_grid(self, g: GridHierarchy):
        if self.fine_n != g.fine_n:
            raise ConfigurationError(
                f"coefficient has {self.fine_n} cells per side, grid has {g.fine_n}")

    def scaled(self, c: float) -> "CoefficientField":
        return CoefficientField(self.values * c)

    def to_csv(self, path):
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "CoefficientField":
        return cls(np.loadtxt(Path(path), delimiter=",", ndmin=2))


def constant_field(g: GridHierarchy, value: float = 1.0) -> CoefficientField:
    return CoefficientField(np.full((g.fine_n, g.fine_n), float(value)))


@dataclass(frozen=True)
class SourceField:
    """Right-hand side sampled at fine nodes."""

    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("source values must be finite")


@dataclass(frozen=True)
class ExactSolution:
    gamma: float
    sigma_plus: float
    sigma_minus: float

    def _profile(self, x1, x2):
        return x1 * (x1 - 1.0) * x2 * (x2 - 1.0) * (x2 - self.gamma)

    def u(self, x1, x2):
        x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
        p = self._profile(x1, x2)
        return np.where(x2 > self.gamma, -self.sigma_minus * p, self.sigma_plus * p)

    def f(self, x1, x2):
        x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
        g = self.gamma
        return self.sigma_minus * self.sigma_plus * (
            2.0 * x2 * (x2 - 1.0) * (x2 - g) + x1 * (x1 - 1.0) * (6.0 * x2 - 2.0 * (g + 1.0)))

    def sigma(self, x2):
        return np.where(np.asarray(x2) > self.gamma, self.sigma_plus, -self.sigma_minus)


def flat_interface(g: GridHierarchy, gamma: float, sigma_plus: float, sigma_minus: float):
    """sigma = +sigma_plus above x2 = gamma and -sigma_minus below.

    Returns ``(CoefficientField, ExactSolution)``. A cell is negative iff its
    center lies below gamma.
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError(f"gamma must lie in (0, 1), got {gamma}")
    if sigma_plus <= 0 or sigma_minus <= 0:
        raise ConfigurationError("sigma_plus and sigma_minus must be positive")
    yc = g.cell_centers[..., 1]
    values = np.where(yc > gamma, float(sigma_plus), -float(sigma_minus))
    return CoefficientField(values), ExactSolution(float(gamma), float(sigma_plus), float(sigma_minus))


def flat_wellposed(gamma: float, sigma_plus: float, sigma_minus: float) -> bool:
    """T-coercivity check for the flat interface: ratio outside the critical band."""
    ratio = sigma_minus / sigma_plus
    t = gamma / (1.0 - gamma)
    lo, hi = (t, 1.0) if gamma <= 0.5 else (1.0, t)
    return not (lo <= ratio <= hi)


def _cell_size(g: GridHierarchy, n_cells: int, divisor: int) -> int:
    if n_cells < 1 or g.fine_n % (divisor * n_cells):
        raise ConfigurationError(
            f"fine_n={g.fine_n} does not resolve a {n_cells}x{n_cells} periodic layout "
            f"(needs a multiple of {divisor * n_cells})")
    return g.fine_n // n_cells


def _two_phase(mask_negative, sigma_plus, sigma_minus):
    if sigma_plus <= 0 or sigma_minus <= 0:
        raise ConfigurationError("sigma_plus and sigma_minus must be positive")
    return CoefficientField(np.where(mask_negative, -float(sigma_minus), float(sigma_plus)))


def periodic_square(g: GridHierarchy, n_cells: int, sigma_plus: float, sigma_minus: float):
    """Centered square inclusions of half the period, carrying -sigma_minus."""
    c = _cell_size(g, n_cells, 4)
    local = np.arange(g.fine_n) % c
    band = (local >= c // 4) & (local < c - c // 4)
    return _two_phase(band[:, None] & band[None, :], sigma_plus, sigma_minus)


def periodic_cross(g: GridHierarchy, n_cells: int, sigma_plus: float, sigma_minus: float):
    """Plus-shaped inclusions with arm width period/5 spanning the whole cell."""
    c = _cell_size(g, n_cells, 5)
    w = c // 5
    local = np.arange(g.fine_n) % c
    band = (local >= (c - w) // 2) & (local < (c + w) // 2)
    return _two_phase(band[:, None] | band[None, :], sigma_plus, sigma_minus)


def random_inclusions(g: GridHierarchy, seed: int, count: int, side_range: Sequence[int],
                      sigma_plus: float, sigma_minus: float):
    """Union of ``count`` random axis-aligned squares (overlaps allowed).

    Side lengths are uniform integers in ``side_range`` (inclusive, fine
    cells); lower-left corners are uniform over positions keeping the square
    inside the domain.
    """
    lo, hi = int(side_range[0]), int(side_range[1])
    if not 1 <= lo <= hi <= g.fine_n:
        raise ConfigurationError(f"invalid side range {side_range}")
    rng = np.random.default_rng(seed)
    mask = np.zeros((g.fine_n, g.fine_n), dtype=bool)
    for _ in range(int(count)):
        side = int(rng.integers(lo, hi + 1))
        x0, y0 = rng.integers(0, g.fine_n - side + 1, size=2)
        mask[y0:y0 + side, x0:x0 + side] = True
    return _two_phase(mask, sigma_plus, sigma_minus)


def gaussian_source(g: GridHierarchy, centers=DEFAULT_GAUSSIAN_CENTERS, variance: float = 0.01,
                    amplitude: float = 1.0) -> SourceField:
    if variance <= 0:
        raise ConfigurationError("variance must be positive")
    xy = g.node_coords
    f = np.zeros(len(xy))
    for c in centers:
        d2 = np.sum((xy - np.asarray(c, float)) ** 2, axis=1)
        f += np.exp(-d2 / (2.0 * variance))
    return SourceField(amplitude * f)


def exact_source(g: GridHierarchy, e: ExactSolution) -> SourceField:
    xy = g.node_coords
    return SourceField(e.f(xy[:, 0], xy[:, 1]))
