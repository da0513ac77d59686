"""Uniform 1-D grid, trapezoid quadrature and the ghost-point Neumann Laplacian.

Fields are plain ``numpy`` arrays of length ``grid.n``; the grid is the only
place that knows about node positions and quadrature weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigError


@dataclass(frozen=True)
class Grid:
    """Uniform mesh of ``n`` nodes on ``[0, length]`` (both endpoints included)."""

    length: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.length) or self.length <= 0:
            raise ConfigError(f"grid length must be positive, got {self.length!r}")
        if int(self.n) != self.n or self.n < 3:
            raise ConfigError(f"grid needs at least 3 nodes, got {self.n!r}")
        object.__setattr__(self, "length", float(self.length))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return self.length / (self.n - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = np.linspace(0.0, self.length, self.n)
        x.flags.writeable = False
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.n, self.h)
        w[0] = w[-1] = 0.5 * self.h
        w.flags.writeable = False
        return w

    @cached_property
    def laplacian(self) -> "NeumannLaplacian":
        return NeumannLaplacian(self)

    def sample(self, func) -> np.ndarray:
        """Evaluate a callable at the nodes, or broadcast a scalar."""
        if callable(func):
            values = np.asarray(func(self.x), dtype=float)
            return np.broadcast_to(values, (self.n,)).copy()
        return np.full(self.n, float(func))

    def check(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n,):
            raise ConfigError(f"field has shape {f.shape}, grid expects ({self.n},)")
        return f

    def integrate(self, f) -> float:
        return float(self.weights @ self.check(f))

    def average(self, f) -> float:
        return self.integrate(f) / self.length

    def inner(self, f, g) -> float:
        return float(self.weights @ (self.check(f) * self.check(g)))


def build_grid(length: float, n: int) -> Grid:
    return Grid(length, n)


def integrate(grid: Grid, f) -> float:
    return grid.integrate(f)


def average(grid: Grid, f) -> float:
    return grid.average(f)


@dataclass(frozen=True)
class NeumannLaplacian:
    """Second-order central differences with ghost-point reflection.

    Boundary rows read ``2(u1 - u0)/h^2`` and ``2(u_{n-2} - u_{n-1})/h^2``.
    With trapezoid weights ``w`` the operator satisfies ``w @ A == 0`` and
    ``W A`` is symmetric.
    """

    grid: Grid
    lower: np.ndarray = field(init=False, repr=False)
    diag: np.ndarray = field(init=False, repr=False)
    upper: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n, inv_h2 = self.grid.n, 1.0 / self.grid.h**2
        lower = np.full(n - 1, inv_h2)
        upper = np.full(n - 1, inv_h2)
        diag = np.full(n, -2.0 * inv_h2)
        upper[0] = 2.0 * inv_h2
        lower[-1] = 2.0 * inv_h2
        for arr in (lower, diag, upper):
            arr.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "upper", upper)

    def apply(self, f) -> np.ndarray:
        f = self.grid.check(f)
        out = self.diag * f
        out[:-1] += self.upper * f[1:]
        out[1:] += self.lower * f[:-1]
        return out

    __call__ = apply

    def banded(self, scale: float = 1.0, shift=0.0) -> np.ndarray:
        """Return ``scale * A + diag(shift)`` in ``solve_banded`` (1, 1) layout."""
        ab = np.zeros((3, self.grid.n))
        ab[0, 1:] = scale * self.upper
        ab[1] = scale * self.diag + shift
        ab[2, :-1] = scale * self.lower
        return ab

    def solve(self, scale: float, shift, rhs) -> np.ndarray:
        """Solve ``(scale * A + diag(shift)) x = rhs``."""
        return solve_banded((1, 1), self.banded(scale, shift), rhs, check_finite=False)

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)


def apply_laplacian(lap: NeumannLaplacian, f) -> np.ndarray:
    return lap.apply(f)
