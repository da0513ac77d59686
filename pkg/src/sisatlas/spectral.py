"""Principal eigenpair of the weighted Neumann problem and Laplace modes.

``R1`` is the largest value of the Rayleigh quotient
``int(beta phi^2) / int(dI |phi'|^2 + gamma phi^2)``; its reciprocal ``l*`` is
the smallest eigenvalue ``mu`` of ``(-dI A + gamma) phi = mu beta phi``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
import math

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import splu

from .domain import Grid
from .errors import ConfigError, DomainError, SolverError


@dataclass(frozen=True)
class CoefficientSet:
    """Sampled transmission/recovery rates plus the diffusion rates.

    ``r0`` and ``total_mass`` are two views of the same number
    (``N = R0 * l* * L``); at most one of them may be given.
    """

    grid: Grid
    beta: np.ndarray
    gamma: np.ndarray
    dI: float
    dS: float = 0.0
    r0: float | None = None
    total_mass: float | None = None

    def __post_init__(self):
        beta = np.array(self.grid.check(self.beta), dtype=float)
        gamma = np.array(self.grid.check(self.gamma), dtype=float)
        if not (np.all(np.isfinite(beta)) and np.all(beta > 0)):
            raise ConfigError("beta must be finite and strictly positive at every node")
        if not (np.all(np.isfinite(gamma)) and np.all(gamma > 0)):
            raise ConfigError("gamma must be finite and strictly positive at every node")
        if not self.dI > 0:
            raise ConfigError(f"dI must be positive, got {self.dI!r}")
        if not self.dS >= 0:
            raise ConfigError(f"dS must be nonnegative, got {self.dS!r}")
        if self.r0 is not None and self.total_mass is not None:
            raise ConfigError("give either r0 or total_mass, not both")
        if self.r0 is not None and not self.r0 > 0:
            raise ConfigError("r0 must be positive")
        if self.total_mass is not None and not self.total_mass > 0:
            raise ConfigError("total_mass must be positive")
        beta.flags.writeable = False
        gamma.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "dI", float(self.dI))
        object.__setattr__(self, "dS", float(self.dS))

    def with_(self, **changes) -> "CoefficientSet":
        return replace(self, **changes)

    @property
    def ratio(self) -> np.ndarray:
        """beta / gamma."""
        return self.beta / self.gamma

    def resolve_r0(self, eig: "EigenPair") -> float:
        if self.r0 is not None:
            return float(self.r0)
        if self.total_mass is not None:
            return self.total_mass * eig.r1 / self.grid.length
        raise ConfigError("neither r0 nor total_mass is set")

    def resolve_mass(self, eig: "EigenPair") -> float:
        return self.resolve_r0(eig) * eig.l_star * self.grid.length


@dataclass(frozen=True)
class EigenPair:
    r1: float
    l_star: float
    phi1: np.ndarray
    iterations: int
    residual: float


@dataclass(frozen=True)
class LaplaceMode:
    m: int
    lam: float
    phi: np.ndarray


def _quotient(grid: Grid, phi, beta, psi) -> float:
    """``<phi, beta phi> / <psi, beta phi>`` with ``psi = K^{-1} beta phi``.

    Equals the Rayleigh quotient at an eigenvector but avoids the ``1/h^2``
    cancellation in ``<phi, K phi>``.
    """
    bphi = beta * phi
    return grid.inner(phi, bphi) / grid.inner(psi, bphi)


def principal_pair(coeffs: CoefficientSet, tol: float = 1e-12,
                   max_iter: int = 100_000) -> EigenPair:
    """Inverse power iteration for the smallest eigenvalue ``1/R1``.

    Starts from the all-ones vector; since ``(-dI A + gamma)^{-1}`` is a
    positive matrix every iterate stays positive.  Stops when both the
    Rayleigh quotient and the iterate stagnate below ``tol``.
    """
    grid = coeffs.grid
    lap = grid.laplacian
    beta, gamma = coeffs.beta, coeffs.gamma
    K = diags([-coeffs.dI * lap.lower, -coeffs.dI * lap.diag + gamma,
               -coeffs.dI * lap.upper], [-1, 0, 1], format="csc")
    lu = splu(K)

    phi = np.ones(grid.n) / math.sqrt(grid.length)
    mu = math.inf
    for it in range(1, max_iter + 1):
        nxt = lu.solve(beta * phi)
        mu_new = _quotient(grid, phi, beta, nxt)
        nxt /= math.sqrt(grid.inner(nxt, nxt))
        dmu = abs(mu_new - mu) / abs(mu_new)
        dphi = np.max(np.abs(nxt - phi)) / np.max(np.abs(nxt))
        phi, mu = nxt, mu_new
        if dmu < tol and dphi < 10 * tol:
            break
    else:
        raise SolverError("inverse iteration did not converge",
                          iterations=max_iter, rayleigh=mu)

    if phi[0] < 0:
        phi = -phi
    if np.any(phi <= 0):
        raise SolverError("principal eigenfunction changes sign", iterations=it)
    r1 = 1.0 / mu
    res = coeffs.dI * lap.apply(phi) - gamma * phi + beta * phi / r1
    phi.flags.writeable = False
    return EigenPair(r1=r1, l_star=mu, phi1=phi, iterations=it,
                     residual=float(np.max(np.abs(res)) / np.max(phi)))


def r1_limits(coeffs: CoefficientSet) -> tuple[float, float]:
    """Limits of R1 as dI -> 0 and dI -> infinity."""
    grid = coeffs.grid
    return float(np.max(coeffs.ratio)), grid.average(coeffs.beta) / grid.average(coeffs.gamma)


def ratio_is_constant(coeffs: CoefficientSet, rtol: float = 1e-10) -> bool:
    r = coeffs.ratio
    return bool(np.ptp(r) <= rtol * np.max(np.abs(r)))


def r1_inverse(coeffs: CoefficientSet, target: float,
               bracket: tuple[float, float], tol: float = 1e-8,
               max_iter: int = 200) -> float:
    """Find ``dI`` with ``R1(dI) = target`` by bisection in ``log dI``."""
    if ratio_is_constant(coeffs):
        raise DomainError("beta/gamma is constant, so R1 does not depend on dI")
    hi_lim, lo_lim = r1_limits(coeffs)
    if not lo_lim < target < hi_lim:
        raise DomainError(f"target {target} outside the open range ({lo_lim}, {hi_lim}) of R1")
    a, b = sorted(bracket)
    if not a > 0:
        raise ConfigError("bracket must be positive")

    def excess(d):
        return principal_pair(coeffs.with_(dI=d)).r1 - target

    fa, fb = excess(a), excess(b)
    if abs(fa) <= tol:
        return a
    if abs(fb) <= tol:
        return b
    if fa * fb > 0:
        raise DomainError(f"bracket ({a}, {b}) does not straddle the root")
    la, lb = math.log(a), math.log(b)
    for _ in range(max_iter):
        mid = 0.5 * (la + lb)
        fm = excess(math.exp(mid))
        if abs(fm) <= tol:
            return math.exp(mid)
        # R1 decreases in dI, so fa > 0 on the left end.
        if (fm > 0) == (fa > 0):
            la, fa = mid, fm
        else:
            lb = mid
    raise SolverError("bisection for R1^{-1} did not reach tolerance", target=target)


def laplace_mode(grid: Grid, m: int) -> LaplaceMode:
    """Closed-form Neumann eigenpair ``(lambda_m, phi_m)``, L2-normalised."""
    if int(m) != m or m < 0:
        raise ConfigError(f"mode index must be a nonnegative integer, got {m!r}")
    L = grid.length
    if m == 0:
        phi = np.full(grid.n, 1.0 / math.sqrt(L))
    else:
        phi = math.sqrt(2.0 / L) * np.cos(m * math.pi * grid.x / L)
    return LaplaceMode(m=int(m), lam=(m * math.pi / L) ** 2, phi=phi)
