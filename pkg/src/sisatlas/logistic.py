"""The one-parameter logistic family ``dI u'' + (l beta (1 - dI u) - gamma) u = 0``.

For every ``l > l*`` there is a unique positive solution ``u^l`` with
``0 < u^l < 1/dI``; ``v^l = du^l/dl`` solves the linearised problem.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .errors import DomainError, SolverError
from .spectral import CoefficientSet, EigenPair

FLOOR = 1e-14
NEWTON_TOL = 1e-11


@dataclass(frozen=True)
class LogisticPoint:
    l: float
    u: np.ndarray
    v: np.ndarray
    int_u: float
    int_lv: float
    z: np.ndarray


@dataclass(frozen=True)
class ThresholdExpansion:
    """Leading-order behaviour of the family as ``l -> l*``.

    ``c_star`` is the coefficient in ``u^l ~ (l - l*) c_star phi1`` and
    ``slope_at_lstar`` the derivative of ``N_dI`` at ``l*``.
    """

    c_star: float
    slope_at_lstar: float
    phi_mean: float
    beta_phi2_mean: float
    beta_phi3_mean: float


def residual(coeffs: CoefficientSet, l: float, u: np.ndarray) -> np.ndarray:
    lap = coeffs.grid.laplacian
    return coeffs.dI * lap.apply(u) + (l * coeffs.beta * (1.0 - coeffs.dI * u) - coeffs.gamma) * u


def threshold_expansion(coeffs: CoefficientSet, eig: EigenPair) -> ThresholdExpansion:
    g = coeffs.grid
    phi = eig.phi1
    bp2 = g.average(coeffs.beta * phi**2)
    bp3 = g.average(coeffs.beta * phi**3)
    pm = g.average(phi)
    c_star = eig.r1 * bp2 / (coeffs.dI * bp3)
    slope = (1.0 - pm * bp2 / bp3) / eig.l_star
    return ThresholdExpansion(c_star=c_star, slope_at_lstar=slope, phi_mean=pm,
                              beta_phi2_mean=bp2, beta_phi3_mean=bp3)


def roundoff_floor(coeffs: CoefficientSet, l: float, u: np.ndarray) -> float:
    """Size of the residual that rounding alone produces for this ``u``."""
    scale = 4.0 * coeffs.dI / coeffs.grid.h**2 + l * np.max(coeffs.beta) + np.max(coeffs.gamma)
    return 32.0 * np.finfo(float).eps * scale * float(np.max(np.abs(u)))


def _newton(coeffs, l, u, tol, max_iter, max_halvings):
    lap = coeffs.grid.laplacian
    dI, beta, gamma = coeffs.dI, coeffs.beta, coeffs.gamma
    top = 1.0 / dI - FLOOR
    F = residual(coeffs, l, u)
    fnorm = np.max(np.abs(F))
    base_tol = tol
    polished = False
    for _ in range(max_iter):
        # relative to max|u|: near l* the solution is O(l - l*)
        tol = max(base_tol * min(1.0, float(np.max(u))), roundoff_floor(coeffs, l, u))
        if fnorm <= tol:
            if polished:
                return u
            polished = True
        jac = l * beta * (1.0 - 2.0 * dI * u) - gamma
        try:
            step = lap.solve(dI, jac, -F)
        except (np.linalg.LinAlgError, ValueError):
            return None
        if not np.all(np.isfinite(step)):
            return None
        t = 1.0
        for _ in range(max_halvings + 1):
            trial = np.clip(u + t * step, FLOOR, top)
            Ft = residual(coeffs, l, trial)
            ft = np.max(np.abs(Ft))
            if ft < fnorm or (polished and ft <= tol):
                break
            t *= 0.5
        else:
            return u if fnorm <= tol else None
        u, F, fnorm = trial, Ft, ft
    return u if fnorm <= tol else None


def solve_u(coeffs: CoefficientSet, eig: EigenPair, l: float,
            warm_start: np.ndarray | None = None, tol: float = NEWTON_TOL,
            max_iter: int = 100, max_halvings: int = 30) -> np.ndarray:
    """Positive solution ``u^l`` by damped, projected Newton iteration.

    Converged when ``max|F(u)| <= tol * max(1, l) * min(1, max u)``, or when the residual is
    at the rounding floor of the discrete operator (which exceeds that bound
    on fine grids); one extra Newton step is taken after that to polish.
    """
    l = float(l)
    if not l > eig.l_star:
        raise DomainError(f"l = {l} is not above the threshold l* = {eig.l_star}")
    dI = coeffs.dI
    abs_tol = tol * max(1.0, l)
    guesses = []
    if warm_start is not None:
        guesses.append(np.asarray(warm_start, dtype=float))
    c_star = threshold_expansion(coeffs, eig).c_star
    guesses.append((l - eig.l_star) * c_star * eig.phi1)
    guesses.append((1.0 - coeffs.gamma / (l * coeffs.beta)) / dI)
    guesses.append(np.full(coeffs.grid.n, 1.0 / dI))
    for guess in guesses:
        u0 = np.clip(guess, FLOOR, 1.0 / dI - FLOOR)
        u = _newton(coeffs, l, u0, abs_tol, max_iter, max_halvings)
        if u is not None and np.all(u > 0) and np.all(u < 1.0 / dI):
            # Converging onto the floor everywhere means we found the trivial solution.
            if np.max(u) > 10 * FLOOR:
                return u
    raise SolverError(f"Newton iteration failed for the logistic problem at l = {l}", l=l)


def solve_v(coeffs: CoefficientSet, l: float, u: np.ndarray) -> np.ndarray:
    """Parameter derivative ``v^l = du^l/dl`` from the linearised equation."""
    lap = coeffs.grid.laplacian
    dI, beta, gamma = coeffs.dI, coeffs.beta, coeffs.gamma
    jac = l * beta * (1.0 - 2.0 * dI * u) - gamma
    try:
        v = lap.solve(dI, jac, -beta * (1.0 - dI * u) * u)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"singular linearisation at l = {l}", l=l) from exc
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise SolverError(f"derivative v^l is not positive at l = {l}", l=l)
    return v


def logistic_point(coeffs: CoefficientSet, eig: EigenPair, l: float,
                   warm_start: np.ndarray | None = None, tol: float = NEWTON_TOL) -> LogisticPoint:
    u = solve_u(coeffs, eig, l, warm_start, tol=tol)
    v = solve_v(coeffs, l, u)
    g = coeffs.grid
    return LogisticPoint(l=float(l), u=u, v=v, int_u=g.integrate(u),
                         int_lv=l * g.integrate(v), z=l * (1.0 - coeffs.dI * u))


def continuation_sweep(coeffs: CoefficientSet, eig: EigenPair, l_values) -> list[LogisticPoint]:
    """Warm-started solves along ascending ``l``; checks nodewise monotonicity."""
    l_values = [float(l) for l in l_values]
    if any(b <= a for a, b in zip(l_values, l_values[1:])):
        raise DomainError("l values must be strictly ascending")
    points: list[LogisticPoint] = []
    warm = None
    for l in l_values:
        pt = logistic_point(coeffs, eig, l, warm)
        if points and not np.all(pt.u > points[-1].u):
            raise SolverError(f"u^l is not increasing between l = {points[-1].l} and l = {l}", l=l)
        points.append(pt)
        warm = pt.u
    return points


def near_threshold_error(coeffs: CoefficientSet, eig: EigenPair, l: float,
                         warm_start=None) -> float:
    """``max|u^l/(l - l*) - c* phi1|``."""
    u = solve_u(coeffs, eig, l, warm_start)
    c_star = threshold_expansion(coeffs, eig).c_star
    return float(np.max(np.abs(u / (l - eig.l_star) - c_star * eig.phi1)))


def large_l_errors(coeffs: CoefficientSet, eig: EigenPair, l: float) -> tuple[float, float]:
    """Distances of ``l(1 - dI u)`` and ``l^2 v`` from their ``l -> inf`` limits."""
    pt = logistic_point(coeffs, eig, l)
    ratio = coeffs.gamma / coeffs.beta
    return (float(np.max(np.abs(pt.z - ratio))),
            float(np.max(np.abs(l * l * pt.v - ratio / coeffs.dI))))

