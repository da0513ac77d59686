"""Single-mode perturbations ``beta = k + eps h``, ``gamma = beta^2``.

With ``h = c_m phi_m`` the small-``eps`` expansion of ``l*(eps)`` and of the
normalised eigenfunction is known in closed form, and the signs of the two
bifurcation indicators are fixed by where ``dI lambda_m`` sits relative to
``k^2`` and ``2 k^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
import math

import numpy as np

from .domain import Grid
from .errors import ConfigError
from .spectral import CoefficientSet, EigenPair, laplace_mode, principal_pair, ratio_is_constant

FORWARD = "Forward"
BACKWARD = "Backward"
BOUNDARY = "Boundary"
NEITHER = "Neither"


@dataclass(frozen=True)
class PerturbedModel:
    grid: Grid
    k: float
    m: int
    c_m: float
    eps: float
    dI: float
    lam: float
    h: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    @property
    def eps_bound(self) -> float:
        return eps_bound(self.grid, self.k, self.m, self.c_m)

    def coefficients(self, dS: float = 0.0, **extra) -> CoefficientSet:
        return CoefficientSet(self.grid, self.beta, self.gamma, self.dI, dS, **extra)


@dataclass(frozen=True)
class ExpansionCoefficients:
    l0: float
    l1: float
    l2: float
    phi1_tilde: np.ndarray


@dataclass(frozen=True)
class HypothesisChecks:
    ratio_nonconstant: bool
    mean_ratio_condition: bool
    backward_condition: bool
    forward_condition: bool


@dataclass(frozen=True)
class RegimeReport:
    k: float
    m: int
    eps: float
    dI: float
    dI_lambda: float
    regime: str
    tth1: float
    tth2: float
    predicted_tth1: int | None
    predicted_tth2: int | None
    tth1_agrees: bool | None
    tth2_agrees: bool | None
    slope_at_lstar: float
    hypotheses: HypothesisChecks

    def to_dict(self) -> dict:
        return asdict(self)


def eps_bound(grid: Grid, k: float, m: int, c_m: float) -> float:
    """``k / max|h|`` evaluated on the grid."""
    hmax = abs(c_m) * float(np.max(np.abs(laplace_mode(grid, m).phi)))
    return k / hmax


def build_model(k: float, m: int, c_m: float, eps: float, dI: float, grid: Grid) -> PerturbedModel:
    if not k > 0:
        raise ConfigError("k must be positive")
    if int(m) != m or m < 1:
        raise ConfigError("the perturbation must be a single mode with m >= 1")
    if c_m == 0:
        raise ConfigError("c_m must be nonzero")
    if not dI > 0:
        raise ConfigError("dI must be positive")
    bound = eps_bound(grid, k, m, c_m)
    if not 0 < eps < bound:
        raise ConfigError(f"eps = {eps} outside (0, {bound})")
    mode = laplace_mode(grid, m)
    h = c_m * mode.phi
    beta = k + eps * h
    return PerturbedModel(grid=grid, k=float(k), m=int(m), c_m=float(c_m), eps=float(eps),
                          dI=float(dI), lam=mode.lam, h=h, beta=beta, gamma=beta**2)


def closed_form_expansion(model: PerturbedModel) -> ExpansionCoefficients:
    g = model.grid
    k, dl = model.k, model.dI * model.lam
    l2 = (1.0 - k * k / dl) * g.average(model.h**2) / k
    phi1 = -k * model.h / (g.length * dl)
    return ExpansionCoefficients(l0=k, l1=g.average(model.h), l2=l2, phi1_tilde=phi1)


def check_hypotheses(coeffs: CoefficientSet, eig: EigenPair) -> HypothesisChecks:
    g = coeffs.grid
    beta, gamma, phi = coeffs.beta, coeffs.gamma, eig.phi1
    nonconst = not ratio_is_constant(coeffs)
    mean_ratio = g.average(gamma / beta) < g.average(gamma) / g.average(beta)
    bp3 = g.average(beta * phi**3)
    cross = g.average(phi) * g.average(beta * phi**2)
    # Sign comparisons are meaningless at rounding level (constant coefficients).
    noise = 1e-12 * max(abs(bp3), abs(cross))
    backward = nonconst and bp3 < cross - noise
    forward = nonconst and g.average(gamma / beta) * eig.r1 < 1.0 and bp3 > cross + noise
    return HypothesisChecks(ratio_nonconstant=nonconst, mean_ratio_condition=bool(nonconst and mean_ratio),
                            backward_condition=bool(backward), forward_condition=bool(forward))


def tth_values(coeffs: CoefficientSet, eig: EigenPair) -> tuple[float, float]:
    """``1/R1 - avg(gamma/beta)`` and ``avg(beta phi^3) - avg(phi) avg(beta phi^2)``."""
    g = coeffs.grid
    phi = eig.phi1
    t1 = eig.l_star - g.average(coeffs.gamma / coeffs.beta)
    t2 = g.average(coeffs.beta * phi**3) - g.average(phi) * g.average(coeffs.beta * phi**2)
    return t1, t2


def classify_regime(k: float, dI_lambda: float, rtol: float = 1e-12) -> str:
    k2 = k * k
    if math.isclose(dI_lambda, k2, rel_tol=rtol) or math.isclose(dI_lambda, 2 * k2, rel_tol=rtol):
        return BOUNDARY
    if k2 < dI_lambda < 2 * k2:
        return FORWARD
    if dI_lambda > 2 * k2:
        return BACKWARD
    return NEITHER


def predicted_signs(k: float, dI_lambda: float, rtol: float = 1e-12) -> tuple[int | None, int | None]:
    k2 = k * k
    s1 = None if math.isclose(dI_lambda, k2, rel_tol=rtol) else (1 if dI_lambda > k2 else -1)
    s2 = None if math.isclose(dI_lambda, 2 * k2, rel_tol=rtol) else (1 if dI_lambda < 2 * k2 else -1)
    return s1, s2


def regime_report(k: float, m: int, dI: float, grid: Grid, eps: float,
                  c_m: float = 1.0) -> RegimeReport:
    """Regime label and the computed-vs-predicted signs at this ``eps``."""
    model = build_model(k, m, c_m, eps, dI, grid)
    coeffs = model.coefficients()
    eig = principal_pair(coeffs)
    dl = dI * model.lam
    t1, t2 = tth_values(coeffs, eig)
    p1, p2 = predicted_signs(k, dl)
    g = grid
    phi = eig.phi1
    bp2 = g.average(coeffs.beta * phi**2)
    slope = (1.0 - g.average(phi) * bp2 / g.average(coeffs.beta * phi**3)) / eig.l_star
    return RegimeReport(
        k=float(k), m=int(m), eps=float(eps), dI=float(dI), dI_lambda=dl,
        regime=classify_regime(k, dl), tth1=t1, tth2=t2,
        predicted_tth1=p1, predicted_tth2=p2,
        tth1_agrees=None if p1 is None else bool(np.sign(t1) == p1),
        tth2_agrees=None if p2 is None else bool(np.sign(t2) == p2),
        slope_at_lstar=slope, hypotheses=check_hypotheses(coeffs, eig))


def stabilize_eps(k: float, m: int, dI: float, grid: Grid, c_m: float = 1.0,
                  start_fraction: float = 0.1, max_halvings: int = 20) -> tuple[float, list[RegimeReport]]:
    """Halve ``eps`` from ``start_fraction * eps_bound`` until the two indicator
    signs agree at ``eps``, ``eps/2`` and ``eps/4``; return that ``eps``."""
    eps = start_fraction * eps_bound(grid, k, m, c_m)
    reports = [regime_report(k, m, dI, grid, eps / 2**j, c_m) for j in range(3)]
    for j in range(max_halvings):
        signs = {(np.sign(r.tth1), np.sign(r.tth2)) for r in reports[j:j + 3]}
        if len(signs) == 1:
            return reports[j].eps, reports[j:j + 3]
        reports.append(regime_report(k, m, dI, grid, eps / 2 ** (j + 3), c_m))
    raise ConfigError("indicator signs did not stabilise; the configuration may sit on a boundary")


@dataclass(frozen=True)
class ConsistencyReport:
    eps: tuple[float, ...]
    l_star: tuple[float, ...]
    remainder: tuple[float, ...]
    band_ratio: float
    second_order_ok: bool
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def expansion_consistency(models: list[PerturbedModel], band: float = 10.0) -> ConsistencyReport:
    """Check that ``(l*(eps) - l0 - eps l1 - eps^2 l2)/eps^3`` stays bounded.

    ``models`` differ only in ``eps``.  Also checks
    ``|l*(eps) - k| <= 2 |l2| eps^2``.
    """
    if len(models) < 2:
        raise ConfigError("need at least two eps values")
    eps, lstars, rem = [], [], []
    ok2 = True
    for model in models:
        if model.eps > 0.1 * model.eps_bound * (1 + 1e-12):
            raise ConfigError(f"eps = {model.eps} exceeds 0.1 * eps bound")
        ex = closed_form_expansion(model)
        ls = principal_pair(model.coefficients()).l_star
        e = model.eps
        eps.append(e)
        lstars.append(ls)
        rem.append((ls - ex.l0 - e * ex.l1 - e * e * ex.l2) / e**3)
        ok2 = ok2 and abs(ls - model.k) <= 2 * abs(ex.l2) * e * e
    mags = np.abs(rem)
    ratio = float(np.max(mags) / np.min(mags)) if np.min(mags) > 0 else math.inf
    return ConsistencyReport(eps=tuple(eps), l_star=tuple(lstars), remainder=tuple(rem),
                             band_ratio=ratio, second_order_ok=bool(ok2),
                             passed=bool(ratio <= band and ok2))


def eigenfunction_expansion_error(model: PerturbedModel, eig: EigenPair | None = None) -> float:
    """``max|phi1/int(phi1) - 1/L - eps phi1_tilde|`` (second order in eps)."""
    if eig is None:
        eig = principal_pair(model.coefficients())
    g = model.grid
    ex = closed_form_expansion(model)
    phi = eig.phi1 / g.integrate(eig.phi1)
    return float(np.max(np.abs(phi - 1.0 / g.length - model.eps * ex.phi1_tilde)))
