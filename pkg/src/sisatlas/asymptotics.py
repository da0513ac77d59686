"""Small-``dS`` limits of the endemic equilibria.

Solutions of the nonlocal problem

    dI u'' + (rho beta (1 - dI u) / avg(1 - dI u) - gamma) u = 0,  rho = r0 l*

are exactly the logistic solutions ``u^l`` at roots ``l`` of ``N_dI(l) = r0``,
so the limit profiles come from the ``dS = 0`` curve.  A frozen-normalisation
fixed-point iteration provides an independent cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import brentq

from .curves import LogisticCurve, classify, compute_thresholds, d1_star
from .errors import ConfigError, DomainError, SolverError
from .logistic import logistic_point, residual as logistic_residual
from .spectral import CoefficientSet, EigenPair

LOW = "Low"
HIGH = "High"
FIXED_POINT_TOL = 1e-10
BAND_LIMIT = 50.0


@dataclass(frozen=True)
class LimitProfile:
    branch: str
    s_star: np.ndarray
    u_star: np.ndarray | None = None
    i_star: np.ndarray | None = None
    l: float | None = None
    residual: float | None = None
    cross_check_gap: float | None = None


def regime(coeffs: CoefficientSet, eig: EigenPair, r0: float, r0_low: float) -> str:
    """``"i-1"``, ``"i-2"``, ``"ii"`` or ``"none"`` for the small-``dS`` picture."""
    tail = coeffs.grid.average(coeffs.gamma / coeffs.beta) * eig.r1
    if r0 > 1.0:
        return "ii"
    if r0_low < r0 < 1.0:
        return "i-1" if r0 < tail else "i-2"
    return "none"


def nonlocal_residual(coeffs: CoefficientSet, eig: EigenPair, r0: float, u: np.ndarray) -> float:
    """Max-norm residual of the nonlocal equation."""
    mean = coeffs.grid.average(1.0 - coeffs.dI * u)
    l = r0 * eig.l_star / mean
    return float(np.max(np.abs(logistic_residual(coeffs, l, u))))


def _dS0_roots(curve: LogisticCurve, r0: float) -> list[float]:
    ls = curve.l
    f = curve.n_dI_scan() - r0
    roots = []
    for i in range(len(ls) - 1):
        if f[i] * f[i + 1] < 0:
            roots.append(brentq(lambda t: curve.value(t, 0.0) - r0, ls[i], ls[i + 1],
                                xtol=1e-15 * ls[i + 1], rtol=1e-15))
    return roots


def fixed_point_profile(coeffs: CoefficientSet, eig: EigenPair, r0: float, l_guess: float,
                        tol: float = FIXED_POINT_TOL, max_iter: int = 200,
                        warm_start: np.ndarray | None = None) -> np.ndarray:
    """Frozen-normalisation iteration for the nonlocal problem.

    Freezing ``a = avg(1 - dI u)`` leaves the local problem at ``l = rho/a``;
    the update ``a <- avg(1 - dI u)`` is accelerated with secant steps since the
    plain iteration repels on decreasing parts of ``N_dI``.
    """
    g = coeffs.grid
    rho = r0 * eig.l_star
    warm = [warm_start]

    def G(a):
        pt = logistic_point(coeffs, eig, rho / a, warm[0])
        warm[0] = pt.u
        return g.average(1.0 - coeffs.dI * pt.u), pt.u

    a0 = rho / l_guess
    g0, u0 = G(a0)
    a1 = g0
    if rho / a1 <= eig.l_star:
        a1 = 0.5 * (a0 + rho / eig.l_star)
    h0 = g0 - a0
    for _ in range(max_iter):
        g1, u1 = G(a1)
        h1 = g1 - a1
        if np.max(np.abs(u1 - u0)) < tol and abs(h1) < tol:
            return u1
        a2 = a1 - h1 * (a1 - a0) / (h1 - h0) if h1 != h0 else g1
        # stay in the admissible range l > l*
        if a2 >= rho / eig.l_star:
            a2 = 0.5 * (a1 + rho / eig.l_star)
        elif a2 <= 0:
            a2 = 0.5 * a1
        a0, h0, u0, a1 = a1, h1, u1, a2
    raise SolverError("fixed-point iteration for the nonlocal problem did not stagnate", a=a1)


def solve_nonlocal(coeffs: CoefficientSet, eig: EigenPair, r0: float, branch: str = LOW,
                   curve: LogisticCurve | None = None, r0_low: float | None = None,
                   cross_check: bool = True) -> LimitProfile:
    if branch not in (LOW, HIGH):
        raise ConfigError(f"branch must be {LOW!r} or {HIGH!r}")
    if curve is None:
        curve = LogisticCurve(coeffs, eig)
    curve.ensure_tail()
    if r0_low is None:
        r0_low = compute_thresholds(coeffs, eig, curve=curve).r0_low
    if not r0 > r0_low:
        raise DomainError(f"no limit profile: requires r0 > R0_low = {r0_low:.12g}")
    if r0 == 1.0:
        raise DomainError("no limit profile: requires r0 != 1")
    tail = curve.tail_limit
    if branch == HIGH and not r0 < tail:
        raise DomainError(f"no nonlocal High profile: requires r0 < avg(gamma/beta) R1 = {tail:.12g}")
    roots = _dS0_roots(curve, r0)
    if not roots:
        raise DomainError(f"no root of N_dI = {r0} (requires r0 below max N_dI)")
    if branch == HIGH and len(roots) < 2:
        raise DomainError("no nonlocal High profile: N_dI = r0 has a single root")
    l0 = roots[0] if branch == LOW else roots[-1]
    u = curve.point(l0).u
    if not (np.all(u > 0) and np.all(u < 1.0 / coeffs.dI)):
        raise SolverError("limit profile leaves (0, 1/dI)", l=l0)
    gap = None
    if cross_check:
        # start from the coarse scan bracket, not from the refined root
        i = int(np.searchsorted(curve.l, l0))
        l_guess = curve.l[max(i - 1, 0)]
        u_fp = fixed_point_profile(coeffs, eig, r0, l_guess, warm_start=curve.point(l_guess).u)
        gap = float(np.max(np.abs(u_fp - u)))
    s = l0 * (1.0 - coeffs.dI * u)
    return LimitProfile(branch=branch, s_star=s, u_star=u, l=float(l0),
                        residual=nonlocal_residual(coeffs, eig, r0, u), cross_check_gap=gap)


def predict_high_profile(coeffs: CoefficientSet, eig: EigenPair, r0: float) -> LimitProfile:
    """``S -> gamma/beta`` and ``I -> r0 l* - avg(gamma/beta)`` (a constant)."""
    g = coeffs.grid
    ratio = coeffs.gamma / coeffs.beta
    tail = g.average(ratio) * eig.r1
    if not r0 > tail:
        raise DomainError(f"high-branch prediction requires r0 > avg(gamma/beta) R1 = {tail:.12g}")
    level = r0 * eig.l_star - g.average(ratio)
    return LimitProfile(branch=HIGH, s_star=ratio.copy(), i_star=np.full(g.n, level))


@dataclass
class ScalingReport:
    r0: float
    regime: str
    branch: str
    dS: list[float]
    l_low: list[float]
    l_high: list[float]
    ratio_max: list[float]
    ratio_min: list[float]
    band_ratio: float
    s_low_errors: list[float]
    s_high_errors: list[float] = field(default_factory=list)
    band_ok: bool = False
    s_low_decreasing: bool = False
    s_high_decreasing: bool | None = None
    l_low_increasing: bool = False
    l_high_decreasing: bool | None = None

    @property
    def passed(self) -> bool:
        ok = self.band_ok and self.s_low_decreasing
        return ok and self.s_high_decreasing is not False

    def to_dict(self) -> dict:
        errors = {repr(d): {"S_low": e} for d, e in zip(self.dS, self.s_low_errors)}
        for d, e in zip(self.dS, self.s_high_errors):
            errors[repr(d)]["S_high"] = e
        return {
            "regime": self.regime,
            "branch": self.branch,
            "r0": self.r0,
            "ratios": {"max": self.ratio_max, "min": self.ratio_min, "band": self.band_ratio},
            "errors_by_dS": errors,
            "l_low": self.l_low,
            "l_high": self.l_high,
            "checks": {"band": self.band_ok, "S_low_decreasing": self.s_low_decreasing,
                       "S_high_decreasing": self.s_high_decreasing,
                       "l_low_increasing": self.l_low_increasing,
                       "l_high_decreasing": self.l_high_decreasing,
                       "passed": self.passed},
        }


def _strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def scaling_sequence(curve: LogisticCurve, r0: float, factors=(1e-2, 5e-3, 2.5e-3)) -> list[float]:
    """``dS`` values ``factor * d1*(r0)``."""
    d1 = d1_star(curve, r0)
    if d1 <= 0:
        raise DomainError(f"d1*(r0) vanishes at r0 = {r0}")
    return [f * d1 for f in factors]


def verify_scaling(coeffs: CoefficientSet, eig: EigenPair, r0: float, dS_values,
                   curve: LogisticCurve | None = None, band_limit: float = BAND_LIMIT) -> ScalingReport:
    """``I_low = O(dS)`` and convergence of the profiles along decreasing ``dS``."""
    dS_values = [float(d) for d in dS_values]
    if any(b >= a for a, b in zip(dS_values, dS_values[1:])):
        raise ConfigError("dS values must be strictly decreasing")
    if curve is None:
        curve = LogisticCurve(coeffs, eig)
    th = compute_thresholds(coeffs, eig, curve=curve)
    reg = regime(coeffs, eig, r0, th.r0_low)
    if reg == "none":
        raise DomainError(f"r0 = {r0} outside the small-dS regimes (requires r0 > R0_low and r0 != 1)")
    s_low = solve_nonlocal(coeffs, eig, r0, LOW, curve=curve, r0_low=th.r0_low, cross_check=False)
    high = predict_high_profile(coeffs, eig, r0) if reg in ("i-2", "ii") else None

    l_low, l_high, rmax, rmin, e_low, e_high = [], [], [], [], [], []
    for dS in dS_values:
        eq = classify(coeffs, eig, r0, dS, curve=curve)
        if eq.count == 0:
            raise SolverError(f"no equilibrium at dS = {dS}", dS=dS)
        lo, hi = eq.roots[0], eq.roots[-1]
        l_low.append(lo.l)
        l_high.append(hi.l)
        rmax.append(float(np.max(lo.I)) / dS)
        rmin.append(float(np.min(lo.I)) / dS)
        e_low.append(float(np.max(np.abs(lo.S - s_low.s_star))))
        if high is not None and eq.count >= 2:
            e_high.append(float(np.max(np.abs(hi.S - high.s_star))))
    ratios = rmax + rmin
    band = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
    # l_low increases with dS, i.e. decreases along the (decreasing) dS sequence
    rep = ScalingReport(
        r0=float(r0), regime=reg, branch=LOW, dS=dS_values, l_low=l_low, l_high=l_high,
        ratio_max=rmax, ratio_min=rmin, band_ratio=float(band), s_low_errors=e_low,
        s_high_errors=e_high, band_ok=bool(band <= band_limit),
        s_low_decreasing=_strictly_decreasing(e_low),
        l_low_increasing=_strictly_decreasing(l_low))
    if high is not None:
        rep.s_high_decreasing = len(e_high) == len(dS_values) and _strictly_decreasing(e_high)
        rep.l_high_decreasing = all(b > a for a, b in zip(l_high, l_high[1:]))
    return rep
