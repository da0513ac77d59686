"""The curves ``N_dI(l)`` and ``N_dI,dS(l)`` and everything read off them.

Every endemic equilibrium corresponds to a root ``l > l*`` of
``N_dI,dS(l) = R0`` via ``S = l (1 - dI u^l)``, ``I = dS l u^l``.  The
``dS``-independent ingredients (``int u``, ``int l v``) are computed once on a
log-spaced scan and reused for every ``dS`` and ``R0``.
"""
from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import ConfigError, SolverError
from .logistic import NEWTON_TOL, LogisticPoint, logistic_point, threshold_expansion
from .spectral import CoefficientSet, EigenPair

POINTS_PER_DECADE = 400
START_OFFSET = 1e-6
INITIAL_SPAN = 1e4
MAX_SPAN = 1e9
ROOT_TOL = 1e-9
DEGENERATE_SLOPE = 1e-7


@dataclass(frozen=True)
class CurveSample:
    l: float
    n_dI: float
    n_dIdS: float
    slope: float
    int_u: float
    int_lv: float


@dataclass(frozen=True)
class Thresholds:
    r0_low: float
    r0_low_source: str
    r0_low_scan: float
    r0_low_tail: float
    d_low: float
    m_star: float
    d2_star: float | None
    d_S: float | None
    r0_thresh: tuple[float, float, float] | None
    segment_breaks: tuple[float, ...]
    critical_values: tuple[float, ...]
    refinement_stable: bool | None = None


@dataclass(frozen=True)
class Root:
    l: float
    S: np.ndarray
    I: np.ndarray
    slope: float
    degenerate: bool
    residual: float
    is_minimal: bool = False
    is_maximal: bool = False


@dataclass(frozen=True)
class EquilibriumSet:
    r0: float
    dS: float
    roots: list[Root] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.roots)


class LogisticCurve:
    """Cache of logistic solutions along ``l`` for one coefficient set.

    The scan grid is log-spaced in ``(l - l*)/l*`` from ``START_OFFSET`` to
    ``span``, ``points_per_decade`` points per decade, and is extended on
    demand one decade at a time.
    """

    def __init__(self, coeffs: CoefficientSet, eig: EigenPair,
                 points_per_decade: int = POINTS_PER_DECADE,
                 start_offset: float = START_OFFSET, span: float = INITIAL_SPAN,
                 newton_tol: float = NEWTON_TOL):
        if points_per_decade < 4:
            raise ConfigError("points_per_decade must be at least 4")
        self.coeffs = coeffs
        self.eig = eig
        self.ppd = int(points_per_decade)
        self.start_offset = start_offset
        self.newton_tol = newton_tol
        self.expansion = threshold_expansion(coeffs, eig)
        g = coeffs.grid
        self.length = g.length
        self.l_star = eig.l_star
        # l -> l* limits of int u and int l v
        self.int_lv_at_lstar = eig.l_star * self.expansion.c_star * g.integrate(eig.phi1)
        self._ls: list[float] = []
        self._pts: list[LogisticPoint] = []
        self._extra: dict[float, LogisticPoint] = {}
        self._offset_hi = start_offset
        self._sweep(start_offset, span)

    # -- scan management -------------------------------------------------
    def _sweep(self, lo_offset: float, hi_offset: float, include_lo: bool = True):
        decades = math.log10(hi_offset / lo_offset)
        count = max(2, int(round(decades * self.ppd)) + 1)
        offsets = np.logspace(math.log10(lo_offset), math.log10(hi_offset), count)
        if not include_lo:
            offsets = offsets[1:]
        warm = self._pts[-1].u if self._pts else None
        for off in offsets:
            l = self.l_star * (1.0 + off)
            pt = logistic_point(self.coeffs, self.eig, l, warm, self.newton_tol)
            self._ls.append(l)
            self._pts.append(pt)
            warm = pt.u
        self._offset_hi = hi_offset

    def extend(self, factor: float = 10.0):
        if self._offset_hi * factor > MAX_SPAN:
            raise SolverError("scan reached its maximum span without meeting the tail criterion",
                              l_max=self.l_max)
        self._sweep(self._offset_hi, self._offset_hi * factor, include_lo=False)

    @property
    def l_max(self) -> float:
        return self._ls[-1]

    @property
    def l(self) -> np.ndarray:
        return np.asarray(self._ls)

    @property
    def int_u(self) -> np.ndarray:
        return np.array([p.int_u for p in self._pts])

    @property
    def int_lv(self) -> np.ndarray:
        return np.array([p.int_lv for p in self._pts])

    @property
    def points(self) -> list[LogisticPoint]:
        return list(self._pts)

    def point(self, l: float) -> LogisticPoint:
        """Solve at arbitrary ``l``, warm-started from the nearest cached solution."""
        l = float(l)
        if l in self._extra:
            return self._extra[l]
        i = bisect_left(self._ls, l)
        if i < len(self._ls) and self._ls[i] == l:
            return self._pts[i]
        cands = [j for j in (i - 1, i) if 0 <= j < len(self._ls)]
        j = min(cands, key=lambda k: abs(self._ls[k] - l))
        pt = logistic_point(self.coeffs, self.eig, l, self._pts[j].u, self.newton_tol)
        if len(self._extra) > 4096:
            self._extra.clear()
        self._extra[l] = pt
        return pt

    # -- curve values ----------------------------------------------------
    @property
    def tail_limit(self) -> float:
        """``lim N_dI = avg(gamma/beta) R1``."""
        g = self.coeffs.grid
        return g.average(self.coeffs.gamma / self.coeffs.beta) * self.eig.r1

    def n_dI_from(self, l, int_u):
        return l * (self.length - self.coeffs.dI * int_u) / (self.l_star * self.length)

    def n_from(self, l, int_u, dS):
        return self.n_dI_from(l, int_u) + dS * l * int_u / (self.l_star * self.length)

    def slope_from(self, int_u, int_lv, dS):
        return (self.length + (dS - self.coeffs.dI) * (int_lv + int_u)) / (self.l_star * self.length)

    def n_dI_scan(self) -> np.ndarray:
        return self.n_dI_from(self.l, self.int_u)

    def n_scan(self, dS: float) -> np.ndarray:
        return self.n_from(self.l, self.int_u, dS)

    def slope_scan(self, dS: float) -> np.ndarray:
        return self.slope_from(self.int_u, self.int_lv, dS)

    def sample(self, l: float, dS: float) -> CurveSample:
        if l == self.l_star:
            return CurveSample(l=l, n_dI=1.0, n_dIdS=1.0,
                               slope=self.slope_from(0.0, self.int_lv_at_lstar, dS),
                               int_u=0.0, int_lv=self.int_lv_at_lstar)
        pt = self.point(l)
        return CurveSample(l=l, n_dI=self.n_dI_from(l, pt.int_u),
                           n_dIdS=self.n_from(l, pt.int_u, dS),
                           slope=self.slope_from(pt.int_u, pt.int_lv, dS),
                           int_u=pt.int_u, int_lv=pt.int_lv)

    def value(self, l: float, dS: float) -> float:
        if l == self.l_star:
            return 1.0
        return self.n_from(l, self.point(l).int_u, dS)

    def slope(self, l: float, dS: float) -> float:
        return self.sample(l, dS).slope

    def slope_zero_band(self) -> float:
        return 1e-9 / self.l_star

    # -- structure ---------------------------------------------------------
    def critical_points(self, dS: float) -> list[float]:
        """Bisection-refined sign changes of the slope on the scan."""
        slopes = self.slope_scan(dS)
        band = self.slope_zero_band()
        signs = np.where(slopes > band, 1, np.where(slopes < -band, -1, 0))
        ls = self.l
        breaks = []
        last_i, last_s = None, 0
        for i, s in enumerate(signs):
            if s == 0:
                continue
            if last_s != 0 and s != last_s:
                a, b = ls[last_i], ls[i]
                breaks.append(brentq(lambda t: self.slope(t, dS), a, b,
                                     xtol=1e-13 * b, rtol=1e-13))
            last_i, last_s = i, s
        return breaks

    def ensure_tail(self, tol: float = 1e-5):
        """Extend until ``N_dI(l_max)`` is within ``tol`` of its limit."""
        while abs(self.n_dI_from(self.l_max, self._pts[-1].int_u) - self.tail_limit) > tol:
            self.extend()

    def ensure_above(self, r0: float, dS: float):
        """Extend until no root of ``N_dI,dS = r0`` can lie beyond ``l_max``.

        Beyond ``l_max`` the curve is bounded below by the smaller of
        ``N_dI(l_max)`` and its limit, minus their gap, plus the ``dS`` term
        frozen at ``l_max`` (``u^l`` increases in ``l``).
        """
        while True:
            pt = self._pts[-1]
            l = self.l_max
            ndi = self.n_dI_from(l, pt.int_u)
            gap = abs(ndi - self.tail_limit)
            bound = min(ndi, self.tail_limit) - gap + dS * l * pt.int_u / (self.l_star * self.length)
            if bound > r0 and self.slope_from(pt.int_u, pt.int_lv, dS) > 0 and gap < 1e-3:
                return
            self.extend()


def eval_curve(coeffs: CoefficientSet, eig: EigenPair, l: float, dS: float | None = None,
               curve: LogisticCurve | None = None) -> CurveSample:
    """``N_dI``, ``N_dI,dS`` and the slope of the latter at ``l >= l*``."""
    dS = coeffs.dS if dS is None else dS
    if l < eig.l_star:
        raise ConfigError(f"l = {l} is below the threshold l* = {eig.l_star}")
    if curve is None:
        curve = LogisticCurve(coeffs, eig, points_per_decade=4, span=max(l / eig.l_star - 1, 1e-3))
    return curve.sample(l, dS)


def slope_limit_check(coeffs: CoefficientSet, eig: EigenPair, dS: float) -> float:
    """Slope of ``N_dI,dS`` as ``l -> infinity``: ``dS / (dI l*)``."""
    return dS / (coeffs.dI * eig.l_star)


def d2_star(coeffs: CoefficientSet, eig: EigenPair) -> float | None:
    """Largest ``dS`` keeping the slope at ``l*`` negative (None if it never is).

    The slope at ``l*`` is ``slope0 + dS c* avg(phi1)``.
    """
    te = threshold_expansion(coeffs, eig)
    if te.slope_at_lstar >= 0:
        return None
    return -te.slope_at_lstar / (te.c_star * te.phi_mean)


def d1_star(curve: LogisticCurve, r0: float) -> float:
    """Largest certified ``dS`` below which a maximal EE exists at ``r0``.

    Uses ``(r0 - N_dI(l)) L l* / (l int u^l)`` maximised over scan points
    with ``N_dI(l) < r0``.
    """
    ls, iu = curve.l, curve.int_u
    ndi = curve.n_dI_from(ls, iu)
    ok = ndi < r0
    if not np.any(ok):
        return 0.0
    vals = (r0 - ndi[ok]) * curve.length * curve.l_star / (ls[ok] * iu[ok])
    return float(np.max(vals))


def _refine_extremum(curve: LogisticCurve, values: np.ndarray, i: int, func, sign: float):
    ls = curve.l
    if i == 0 or i == len(ls) - 1:
        return values[i]
    res = minimize_scalar(lambda t: sign * func(t), bounds=(ls[i - 1], ls[i + 1]),
                          method="bounded", options={"xatol": 1e-12 * ls[i]})
    return min(sign * values[i], res.fun) * sign


def compute_thresholds(coeffs: CoefficientSet, eig: EigenPair, dS: float | None = None,
                       curve: LogisticCurve | None = None,
                       check_refinement: bool = False) -> Thresholds:
    if curve is None:
        curve = LogisticCurve(coeffs, eig)
    curve.ensure_tail()
    g = coeffs.grid

    ndi = curve.n_dI_scan()
    i = int(np.argmin(ndi))
    scan_min = _refine_extremum(curve, ndi, i, lambda t: curve.value(t, 0.0), 1.0)
    scan_min = min(scan_min, 1.0)
    tail = curve.tail_limit
    r0_low, source = (scan_min, "scan") if scan_min < tail else (tail, "tail")

    J = curve.int_u + curve.int_lv
    j = int(np.argmax(J))
    sup_J = _refine_extremum(curve, J, j,
                             lambda t: curve.point(t).int_u + curve.point(t).int_lv, -1.0)
    te = curve.expansion
    J_star = g.integrate(eig.phi1) * g.integrate(coeffs.beta * eig.phi1**2) / (
        coeffs.dI * g.integrate(coeffs.beta * eig.phi1**3))
    J_inf = g.length / coeffs.dI
    M = coeffs.dI / g.length * max(sup_J, J_star, J_inf)
    m_star = 1.0 / M
    d_low = (1.0 - m_star) * coeffs.dI

    dS_eff = 0.0 if dS is None else dS
    breaks = curve.critical_points(dS_eff)
    crit = tuple(curve.value(b, dS_eff) for b in breaks)
    r0_thresh = None
    if dS is not None and len(breaks) >= 2:
        r0_thresh = (min(crit), crit[0], max((1.0,) + crit))

    stable = None
    if check_refinement:
        fine = LogisticCurve(coeffs, eig, points_per_decade=2 * curve.ppd,
                             start_offset=curve.start_offset,
                             span=curve.l_max / eig.l_star - 1.0, newton_tol=curve.newton_tol)
        stable = len(fine.critical_points(dS_eff)) == len(breaks)

    d2 = d2_star(coeffs, eig) if te.slope_at_lstar < 0 else None
    return Thresholds(r0_low=float(r0_low), r0_low_source=source, r0_low_scan=float(scan_min),
                      r0_low_tail=float(tail), d_low=float(d_low), m_star=float(m_star),
                      d2_star=d2, d_S=dS, r0_thresh=r0_thresh,
                      segment_breaks=tuple(float(b) for b in breaks),
                      critical_values=tuple(float(c) for c in crit),
                      refinement_stable=stable)


def _make_root(curve: LogisticCurve, l: float, r0: float, dS: float) -> Root:
    pt = curve.point(l)
    s = curve.sample(l, dS)
    return Root(l=float(l), S=l * (1.0 - curve.coeffs.dI * pt.u), I=dS * l * pt.u,
                slope=s.slope, degenerate=abs(s.slope) < DEGENERATE_SLOPE,
                residual=abs(s.n_dIdS - r0))


def classify(coeffs: CoefficientSet, eig: EigenPair, r0: float, dS: float,
             curve: LogisticCurve | None = None) -> EquilibriumSet:
    """All endemic equilibria at ``(r0, dS)``, ordered by ``l``."""
    if not r0 > 0:
        raise ConfigError(f"r0 must be positive, got {r0!r}")
    if not dS > 0:
        raise ConfigError(f"dS must be positive, got {dS!r}")
    if curve is None:
        curve = LogisticCurve(coeffs, eig)
    curve.ensure_above(r0, dS)

    ls = curve.l
    f = curve.n_scan(dS) - r0

    def excess(t):
        return curve.value(t, dS) - r0

    found: list[float] = []
    for i in range(len(ls) - 1):
        if f[i] == 0.0:
            found.append(ls[i])
        elif f[i] * f[i + 1] < 0:
            found.append(brentq(excess, ls[i], ls[i + 1], xtol=1e-15 * ls[i + 1], rtol=1e-15))
    # tangential contacts: a critical value equal to r0 without a sign change
    for c in curve.critical_points(dS):
        if abs(curve.value(c, dS) - r0) <= ROOT_TOL and all(abs(c - r) > 1e-6 * c for r in found):
            found.append(c)
    found.sort()

    roots = [_make_root(curve, l, r0, dS) for l in found]
    for r in roots:
        if r.residual > ROOT_TOL:
            raise SolverError(f"root at l = {r.l} misses r0 by {r.residual:.3e}", l=r.l)
    if roots:
        roots[0] = _flag(roots[0], is_minimal=True)
        roots[-1] = _flag(roots[-1], is_maximal=True)
    return EquilibriumSet(r0=float(r0), dS=float(dS), roots=roots)


def _flag(root: Root, **flags) -> Root:
    return replace(root, **flags)


def bifurcation_diagram(coeffs: CoefficientSet, eig: EigenPair, dS: float, l_grid,
                        curve: LogisticCurve | None = None) -> list[tuple[float, float, float]]:
    """``(N_dI,dS(l), int I, l)`` along ``l_grid``, with ``I = dS l u^l``."""
    l_grid = [float(l) for l in l_grid]
    if any(l <= eig.l_star for l in l_grid):
        raise ConfigError("every l in the grid must exceed l*")
    if any(b <= a for a, b in zip(l_grid, l_grid[1:])):
        raise ConfigError("l grid must be ascending")
    if curve is None:
        curve = LogisticCurve(coeffs, eig, points_per_decade=4,
                              span=max(l_grid[-1] / eig.l_star - 1, 1e-3))
    out = []
    for l in l_grid:
        pt = curve.point(l)
        out.append((curve.n_from(l, pt.int_u, dS), dS * l * pt.int_u, l))
    return out
