"""Mass-conserving time integration of the parabolic SIS system.

One IMEX step computes the exchange ``F = beta S I - gamma I`` once, then
solves ``(1 - dt dS A) S+ = S - dt F`` and ``(1 - dt dI A) I+ = I + dt F``.
The weighted column sums of ``A`` vanish, so ``int(S + I)`` is conserved to
linear-solve accuracy.  Steps producing a negative node are rejected with a
halved ``dt``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .curves import EquilibriumSet
from .errors import ConfigError, SolverError
from .spectral import CoefficientSet

MAX_HALVINGS = 40
GROWTH = 1.2
EXTINCTION = 1e-10
DFE = "DFE"
EE = "EE"
UNDECIDED = "Undecided"


@dataclass(frozen=True)
class SimState:
    t: float
    S: np.ndarray
    I: np.ndarray
    mass: float
    dt: float


@dataclass
class SteadyReport:
    converged: bool
    outcome: str
    final_state: SimState
    steps: int
    mass_drift: float
    matched_root: int | None = None
    distance: float | None = None
    snapshots: list[SimState] = field(default_factory=list)
    i_max_history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        st = self.final_state
        return {
            "converged": self.converged,
            "outcome": self.outcome,
            "steps": self.steps,
            "massDrift": self.mass_drift,
            "matchedRoot": self.matched_root,
            "distance": self.distance,
            "finalState": {"t": st.t, "dt": st.dt, "mass": st.mass,
                           "maxS": float(np.max(st.S)), "maxI": float(np.max(st.I)),
                           "minI": float(np.min(st.I))},
        }


def initial_state(coeffs: CoefficientSet, S, I, dt: float = 1e-3) -> SimState:
    g = coeffs.grid
    S = np.array(g.check(S), dtype=float)
    I = np.array(g.check(I), dtype=float)
    if np.any(S < 0) or np.any(I < 0):
        raise ConfigError("initial data must be nonnegative")
    if not dt > 0:
        raise ConfigError("dt must be positive")
    return SimState(t=0.0, S=S, I=I, mass=g.integrate(S + I), dt=float(dt))


def _try_step(coeffs: CoefficientSet, S, I, dt):
    lap = coeffs.grid.laplacian
    F = coeffs.beta * S * I - coeffs.gamma * I
    S1 = solve_banded((1, 1), lap.banded(-dt * coeffs.dS, 1.0), S - dt * F)
    I1 = solve_banded((1, 1), lap.banded(-dt * coeffs.dI, 1.0), I + dt * F)
    return S1, I1


def step(state: SimState, coeffs: CoefficientSet, max_halvings: int = MAX_HALVINGS) -> SimState:
    """Advance by ``state.dt`` (or the largest halving of it keeping positivity).

    The returned state's ``dt`` is the step actually taken.
    """
    dt = state.dt
    for _ in range(max_halvings + 1):
        S1, I1 = _try_step(coeffs, state.S, state.I, dt)
        if np.all(S1 >= 0) and np.all(I1 >= 0):
            mass = coeffs.grid.integrate(S1 + I1)
            return SimState(t=state.t + dt, S=S1, I=I1, mass=mass, dt=dt)
        dt *= 0.5
    raise SolverError("time step underflow while enforcing positivity", t=state.t, dt=dt,
                      state=state)


def reaction_dt_limit(state: SimState, coeffs: CoefficientSet) -> float:
    """``1 / max(beta I + |beta S - gamma|)``.

    The explicit reaction has the nonzero Jacobian eigenvalue
    ``beta S - gamma - beta I``; staying below this bound keeps
    ``dt |lambda| <= 1`` and avoids spurious period-two orbits.
    """
    rate = np.max(coeffs.beta * state.I + np.abs(coeffs.beta * state.S - coeffs.gamma))
    return 1.0 / rate if rate > 0 else np.inf


def match_equilibrium(state: SimState, equilibria: EquilibriumSet | None) -> tuple[int | None, float | None]:
    """Nearest root in the combined max-norm of ``(S, I)``."""
    if equilibria is None or not equilibria.roots:
        return None, None
    dists = [max(np.max(np.abs(state.S - r.S)), np.max(np.abs(state.I - r.I))) for r in equilibria.roots]
    i = int(np.argmin(dists))
    return i, float(dists[i])


def run_to_steady(state0: SimState, coeffs: CoefficientSet, t_max: float, stagnation_tol: float,
                  equilibria: EquilibriumSet | None = None, dt_max: float = 10.0,
                  growth: float = GROWTH, max_steps: int = 1_000_000,
                  stride: int | None = None) -> SteadyReport:
    """Integrate until ``|state change|/dt < stagnation_tol``, extinction or ``t_max``.

    Extinction (``max I < 1e-10 N/L``) ends the run with a DFE outcome.
    Every ``stride``-th accepted state is kept as a snapshot.  The step grows by
    ``growth`` per accepted step, capped by ``dt_max`` and the reaction limit.
    """
    g = coeffs.grid
    mass0 = state0.mass
    extinct = EXTINCTION * mass0 / g.length
    state = state0
    snaps = [state0] if stride else []
    i_hist = [float(np.max(state0.I))]
    drift = 0.0
    steps = 0
    outcome, converged = UNDECIDED, False
    while state.t < t_max and steps < max_steps:
        if np.max(state.I) < extinct:
            outcome, converged = DFE, True
            break
        new = step(state, coeffs)
        steps += 1
        drift = max(drift, abs(new.mass - mass0) / mass0)
        change = max(np.max(np.abs(new.S - state.S)), np.max(np.abs(new.I - state.I))) / new.dt
        i_hist.append(float(np.max(new.I)))
        if stride and steps % stride == 0:
            snaps.append(new)
        state = replace(new, dt=min(new.dt * growth, dt_max, reaction_dt_limit(new, coeffs)))
        if change < stagnation_tol:
            converged = True
            outcome = DFE if np.max(state.I) < extinct else EE
            break
    if stride and snaps[-1] is not state:
        snaps.append(state)
    idx, dist = match_equilibrium(state, equilibria) if outcome == EE else (None, None)
    return SteadyReport(converged=converged, outcome=outcome, final_state=state, steps=steps,
                        mass_drift=drift, matched_root=idx, distance=dist, snapshots=snaps,
                        i_max_history=i_hist)
