"""JSON run configuration.

Example::

    {
      "domain": {"length": 1.0, "nodes": 501},
      "coefficients": {"kind": "cosine-perturbation", "k": 1.0, "m": 1, "cM": 1.0,
                       "eps": "auto", "gammaRule": "beta-squared"},
      "model": {"dI": 0.25, "dS": 1e-6, "r0": 0.9985},
      "output": {"directory": "out", "stride": 10}
    }

Coefficient kinds: ``constant`` (``betaValue``, ``gammaValue``),
``cosine-perturbation`` (``k``, ``m``, ``cM``, ``eps`` or ``"auto"``,
``gammaRule`` ``"beta-squared"`` or ``"explicit"`` with ``gammaValue``) and
``table`` (``path`` to an ``x,beta,gamma`` CSV, linearly interpolated).
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
import json
from pathlib import Path

import numpy as np

from .domain import Grid
from .errors import ConfigError
from .logistic import NEWTON_TOL
from .perturbation import PerturbedModel, build_model, stabilize_eps
from .spectral import CoefficientSet

KINDS = ("constant", "cosine-perturbation", "table")
DEFAULT_SOLVER = {
    "eigenTol": 1e-12,
    "newtonTol": NEWTON_TOL,
    "pointsPerDecade": 400,
    "stagnationTol": 1e-9,
}


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing '{key}' in '{where}'")
    return block[key]


def _number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{name}' must be a number")
    return float(value)


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    grid: Grid
    coefficients: dict
    model: dict
    solver: dict
    output: dict
    sections: dict = field(default_factory=dict)
    perturbed: PerturbedModel | None = None

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | str = ".") -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw = copy.deepcopy(raw)
        dom = _require(raw, "domain", "config")
        nodes = _require(dom, "nodes", "domain")
        if isinstance(nodes, bool) or not isinstance(nodes, int):
            raise ConfigError("'nodes' must be an integer")
        grid = Grid(_number(_require(dom, "length", "domain"), "length"), nodes)
        coeffs = _require(raw, "coefficients", "config")
        kind = _require(coeffs, "kind", "coefficients")
        if kind not in KINDS:
            raise ConfigError(f"unknown coefficient kind {kind!r}; expected one of {KINDS}")
        model = _require(raw, "model", "config")
        _number(_require(model, "dI", "model"), "dI")
        if "r0" in model and "totalMass" in model:
            raise ConfigError("give exactly one of 'r0' and 'totalMass'")
        solver = dict(DEFAULT_SOLVER)
        solver.update(raw.get("solver", {}))
        output = {"directory": "out", "stride": 10}
        output.update(raw.get("output", {}))
        known = {"domain", "coefficients", "model", "solver", "output"}
        sections = {k: v for k, v in raw.items() if k not in known}
        return cls(raw=raw, base_dir=Path(base_dir), grid=grid, coefficients=coeffs,
                   model=model, solver=solver, output=output, sections=sections)

    @classmethod
    def load(cls, path: Path | str) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        cfg = cls.from_dict(raw, path.parent)
        # echo table paths absolutely so the manifest config re-runs from anywhere
        if cfg.coefficients.get("kind") == "table":
            cfg.raw["coefficients"]["path"] = str(cfg.table_path())
        return cfg

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))

    def table_path(self) -> Path:
        p = Path(_require(self.coefficients, "path", "coefficients"))
        return p if p.is_absolute() else (self.base_dir / p).resolve()

    @property
    def dI(self) -> float:
        return float(self.model["dI"])

    @property
    def dS(self) -> float:
        dS = self.model.get("dS")
        if dS is None:
            raise ConfigError("missing 'dS' in 'model'")
        return _number(dS, "dS")

    def build_coefficients(self, dS: float | None = None) -> CoefficientSet:
        c = self.coefficients
        kind = c["kind"]
        g = self.grid
        dS = float(self.model.get("dS", 0.0)) if dS is None else dS
        extra = {}
        if "r0" in self.model:
            extra["r0"] = _number(self.model["r0"], "r0")
        elif "totalMass" in self.model:
            extra["total_mass"] = _number(self.model["totalMass"], "totalMass")
        if kind == "constant":
            beta = np.full(g.n, _number(_require(c, "betaValue", "coefficients"), "betaValue"))
            gamma = np.full(g.n, _number(_require(c, "gammaValue", "coefficients"), "gammaValue"))
        elif kind == "cosine-perturbation":
            model = self.perturbation()
            beta = model.beta
            rule = c.get("gammaRule", "beta-squared")
            if rule == "beta-squared":
                gamma = model.gamma
            elif rule == "explicit":
                gamma = np.full(g.n, _number(_require(c, "gammaValue", "coefficients"), "gammaValue"))
            else:
                raise ConfigError(f"unknown gammaRule {rule!r}")
        else:
            beta, gamma = self._table()
        return CoefficientSet(g, beta, gamma, self.dI, dS, **extra)

    def perturbation(self) -> PerturbedModel:
        if self.perturbed is None:
            c = self.coefficients
            if c.get("kind") != "cosine-perturbation":
                raise ConfigError("this command needs cosine-perturbation coefficients")
            k = _number(_require(c, "k", "coefficients"), "k")
            m = _require(c, "m", "coefficients")
            cM = _number(c.get("cM", 1.0), "cM")
            eps = c.get("eps", "auto")
            if eps == "auto":
                eps, _ = stabilize_eps(k, m, self.dI, self.grid, cM)
            self.perturbed = build_model(k, m, cM, _number(eps, "eps"), self.dI, self.grid)
        return self.perturbed

    def _table(self):
        path = self.table_path()
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
            with open(path, encoding="utf-8") as fh:
                header = [h.strip() for h in fh.readline().split(",")]
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read coefficient table {path}: {exc}") from exc
        if header[:3] != ["x", "beta", "gamma"] or data.shape[1] < 3:
            raise ConfigError("coefficient table must have columns x,beta,gamma")
        x, beta, gamma = data[:, 0], data[:, 1], data[:, 2]
        if np.any(np.diff(x) <= 0):
            raise ConfigError("table x values must be strictly increasing")
        if np.any(beta <= 0) or np.any(gamma <= 0):
            raise ConfigError("table beta and gamma must be strictly positive")
        g = self.grid
        if x[0] > 0 or x[-1] < g.length:
            raise ConfigError("coefficient table does not cover the domain")
        return np.interp(g.x, x, beta), np.interp(g.x, x, gamma)
