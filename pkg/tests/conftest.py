from dataclasses import dataclass

import numpy as np
import pytest

from sisatlas.curves import LogisticCurve
from sisatlas.domain import Grid
from sisatlas.perturbation import PerturbedModel, build_model, stabilize_eps
from sisatlas.spectral import CoefficientSet, EigenPair, principal_pair

FORWARD_DI = 0.15
BACKWARD_DI = 0.25

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    failed = rep.failed
    if rep.when == "call" or failed:
        prev = _ACCEPTANCE.get(number, (title, "PASS"))[1]
        status = "FAIL" if failed or prev == "FAIL" else ("SKIP" if rep.skipped else "PASS")
        _ACCEPTANCE[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {status}: {title}")


@dataclass
class Case:
    grid: Grid
    model: PerturbedModel
    coeffs: CoefficientSet
    eig: EigenPair
    curve: LogisticCurve


def make_case(dI: float, n: int = 501, eps: float | None = None) -> Case:
    grid = Grid(1.0, n)
    if eps is None:
        eps, _ = stabilize_eps(1.0, 1, dI, grid)
    model = build_model(1.0, 1, 1.0, eps, dI, grid)
    coeffs = model.coefficients()
    eig = principal_pair(coeffs)
    return Case(grid, model, coeffs, eig, LogisticCurve(coeffs, eig))


@pytest.fixture(scope="session")
def forward() -> Case:
    return make_case(FORWARD_DI)


@pytest.fixture(scope="session")
def backward() -> Case:
    return make_case(BACKWARD_DI)


@pytest.fixture(scope="session")
def cosine_coeffs():
    """beta = 1 + cos(pi x)/2, gamma = 1 on (0, 1)."""
    def build(dI: float, n: int = 501) -> CoefficientSet:
        g = Grid(1.0, n)
        return CoefficientSet(g, 1.0 + 0.5 * np.cos(np.pi * g.x), np.ones(n), dI)
    return build


@pytest.fixture
def constant_coeffs():
    def build(n: int = 201, beta: float = 2.0, gamma: float = 1.0, dI: float = 1.0,
              dS: float = 0.0, length: float = 1.0) -> CoefficientSet:
        g = Grid(length, n)
        return CoefficientSet(g, np.full(n, beta), np.full(n, gamma), dI, dS)
    return build
