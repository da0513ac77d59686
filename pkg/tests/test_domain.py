import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sisatlas.domain import Grid, apply_laplacian, average, build_grid, integrate
from sisatlas.errors import ConfigError

grids = st.builds(Grid, length=st.floats(0.1, 20.0), n=st.integers(3, 400))


def test_constant_field_integrates_to_value_times_length():
    g = build_grid(3.0, 11)
    assert integrate(g, np.full(11, 1.0)) == pytest.approx(3.0, abs=1e-14)
    assert average(g, np.full(11, 2.5)) == pytest.approx(2.5, abs=1e-14)


def test_laplacian_annihilates_constants():
    g = build_grid(1.0, 201)
    assert np.max(np.abs(apply_laplacian(g.laplacian, np.full(201, 7.0)))) == 0.0


@pytest.mark.parametrize("m", [1, 2, 5])
def test_cosine_mode_is_exact_discrete_eigenvector(m):
    g = build_grid(1.0, 101)
    phi = np.cos(m * math.pi * g.x)
    lam_h = 4.0 / g.h**2 * math.sin(m * math.pi * g.h / 2) ** 2
    np.testing.assert_allclose(g.laplacian(phi), -lam_h * phi, atol=1e-9 * lam_h)


def test_discrete_eigenvalue_second_order():
    errs = []
    for n in (51, 101, 201):
        g = build_grid(1.0, n)
        lam_h = 4.0 / g.h**2 * math.sin(math.pi * g.h / 2) ** 2
        errs.append(abs(lam_h - math.pi**2))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.02)


@settings(max_examples=40, deadline=None)
@given(grids, st.integers(0, 2**31 - 1))
def test_weighted_column_sums_vanish_and_weighted_operator_symmetric(g, seed):
    f = np.random.default_rng(seed).normal(size=g.n)
    lap = g.laplacian
    scale = 1.0 / g.h**2
    assert abs(g.integrate(lap(f))) <= 1e-11 * scale * g.length * np.max(np.abs(f))
    WA = np.diag(g.weights) @ lap.dense()
    np.testing.assert_allclose(WA, WA.T, atol=1e-12 * scale * g.h)


@settings(max_examples=40, deadline=None)
@given(grids, st.floats(0.1, 10.0), st.floats(-5.0, 5.0))
def test_banded_solve_inverts_shifted_operator(g, shift, scale):
    rhs = np.sin(np.arange(g.n))
    x = g.laplacian.solve(-abs(scale), shift, rhs)
    back = -abs(scale) * g.laplacian(x) + shift * x
    np.testing.assert_allclose(back, rhs, atol=1e-8 * max(1.0, np.max(np.abs(rhs))))


def test_trapezoid_second_order_on_smooth_function():
    errs = [abs(Grid(1.0, n).integrate(np.exp(Grid(1.0, n).x)) - (math.e - 1)) for n in (51, 101)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)


@pytest.mark.parametrize("length,n", [(1.0, 2), (0.0, 10), (-1.0, 10), (1.0, 2.5)])
def test_invalid_grid_rejected(length, n):
    with pytest.raises(ConfigError):
        Grid(length, n)


def test_field_shape_checked():
    g = Grid(1.0, 10)
    with pytest.raises(ConfigError):
        g.integrate(np.ones(9))


def test_grid_arrays_read_only():
    g = Grid(1.0, 10)
    with pytest.raises(ValueError):
        g.weights[0] = 1.0


def test_sample_callable_and_scalar():
    g = Grid(2.0, 5)
    np.testing.assert_allclose(g.sample(lambda x: x**2), g.x**2)
    np.testing.assert_allclose(g.sample(3.0), np.full(5, 3.0))
