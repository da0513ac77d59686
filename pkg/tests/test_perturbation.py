import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sisatlas.domain import Grid
from sisatlas.errors import ConfigError
from sisatlas.perturbation import (BACKWARD, BOUNDARY, FORWARD, NEITHER, build_model,
                                   check_hypotheses, classify_regime, closed_form_expansion,
                                   eigenfunction_expansion_error, eps_bound,
                                   expansion_consistency, predicted_signs, regime_report,
                                   stabilize_eps)
from sisatlas.spectral import CoefficientSet, principal_pair

G = Grid(1.0, 501)


def test_eps_bound_single_cosine():
    assert eps_bound(G, 1.0, 1, 1.0) == pytest.approx(1 / math.sqrt(2))
    assert eps_bound(G, 2.0, 3, -0.5) == pytest.approx(2 / (0.5 * math.sqrt(2)))


@pytest.mark.parametrize("args", [
    (0.0, 1, 1.0, 0.01), (1.0, 0, 1.0, 0.01), (1.0, 1, 0.0, 0.01),
    (1.0, 1, 1.0, 0.8), (1.0, 1, 1.0, 0.0), (1.0, 1.5, 1.0, 0.01)])
def test_build_model_validation(args):
    k, m, c, eps = args
    with pytest.raises(ConfigError):
        build_model(k, m, c, eps, 0.15, G)


def test_model_coefficients():
    mdl = build_model(1.0, 2, 1.0, 0.05, 0.15, G)
    assert np.all(mdl.beta > 0)
    np.testing.assert_allclose(mdl.gamma, mdl.beta**2)
    np.testing.assert_allclose(mdl.h, math.sqrt(2) * np.cos(2 * math.pi * G.x))


def test_closed_form_forward_values():
    ex = closed_form_expansion(build_model(1.0, 1, 1.0, 0.05, 0.15, G))
    lam = math.pi**2
    assert ex.l0 == 1.0
    assert ex.l1 == pytest.approx(0.0, abs=1e-14)
    assert ex.l2 == pytest.approx(1 - 1 / (0.15 * lam), rel=1e-12)
    assert ex.l2 == pytest.approx(0.32455, abs=1e-4)
    assert ex.phi1_tilde[0] == pytest.approx(-math.sqrt(2) / (0.15 * lam), rel=1e-12)
    assert ex.phi1_tilde[0] == pytest.approx(-0.9553, abs=1e-4)



def test_gamma_at_origin():
    eps = 0.05
    mdl = build_model(1.0, 1, 1.0, eps, 0.15, G)
    assert mdl.gamma[0] == pytest.approx((1 + eps * math.sqrt(2))**2, rel=1e-14)


def test_l2_vanishes_at_first_boundary():
    ex = closed_form_expansion(build_model(1.0, 1, 1.0, 0.05, 1 / math.pi**2, G))
    assert ex.l2 == pytest.approx(0.0, abs=1e-14)


@given(st.floats(0.02, 0.5), st.integers(1, 3))
@settings(max_examples=25, deadline=None)
def test_phi1_tilde_has_zero_mean(dI, m):
    ex = closed_form_expansion(build_model(1.0, m, 1.0, 0.05, dI, G))
    assert abs(G.integrate(ex.phi1_tilde)) < 1e-12


@given(st.floats(0.02, 0.5))
@settings(max_examples=25, deadline=None)
def test_l2_sign_tracks_dI_lambda(dI):
    ex = closed_form_expansion(build_model(1.0, 1, 1.0, 0.05, dI, G))
    assert np.sign(ex.l2) == np.sign(dI * math.pi**2 - 1.0)

@pytest.mark.parametrize("dI,label", [
    (0.15, FORWARD), (0.25, BACKWARD), (0.05, NEITHER),
    (1 / math.pi**2, BOUNDARY), (2 / math.pi**2, BOUNDARY)])
def test_regime_labels(dI, label):
    assert classify_regime(1.0, dI * math.pi**2) == label


def test_predicted_signs_boundaries():
    assert predicted_signs(1.0, 1.5) == (1, 1)
    assert predicted_signs(1.0, 3.0) == (1, -1)
    assert predicted_signs(1.0, 0.5) == (-1, 1)
    assert predicted_signs(1.0, 1.0) == (None, 1)
    assert predicted_signs(1.0, 2.0) == (1, None)


@pytest.mark.parametrize("dI,label", [(0.15, FORWARD), (0.25, BACKWARD), (0.05, NEITHER)])
def test_regime_report_signs_agree(dI, label):
    eps, reps = stabilize_eps(1.0, 1, dI, G)
    assert len(reps) == 3
    for rep in reps:
        assert rep.regime == label
        assert rep.tth1_agrees and rep.tth2_agrees


def test_boundary_regime_has_no_prediction():
    rep = regime_report(1.0, 1, 2 / math.pi**2, G, 0.02)
    assert rep.regime == BOUNDARY
    assert rep.predicted_tth2 is None and rep.tth2_agrees is None


def test_backward_slope_sign_matches_tth2():
    rep = regime_report(1.0, 1, 0.25, G, 0.05)
    assert rep.slope_at_lstar < 0 and rep.tth2 < 0


@settings(max_examples=12, deadline=None)
@given(st.floats(0.105, 0.195), st.floats(0.2, 1.0))
def test_forward_window_signs(dI, frac):
    """Any dI with k^2 < dI lambda < 2 k^2 gives both indicators positive."""
    eps = frac * 0.05 * eps_bound(G, 1.0, 1, 1.0)
    rep = regime_report(1.0, 1, dI, G, eps)
    assert rep.regime == FORWARD
    assert rep.tth1 > 0 and rep.tth2 > 0


def test_expansion_consistency_both_models():
    for dI in (0.15, 0.25):
        models = [build_model(1.0, 1, 1.0, e, dI, G) for e in (0.05, 0.025, 0.0125)]
        rep = expansion_consistency(models)
        assert rep.passed, rep
        assert rep.band_ratio <= 10


def test_expansion_consistency_validation():
    with pytest.raises(ConfigError):
        expansion_consistency([build_model(1.0, 1, 1.0, 0.05, 0.15, G)])
    with pytest.raises(ConfigError):
        expansion_consistency([build_model(1.0, 1, 1.0, e, 0.15, G) for e in (0.3, 0.15)])


def test_eigenfunction_expansion_second_order():
    eps = np.array([0.04, 0.02, 0.01])
    errs = np.array([eigenfunction_expansion_error(build_model(1.0, 1, 1.0, e, 0.15, G))
                     for e in eps])
    scaled = errs / eps**2
    assert np.max(scaled) / np.min(scaled) < 2.0
    # higher-order terms fade, so successive error ratios approach 4 from above
    ratios = errs[:-1] / errs[1:]
    assert np.all(np.diff(ratios) < 0) and np.all(ratios > 4.0)


def test_hypotheses(forward, backward):
    fh = check_hypotheses(forward.coeffs, forward.eig)
    bh = check_hypotheses(backward.coeffs, backward.eig)
    assert fh.ratio_nonconstant and fh.mean_ratio_condition and fh.forward_condition
    assert not fh.backward_condition
    assert bh.backward_condition and not bh.forward_condition
    g = Grid(1.0, 51)
    c = CoefficientSet(g, np.full(51, 2.0), np.ones(51), 1.0)
    ch = check_hypotheses(c, principal_pair(c))
    assert not (ch.ratio_nonconstant or ch.backward_condition or ch.forward_condition)


def test_stabilized_eps_is_recorded():
    eps, reps = stabilize_eps(1.0, 1, 0.25, G)
    assert eps == reps[0].eps
    assert [r.eps for r in reps] == [eps, eps / 2, eps / 4]
