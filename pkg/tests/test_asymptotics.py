import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhdlayer import asymptotics as asy
from mhdlayer.correctors import CorrectorParams, build_correctors
from mhdlayer.errors import ConfigurationError, DomainError, PreconditionError
from mhdlayer.fields import ScalarField, build_grid
from mhdlayer.ideal import elsasser_steady, shear_flow
from mhdlayer.solver import init_state, make_state


GRID = np.geomspace(1e-2, 1e-6, 25)


def test_equal_and_shifted_laws():
    assert asy.equal_family()(1e-3) == (1e-3, 1e-3)
    e1, e2 = asy.shifted_family(0.6)(1e-2)
    assert e2 - e1 == pytest.approx(1e-2**1.6)
    with pytest.raises(DomainError):
        asy.equal_family()(0.0)
    with pytest.raises(ConfigurationError):
        asy.EpsilonFamily("shifted")


def test_custom_table_lookup():
    fam = asy.EpsilonFamily("custom", table=[(1e-2, 1e-2, 2e-2)])
    assert fam(1e-2) == (1e-2, 2e-2)
    with pytest.raises(ConfigurationError):
        fam(1e-3)


@pytest.mark.parametrize("alpha,ok", [(0.6, True), (1.0, True), (0.5, True), (0.4, False), (0.2, False)])
def test_assumption_checker_on_shifted_laws(alpha, ok):
    # eps2 - eps1 = eps^(alpha+1): the mixed ratio scales like eps^(2 alpha - 1),
    # bounded iff alpha >= 1/2; the difference ratio like eps^(2 alpha - 1/2)
    rep = asy.check_assumption_2_1(asy.shifted_family(alpha), GRID)
    assert rep.passed is ok


def test_assumption_checker_equal_law_and_preconditions():
    assert asy.check_assumption_2_1(asy.equal_family(), GRID).passed
    with pytest.raises(PreconditionError):
        asy.check_assumption_2_1(asy.equal_family(), [1e-3, 1e-2, 1e-4])
    with pytest.raises(PreconditionError):
        asy.check_assumption_2_1(asy.equal_family(), [1e-2, 5e-3, 2e-3])


def test_equal_law_beta_identities():
    eps, k = 1e-3, 4.0
    b = asy.beta_report(asy.equal_family(k), eps)
    r = math.sqrt(eps)
    b0 = eps ** (k - 1) + 2 * eps**2
    assert b.beta0 == pytest.approx(b0, rel=1e-15)
    assert b.betabar0 == pytest.approx(eps**k, rel=1e-15)
    assert b.beta2 == pytest.approx(2 * eps**2 + eps ** (k - 1) / (2 * eps), rel=1e-15)
    assert b.betabar1 == pytest.approx(eps**2 / eps * b.beta1, rel=1e-15)
    assert r > 0 and b.footnotes


def test_side_conditions_relative_to_largest_eps():
    fam = asy.equal_family(4.0)
    b = asy.beta_report(fam, 1e-4, 1e-2)
    assert all(ok for _, _, ok in b.side_conditions)


def test_linf_bound_leading_exponent_half():
    fam = asy.equal_family(8.0)
    eps = np.geomspace(1e-4, 1e-8, 9)
    vals = [asy.predict_linf_bound(asy.beta_report(fam, e), e, e) for e in eps]
    assert np.polyfit(np.log(eps), np.log(vals), 1)[0] == pytest.approx(0.5, abs=0.02)


def test_fit_rate_and_verdict():
    pairs = [(e, 2 * e**0.25) for e in (4e-3, 2e-3, 1e-3, 5e-4)]
    f = asy.fit_rate(pairs, 0.25)
    assert f.slope == pytest.approx(0.25, abs=1e-12) and f.r2 == pytest.approx(1.0)
    assert f.passed and f.verdict == "pass"
    assert not asy.fit_rate(pairs, 0.5).passed
    assert set(f.summary("x")) >= {"family", "slope", "r2", "predicted_slope", "verdict"}
    with pytest.raises(PreconditionError):
        asy.fit_rate(pairs[:2])
    with pytest.raises(DomainError):
        asy.fit_rate(pairs[:3] + [(1e-4, 0.0)])


def test_predicted_slopes():
    eps = [4e-3, 2e-3, 1e-3, 5e-4]
    p = asy.predicted_slope_from(lambda e: asy.inviscid_bound_sq(e, e, e, 4.0), eps)
    assert p == pytest.approx(0.25, abs=0.01)
    d = asy.predicted_slope_from(lambda e: asy.diffusion_bound_sq(e, 0.0), eps)
    assert d == pytest.approx(0.25, abs=1e-12)


def test_error_norms_vanish_on_reference_state():
    g = build_grid(16, 33, 1.0, 2.0)
    st_ = elsasser_steady("1 + sin(x)*cos(pi*z/h)/2")
    cs = build_correctors(st_, CorrectorParams(1e-2, 1e-2))
    u1, u3, b1, b3 = st_.sample(g)
    c = cs.sample(g)
    s = make_state(u1 + c[0], u3 + c[1], b1 + c[2], b3 + c[3], g)
    e = asy.error_norms(s, st_, cs)
    assert e["corrected_l2"] == 0.0 and e["elsasser_l2"] == 0.0 and e["raw_l2"] > 0


def test_budget_arity_and_reference_requirement():
    g = build_grid(16, 33, 1.0, 2.0)
    st_ = elsasser_steady("1 + sin(x)*cos(pi*z/h)/2")
    cs = build_correctors(st_, CorrectorParams(1e-2, 1e-2))
    s = init_state(st_, cs, {"kappa": 4, "seed": 0}, g, 1e-2)
    b = asy.energy_budget(s, st_, cs, "J", eps1=1e-2, eps2=1e-2, eps=1e-2)
    assert len(b.terms) == 13 and b[2] == 0.0
    with pytest.raises(PreconditionError):
        asy.energy_budget(s, st_, cs, "I", eps1=1e-2, eps2=0.0)
    with pytest.raises(ValueError):
        asy.BudgetReport("K", {"K1": 0.0}, 0.0)


def test_envelope_calibration():
    t = np.linspace(0, 1, 5)
    env = asy.elsasser_envelope(t, [1e-8] * 5, [0.0] * 5, [0.0] * 5, 1e-2, 1e-2, 1e-2, 4.0)
    assert env.C == pytest.approx(1.05, rel=1e-12)
    assert env.holds
    bad = asy.elsasser_envelope(t, [1e-8, 1e-8, 2e-8, 1e-8, 1e-8], [0.0] * 5, [0.0] * 5,
                                1e-2, 1e-2, 1e-2, 4.0)
    assert not bad.holds


def test_anisotropic_check_requires_zero_traces():
    g = build_grid(16, 17)
    with pytest.raises(PreconditionError):
        asy.anisotropic_linf_check(ScalarField(g, np.ones((16, 17))))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.floats(0.1, 5.0))
def test_anisotropic_ratio_bounded_for_separable_modes(k, m, amp):
    g = build_grid(32, 65)
    X, Z = g.mesh
    f = amp * np.cos(k * X) * np.sin(m * np.pi * Z)
    lhs, rhs = asy.anisotropic_linf_check(ScalarField(g, f))
    assert lhs <= rhs


def test_inviscid_study_rejects_inadmissible_law_before_solving():
    st_ = shear_flow("1 + cos(pi*z/h)/2", "1 + cos(pi*z/h)/2")
    with pytest.raises(ConfigurationError):
        asy.run_inviscid_limit_study(asy.shifted_family(0.2), [4e-3, 2e-3, 1e-3], st_, 0.25,
                                     grid_policy=lambda e: pytest.fail("solver was reached"))


def test_inviscid_study_needs_elsasser_structure():
    st_ = shear_flow("1 + cos(pi*z/h)/2", "sin(pi*z/h)")
    with pytest.raises(PreconditionError):
        asy.run_inviscid_limit_study(asy.equal_family(), [4e-3, 2e-3, 1e-3], st_, 0.25)


def test_diffusion_study_rejects_tau_one():
    st_ = shear_flow("sin(pi*z/h)", "1 + cos(pi*z/h)/2")
    with pytest.raises(DomainError):
        asy.run_diffusion_limit_study(1e-2, [1e-3, 5e-4, 2e-4], 0.1, 1.0, st_, 0.25)


def test_small_inviscid_study_runs():
    st_ = shear_flow("1 + cos(pi*z/h)/2", "1 + cos(pi*z/h)/2")
    res = asy.run_inviscid_limit_study(asy.equal_family(), [4e-3, 2e-3, 1e-3], st_, 0.05,
                                       build_grid(8, 129, 1.0, 3.0), cadence=4)
    assert [r["eps"] for r in res.rows] == [4e-3, 2e-3, 1e-3]
    assert res.fit.slope > 0.2
