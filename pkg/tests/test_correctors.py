import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhdlayer.correctors import (CorrectorParams, build_correctors, layer_profile,
                                 lemma31_norms, lemma31_quadrature, make_cutoffs,
                                 nu2_star_diffusion_limit, scaling_fit)
from mhdlayer.errors import ConfigurationError, DomainError, PreconditionError
from mhdlayer.fields import build_grid
from mhdlayer.ideal import elsasser_steady, shear_flow
from mhdlayer.verification import default_layer_state, erfc_by_quadrature, lemma31_suite


@pytest.fixture(scope="module")
def layer_state():
    return default_layer_state()


def test_cutoff_values_and_smoothness():
    c = make_cutoffs(1.0)
    assert c.rho1(0.0) == 1.0 and c.rho2(1.0) == 1.0
    assert c.rho1(0.25) == 0.0 and c.rho2(0.75) == 0.0
    for n in (1, 2):
        assert abs(c.rho1(0.0, n)) < 1e-14
        assert abs(c.rho1(0.25 - 1e-12, n)) < 1e-6
    with pytest.raises(ConfigurationError):
        make_cutoffs(0.0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_profile_derivatives_match_central_differences(n):
    rho = make_cutoffs(1.0).rho1
    s = 0.05
    d = np.linspace(0.01, 0.24, 50)
    k = 1e-5
    fd = (layer_profile(d + k, s, rho, n - 1) - layer_profile(d - k, s, rho, n - 1)) / (2 * k)
    np.testing.assert_allclose(layer_profile(d, s, rho, n), fd, rtol=1e-6, atol=1e-6)


def test_wall_values_cancel_ideal_traces(layer_state):
    cs = build_correctors(layer_state, CorrectorParams(1e-3, 1e-3))
    xs = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    for wall, zw in ((0, 0.0), (1, 1.0)):
        z = np.full_like(xs, zw)
        c1, c3 = cs.evaluate("u", xs, z)
        assert np.abs(c1 + layer_state.component("u1")(xs, z)).max() <= 1e-12
        assert np.abs(c3).max() <= 1e-12


def test_pieces_analytically_solenoidal(layer_state):
    cs = build_correctors(layer_state, CorrectorParams(1e-2, 1e-2))
    xs = np.linspace(0, 2 * np.pi, 32)[:, None]
    zs = np.linspace(0, 1, 101)[None, :]
    for wall in (0, 1):
        a1 = cs.piece("u", wall, xs, zs, dx=1)[0]
        a3 = cs.piece("u", wall, xs, zs, dz=1)[1]
        assert np.abs(a1 + a3).max() < 1e-12


def test_velocity_only_switch(layer_state):
    cs = build_correctors(layer_state, CorrectorParams(1e-2, 1e-2), velocity=False)
    g = build_grid(8, 17)
    u1, u3, b1, _ = cs.sample(g)
    assert not u1.any() and not u3.any() and b1.any()


def test_nu2_star_formula():
    assert nu2_star_diffusion_limit(1e-3, 0.1, 0.0) == pytest.approx(1e-4, rel=1e-14)
    assert nu2_star_diffusion_limit(1e-3, 0.1, 0.5) == pytest.approx(1e-6, rel=1e-12)
    for bad in ((1e-3, 0.1, 1.0), (0.0, 0.1, 0.0), (1e-3, -1.0, 0.0)):
        with pytest.raises(DomainError):
            nu2_star_diffusion_limit(*bad)


def test_params_validated():
    with pytest.raises(ConfigurationError):
        CorrectorParams(-1.0, 1.0)
    with pytest.raises(ConfigurationError):
        CorrectorParams(1.0, 1.0, mode="spectral")


def test_prandtl_requires_constant_traces(layer_state):
    with pytest.raises(PreconditionError):
        build_correctors(layer_state, CorrectorParams(1e-3, 1e-3, 1.0, "prandtl_heat"))


def test_prandtl_profile_matches_quadrature_oracle():
    st_ = shear_flow("1", "1")
    eps, shift = 1e-2, 1.0
    cs = build_correctors(st_, CorrectorParams(eps, eps, shift, "prandtl_heat"))
    delta = 2 * math.sqrt(eps * shift)
    for eta in (0.25, 0.5, 1.0, 2.0):
        v, _ = cs.piece("u", 0, 0.0, eta * delta)
        assert -float(v) == pytest.approx(erfc_by_quadrature(eta), abs=1e-12)
    assert erfc_by_quadrature(1.0) == pytest.approx(0.15730, abs=1e-4)


def test_grid_norms_agree_with_quadrature(layer_state):
    cs = build_correctors(layer_state, CorrectorParams(1e-2, 1e-2))
    q = lemma31_quadrature(cs)
    g = lemma31_norms(cs, build_grid(256, 2049, 1.0, 2.0))
    for key in ("u_tan_l2", "u_nor_l2", "u_dz_tan_l2", "u_dz_nor_l2", "u_zdz_tan_l2"):
        assert g[key] == pytest.approx(q[key], rel=2e-3)


def test_under_resolved_layer_warns(layer_state):
    cs = build_correctors(layer_state, CorrectorParams(1e-6, 1e-6))
    with pytest.warns(UserWarning):
        lemma31_norms(cs, build_grid(8, 17))


def test_layer_exponents_in_thin_layer_regime(layer_state):
    # cutoff-derivative terms are negligible once sqrt(nu) << h/4
    r = lemma31_suite(layer_state, (1e-8, 1e-9, 1e-10, 1e-11, 1e-12))
    assert all(r["verdicts"].values()), r["slopes"]


def test_scaling_fit_exact_power_law():
    slope, r2 = scaling_fit([(n, 3 * n**0.25) for n in (1e-2, 1e-4, 1e-6)])
    assert slope == pytest.approx(0.25, abs=1e-12) and r2 == pytest.approx(1.0)
    with pytest.raises(DomainError):
        scaling_fit([(1e-2, 0.0), (1e-3, 1.0)])


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-6, 1e-1), st.floats(0.0, 2 * np.pi))
def test_support_property(nu, x0):
    cs = build_correctors(default_layer_state(), CorrectorParams(nu, nu))
    zs = np.linspace(0.25, 0.75, 41)
    xs = np.full_like(zs, x0)
    for f in ("u", "b"):
        c1, c3 = cs.evaluate(f, xs, zs)
        assert not c1.any() and not c3.any()


def test_well_prepared_state_has_no_layers():
    from mhdlayer.ideal import well_prepared
    cs = build_correctors(well_prepared("sin(x)*sin(2*pi*z/h)"), CorrectorParams(1e-3, 1e-3))
    q = lemma31_quadrature(cs)
    assert all(v == 0.0 for v in q.values.values())
