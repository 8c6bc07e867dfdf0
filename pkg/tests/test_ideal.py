import numpy as np
import pytest

from mhdlayer.errors import ConfigurationError, DomainError
from mhdlayer.fields import build_grid, ddx, ddz
from mhdlayer.ideal import (default_rate_state, elsasser_steady, eval_ideal, flip_sign,
                            ideal_residual, make_state, shear_flow, wall_traces, well_prepared)


def test_elsasser_state_is_solenoidal_with_b_equal_u():
    st = elsasser_steady("1 + sin(x)*cos(pi*z/h)/2", 1)
    g = build_grid(32, 65, 1.0, 2.0)
    u1, u3, b1, b3 = st.sample(g)
    np.testing.assert_array_equal(u1, b1)
    # the analytic divergence vanishes exactly
    d = st.component("u1")(*g.mesh, 1, 0) + st.component("u3")(*g.mesh, 0, 1)
    assert np.abs(d).max() < 1e-12
    assert np.abs(u3[:, [0, -1]]).max() < 1e-14


def test_elsasser_residual_refines():
    st = elsasser_steady("1 + sin(x)*cos(pi*z/h)/2", -1)
    r = [ideal_residual(st, build_grid(n, n + 1)) for n in (32, 64)]
    assert r[1] < r[0] / 3.5


def test_shear_flow_has_zero_discrete_residual():
    st = shear_flow("1 + cos(pi*z/h)/2", "sin(pi*z/h)")
    assert st.sign == 0
    assert ideal_residual(st, build_grid(16, 33)) == 0.0


def test_sign_detection_and_flip():
    a = shear_flow("z", "z")
    b = shear_flow("z", "-z")
    assert (a.sign, b.sign) == (1, -1)
    f = flip_sign(elsasser_steady("cos(x)*cos(pi*z/h)", 1))
    g = build_grid(8, 9)
    u1, _, b1, _ = f.sample(g)
    np.testing.assert_array_equal(b1, -u1)
    assert f.sign == -1


def test_well_prepared_requires_zero_traces():
    st = well_prepared("sin(2*pi*z/h)")
    tr = wall_traces(st)
    xs = np.linspace(0, 6, 7)
    assert max(np.abs(t(xs)).max() for t in tr) < 1e-14
    with pytest.raises(DomainError):
        well_prepared("1 + cos(pi*z/h)")
    # x-dependent depth average would need a normal flux through the walls
    with pytest.raises(DomainError):
        elsasser_steady("cos(x)*z")


def test_non_representable_profiles_rejected():
    with pytest.raises(ConfigurationError):
        shear_flow("sin(x)", "1")
    with pytest.raises(ConfigurationError):
        elsasser_steady("y*z")
    with pytest.raises(ConfigurationError):
        make_state("vortex")
    with pytest.raises(ConfigurationError):
        elsasser_steady("z", sign=2)


def test_trace_derivatives_and_point_evaluation():
    st = elsasser_steady("1 + sin(x)*cos(pi*z/h)/2", 1, 2.0)
    xs = np.linspace(0, 2 * np.pi, 9)
    np.testing.assert_allclose(st.trace("u1", 0, 1)(xs), 0.5 * np.cos(xs), atol=1e-14)
    np.testing.assert_allclose(st.trace("u1", 1)(xs), 1 - 0.5 * np.sin(xs), atol=1e-14)
    u, b, p = eval_ideal(st, 0.3, 0.5)
    assert p == 0.0 and np.allclose(u, b)
    with pytest.raises(DomainError):
        eval_ideal(st, 0.0, 2.5)


def test_default_rate_state_traces_nonzero():
    st = default_rate_state()
    assert st.trace("u1", 0)(np.array([0.0]))[0] == pytest.approx(1.5)
    assert st.trace("u1", 1)(np.array([0.0]))[0] == pytest.approx(0.5)


def test_shear_flow_with_unequal_profiles_is_an_exact_steady_state():
    # parallel flows are never advected: every product carries a zero normal
    # component or an x-derivative of a z-only profile
    st = shear_flow("1 + z", "2")
    assert ideal_residual(st, build_grid(8, 17)) == 0.0


def test_well_prepared_needs_zero_depth_average():
    with pytest.raises(DomainError):
        well_prepared("sin(x)*sin(pi*z/h)")
    st = well_prepared("sin(x)*sin(2*pi*z/h)")
    r = [ideal_residual(st, build_grid(n, n + 1)) for n in (32, 64)]
    assert r[1] < r[0] / 3.5
