import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhdlayer.errors import ConfigurationError, PreconditionError
from mhdlayer.fields import (ScalarField, VectorField, build_grid, curl, d2x, d2z, ddx, ddz,
                             divergence, hardy_ratio, integrate, norms, wall_distance)


def test_grid_endpoints_and_clustering():
    g = build_grid(8, 33, 2.0, 3.0)
    assert g.z[0] == 0.0 and g.z[-1] == 2.0
    dz = np.diff(g.z)
    assert dz[0] < dz[len(dz) // 2]
    np.testing.assert_allclose(dz, dz[::-1], rtol=1e-12)


@pytest.mark.parametrize("args", [(5, 9), (2, 9), (8, 4), (8, 9, -1.0), (8, 9, 1.0, -0.5)])
def test_grid_rejects_bad_dimensions(args):
    with pytest.raises(ConfigurationError):
        build_grid(*args)


def test_quadrature_exact_for_linear_profiles_and_low_modes():
    g = build_grid(16, 21, 1.5, 2.0)
    X, Z = g.mesh
    assert integrate(np.ones_like(X), g) == pytest.approx(2 * np.pi * 1.5, rel=1e-14)
    assert integrate(Z, g) == pytest.approx(2 * np.pi * 1.5**2 / 2, rel=1e-13)
    assert abs(integrate(np.cos(3 * X) * Z, g)) < 1e-13


def test_z_stencils_exact_on_low_degree_polynomials():
    g = build_grid(4, 17, 1.0, 2.5)
    _, Z = g.mesh
    np.testing.assert_allclose(ddz(3 * Z - 1, g), 3.0, atol=1e-11)
    # wall rows use three/four-point stencils, exact for quadratics/cubics
    q = ddz(Z**2, g)
    np.testing.assert_allclose(q[:, [0, -1]], 2 * Z[:, [0, -1]], atol=1e-10)
    c = d2z(Z**3, g)
    np.testing.assert_allclose(c[:, [0, -1]], 6 * Z[:, [0, -1]], atol=1e-7)


@pytest.mark.parametrize("stretch", [0.0, 2.0])
def test_derivatives_second_order(stretch):
    errs = []
    for n in (32, 64, 128):
        g = build_grid(n, n + 1, 1.0, stretch)
        X, Z = g.mesh
        f = np.sin(X) * np.cos(2 * Z)
        e = max(np.abs(ddx(f, g) - np.cos(X) * np.cos(2 * Z)).max(),
                np.abs(ddz(f, g) + 2 * np.sin(X) * np.sin(2 * Z)).max(),
                np.abs(d2x(f, g) + f).max(),
                np.abs(d2z(f, g) + 4 * f).max())
        errs.append(e)
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.8)


def test_curl_is_discretely_solenoidal():
    g = build_grid(16, 25, 1.0, 2.0)
    X, Z = g.mesh
    psi = ScalarField(g, np.sin(X) * Z**2 * (1 - Z) ** 2)
    v = curl(psi)
    # ddx and ddz act on different axes and commute exactly
    assert np.abs(divergence(v).values).max() < 1e-12


def test_field_shape_checked():
    g = build_grid(8, 9)
    with pytest.raises(ConfigurationError):
        ScalarField(g, np.zeros((8, 8)))
    with pytest.raises(ConfigurationError):
        VectorField(ScalarField(g, np.zeros((8, 9))), ScalarField(build_grid(8, 11), np.zeros((8, 11))))


def test_norms_of_known_profile():
    g = build_grid(8, 2001, 1.0, 0.0)
    _, Z = g.mesh
    n = norms(ScalarField(g, np.sin(np.pi * Z)))
    assert n.l2 == pytest.approx(np.sqrt(np.pi), rel=1e-6)
    assert n.linf == pytest.approx(1.0, abs=1e-6)
    assert wall_distance(g).max() == pytest.approx(0.5)


def test_hardy_linear_profile_ratio_is_one():
    g = build_grid(4, 101)
    _, Z = g.mesh
    assert hardy_ratio(ScalarField(g, 2.0 * Z)) == pytest.approx(1.0, rel=1e-12)
    assert hardy_ratio(ScalarField(g, 1.0 - Z), "upper") == pytest.approx(1.0, rel=1e-12)


def test_hardy_needs_zero_trace():
    g = build_grid(4, 11)
    with pytest.raises(PreconditionError):
        hardy_ratio(ScalarField(g, np.ones((4, 11))))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=6))
def test_hardy_quotient_never_exceeds_two(coefs):
    g = build_grid(4, 1025)
    _, Z = g.mesh
    f = sum(c * Z ** (k + 1) for k, c in enumerate(coefs))
    if np.abs(f).max() < 1e-8:
        return
    assert hardy_ratio(ScalarField(g, f)) <= 2.0
