import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhdlayer.correctors import CorrectorParams, build_correctors
from mhdlayer.errors import CFLError, ConfigurationError, PreconditionError
from mhdlayer.fields import build_grid, ddx, ddz, integrate
from mhdlayer.ideal import elsasser_steady
from mhdlayer.solver import (SolverConfig, init_state, make_state, perturbation, project, run,
                             skew_advection, step)


@pytest.fixture(scope="module")
def small():
    return build_grid(16, 17, 1.0, 0.0)


def _random_field(g, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((g.nx, g.nz)), rng.standard_normal((g.nx, g.nz))


@pytest.mark.parametrize("stretch", [0.0, 3.0])
def test_projection_solenoidal_idempotent_orthogonal(stretch):
    g = build_grid(24, 33, 1.0, stretch)
    v1, v3 = _random_field(g, 0)
    p1, p3 = project(v1, v3, g, True)
    assert np.abs(ddx(p1, g) + ddz(p3, g)).max() <= 1e-10
    assert not p1[:, [0, -1]].any() and not p3[:, [0, -1]].any()
    q1, q3 = project(p1, p3, g, True)
    np.testing.assert_allclose(q1, p1, atol=1e-12)
    # the removed part is orthogonal to solenoidal fields in the quadrature inner product
    w1, w3 = project(*_random_field(g, 1), g, True)
    assert abs(integrate((v1 - p1) * w1 + (v3 - p3) * w3, g)) < 1e-10


def test_unpinned_projection_keeps_tangential_wall_values(small):
    v1, v3 = _random_field(small, 4)
    p1, p3 = project(v1, v3, small, False)
    assert np.abs(p1[:, 0]).max() > 0
    assert not p3[:, [0, -1]].any()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_skew_advection_is_energy_neutral(seed):
    g = build_grid(16, 17, 1.0, 2.0)
    v1, v3 = perturbation(g, seed)
    # the identity is for test functions vanishing on the walls, like the velocity
    w = np.random.default_rng(seed).standard_normal((g.nx, g.nz))
    w[:, [0, -1]] = 0.0
    assert abs(integrate(w * skew_advection(v1, v3, w, g), g)) < 1e-11


def test_zero_horizon_run_returns_initial_state(small):
    s0 = make_state(*perturbation(small, 1), *perturbation(small, 2), small)
    res = run(s0, SolverConfig(grid=small, eps1=0.1, eps2=0.1, dt=0.01), 0.0)
    assert res.final is s0 and len(res.diagnostics) == 1


def test_cfl_violation_reported(small):
    u1 = 50.0 * np.ones((small.nx, small.nz))
    z = np.zeros_like(u1)
    s0 = make_state(u1, z, z, z, small)
    with pytest.raises(CFLError, match="CFL"):
        step(s0, SolverConfig(grid=small, eps1=0.1, eps2=0.1, dt=0.1))


def test_config_validation(small):
    with pytest.raises(ConfigurationError):
        SolverConfig(grid=small, eps1=-1.0, eps2=0.1, dt=0.1)
    with pytest.raises(ConfigurationError):
        SolverConfig(grid=small, eps1=0.1, eps2=0.1, dt=0.0)
    with pytest.raises(PreconditionError):
        run(make_state(*perturbation(small, 0), *perturbation(small, 1), small),
            SolverConfig(grid=small, eps1=0.1, eps2=0.1, dt=0.1), -1.0)


def test_sign_flip_symmetry_is_bitwise(small):
    u1, u3 = perturbation(small, 3)
    b1, b3 = perturbation(small, 4)
    cfg = SolverConfig(grid=small, eps1=0.05, eps2=0.05, dt=0.01)
    a = run(make_state(u1, u3, b1, b3, small), cfg, 0.2).final
    b = run(make_state(u1, u3, -b1, -b3, small), cfg, 0.2).final
    np.testing.assert_array_equal(a.u.arrays[0], b.u.arrays[0])
    np.testing.assert_array_equal(a.b.arrays[1], -b.b.arrays[1])


def test_energy_balance_defect_second_order(small):
    u1, u3 = perturbation(small, 1)
    b1, b3 = perturbation(small, 2)
    defects = []
    for dt in (0.01, 0.005):
        r = run(make_state(u1, u3, b1, b3, small),
                SolverConfig(grid=small, eps1=0.05, eps2=0.05, dt=dt), 0.2, cadence=1)
        e = np.array([d.energy for d in r.diagnostics])
        d = np.array([d.dissipation for d in r.diagnostics])
        defects.append(abs(e[-1] - e[0] + np.sum(0.5 * (d[1:] + d[:-1])) * dt))
    assert math.log2(defects[0] / defects[1]) == pytest.approx(2.0, abs=0.2)


def test_short_heat_decay():
    g = build_grid(8, 65, 1.0, 0.0)
    _, Z = g.mesh
    u1 = np.sin(np.pi * Z)
    z = np.zeros_like(u1)
    r = run(make_state(u1, z, z, z, g), SolverConfig(grid=g, eps1=0.1, eps2=0.1, dt=0.01), 0.5)
    got = integrate(r.final.u.arrays[0] * u1, g) / integrate(u1 * u1, g)
    assert got == pytest.approx(math.exp(-0.1 * math.pi**2 * 0.5), rel=2e-3)


def test_init_state_perturbation_size():
    g = build_grid(16, 33, 1.0, 2.0)
    st_ = elsasser_steady("1 + sin(x)*cos(pi*z/h)/2")
    cs = build_correctors(st_, CorrectorParams(1e-2, 1e-2))
    base = init_state(st_, cs, None, g, 1e-1)
    pert = init_state(st_, cs, {"kappa": 2, "seed": 5}, g, 1e-1)
    d = [a - b for a, b in zip((*pert.u.arrays, *pert.b.arrays), (*base.u.arrays, *base.b.arrays))]
    assert integrate(sum(x**2 for x in d), g) == pytest.approx(0.5 * 1e-2, rel=1e-10)
    with pytest.raises(PreconditionError):
        init_state(st_, cs, None, None)


def test_run_without_magnetic_diffusion_leaves_tangential_b_free(small):
    st_ = elsasser_steady("1 + cos(pi*z/h)/2")
    s0 = init_state(st_, None, None, small, magnetic_pinned=False)
    r = run(s0, SolverConfig(grid=small, eps1=0.05, eps2=0.0, dt=0.01), 0.05)
    assert np.abs(r.final.b.arrays[0][:, 0]).min() > 0.1
    assert not r.final.u.arrays[0][:, [0, -1]].any()
