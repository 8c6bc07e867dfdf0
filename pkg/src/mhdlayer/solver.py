"""Time integrator for 2D incompressible viscous/diffusive MHD in the channel.

One step advances ``(u, b)`` by

* second-order Adams–Bashforth for advection and Lorentz terms written in
  skew-symmetric form ``½(v·∇w + ∇·(v⊗w))``,
* Crank–Nicolson for ``eps1 Δu`` and ``eps2 Δb``,
* an exact discrete projection onto fields whose grid divergence vanishes.

Diffusion and projection are solved together as one saddle-point problem
per Fourier mode in x. In z the operators are banded, but the Schur
complement for the multiplier is dense; its LU factors are cached per
(grid, coefficient, wall type). Because the multiplier acts through the
transpose of the divergence weighted by the trapezoid rule, the projection is
orthogonal in the discrete L² inner product and the divergence of the new
field is zero to round-off at every node, walls included.

Wall conditions: velocity vanishes at both walls. The magnetic field vanishes
there when ``eps2 > 0``; for ``eps2 = 0`` only its normal component is
pinned and the tangential component evolves freely at the wall nodes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .errors import CFLError, ConfigurationError, InstabilityError, PreconditionError
from .fields import GridSpec, ScalarField, VectorField, d2x, d2z, ddx, ddz, integrate

Forcing = Callable[[float], tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]


@dataclass(frozen=True, eq=False)
class SolverConfig:
    grid: GridSpec
    eps1: float
    eps2: float
    dt: float
    cfl_limit: float = 0.5
    advection_form: str = "skew_symmetric"
    forcing: Forcing | None = None
    growth_guard: float = 1e3

    def __post_init__(self):
        if self.eps1 < 0 or self.eps2 < 0:
            raise ConfigurationError("solver.eps1 and solver.eps2 must be non-negative")
        if not (self.dt > 0):
            raise ConfigurationError(f"solver.dt must be positive, got {self.dt!r}")
        if self.advection_form != "skew_symmetric":
            raise ConfigurationError("solver.advection_form is fixed to 'skew_symmetric'")
        if not (self.cfl_limit > 0):
            raise ConfigurationError("solver.cfl_limit must be positive")

    @property
    def magnetic_pinned(self) -> bool:
        """Whether the tangential magnetic field is held at zero on the walls."""
        return self.eps2 > 0


@dataclass(frozen=True, eq=False)
class MhdState:
    u: VectorField
    b: VectorField
    p: ScalarField
    t: float = 0.0
    # Adams–Bashforth history: previous explicit tendencies and step size
    history: tuple | None = field(default=None, repr=False)
    prev_dt: float | None = field(default=None, repr=False)

    @property
    def grid(self) -> GridSpec:
        return self.u.grid


@dataclass(frozen=True)
class EnergyDiag:
    t: float
    energy: float
    dissipation: float
    div_u_max: float
    div_b_max: float


@dataclass
class RunResult:
    final: MhdState
    diagnostics: list[EnergyDiag]
    snapshot_times: list[float]
    observations: list[list]
    states: list[MhdState]


# --------------------------------------------------------------------------
# per-mode saddle-point solver


class ModeSolver:
    """Solve ``A v + Dᵀ q = r, D v = 0`` for each x-Fourier mode.

    ``A = W + alpha (K + c_k W)`` is the Crank–Nicolson matrix with trapezoid
    weights ``W`` and stiffness ``K``; ``D`` is the grid divergence. With
    ``alpha = 0`` the solve is the W-orthogonal projection onto solenoidal
    fields.
    """

    def __init__(self, grid: GridSpec, alpha: float, pin_tangential: bool):
        if alpha and not pin_tangential:
            raise ConfigurationError("diffusion requires Dirichlet tangential walls")
        self.grid = grid
        n = grid.nz
        interior = np.arange(1, n - 1)
        self.idx1 = interior if pin_tangential else np.arange(n)
        self.idx3 = interior
        nx, dx = grid.nx, grid.dx
        kk = np.arange(nx // 2 + 1)
        s = np.sin(kk * dx) / dx
        s[0] = 0.0
        if nx % 2 == 0:
            s[-1] = 0.0
        c = (2.0 - 2.0 * np.cos(kk * dx)) / dx**2
        self.s = s
        wz, K, Dz = grid.wz, grid.stiffness, grid.dz_matrix
        m3 = Dz[:, self.idx3]
        self.m3 = m3
        w1, w3 = wz[self.idx1], wz[self.idx3]
        k1 = K[np.ix_(self.idx1, self.idx1)]
        k3 = K[np.ix_(self.idx3, self.idx3)]
        a1inv, a3inv, lus = [], [], []
        null = None
        for k in kk:
            a1 = np.diag(w1 * (1.0 + alpha * c[k])) + alpha * k1
            a3 = np.diag(w3 * (1.0 + alpha * c[k])) + alpha * k3
            i1 = np.linalg.inv(a1)
            i3 = np.linalg.inv(a3)
            i1 = 0.5 * (i1 + i1.T)
            i3 = 0.5 * (i3 + i3.T)
            sch = m3 @ i3 @ m3.T
            if s[k] != 0.0:
                sch[np.ix_(self.idx1, self.idx1)] += s[k] ** 2 * i1
            else:
                if null is None:
                    null = linalg.null_space(m3.T)
                sigma = np.trace(sch) / n
                sch = sch + sigma * (null @ null.T)
            a1inv.append(i1)
            a3inv.append(i3)
            lus.append(linalg.inv(sch))
        self.a1inv = np.array(a1inv)
        self.a3inv = np.array(a3inv)
        self.sinv = np.array(lus)
        self.sweeps = 2

    def solve(self, r1: np.ndarray, r3: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Solve for physical-space right-hand sides restricted to the unknowns.

        ``r1`` has shape (nx, len(idx1)), ``r3`` (nx, len(idx3)). Returns
        ``(v1, v3, q)`` with ``q`` the multiplier on all z-nodes.
        """
        nx = self.grid.nx
        f1 = np.fft.rfft(r1, axis=0)
        f3 = np.fft.rfft(r3, axis=0)
        # two real systems per mode: (Im v1, Re v3) and (-Re v1, Im v3)
        R1 = np.stack([f1.imag, -f1.real], axis=-1)
        R3 = np.stack([f3.real, f3.imag], axis=-1)
        v1 = self.a1inv @ R1
        v3 = self.a3inv @ R3
        q = np.zeros((len(self.s), self.grid.nz, 2))
        # the Schur complement is formed in floating point with entries up to
        # (1/min Δz)²/min w, so a few refinement sweeps are needed to
        # bring the divergence down to round-off on stretched grids
        for _ in range(self.sweeps):
            g = self.m3 @ v3
            g[:, self.idx1, :] -= self.s[:, None, None] * v1
            dq = self.sinv @ g
            q += dq
            v1 = v1 + self.s[:, None, None] * (self.a1inv @ dq[:, self.idx1, :])
            v3 = v3 - self.a3inv @ (self.m3.T @ dq)
        out1 = np.fft.irfft(-v1[..., 1] + 1j * v1[..., 0], n=nx, axis=0)
        out3 = np.fft.irfft(v3[..., 0] + 1j * v3[..., 1], n=nx, axis=0)
        qq = np.fft.irfft(q[..., 0] + 1j * q[..., 1], n=nx, axis=0)
        return out1, out3, qq


@lru_cache(maxsize=16)
def mode_solver(grid: GridSpec, alpha: float, pin_tangential: bool) -> ModeSolver:
    return ModeSolver(grid, alpha, pin_tangential)


def project(v1: np.ndarray, v3: np.ndarray, grid: GridSpec,
            pin_tangential: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Discrete-L²-orthogonal projection onto grid-solenoidal fields.

    Wall nodes of pinned components are set to zero.
    """
    ms = mode_solver(grid, 0.0, pin_tangential)
    w = grid.wz
    r1 = (v1 * w)[:, ms.idx1]
    r3 = (v3 * w)[:, ms.idx3]
    a1, a3, _ = ms.solve(r1, r3)
    o1 = np.zeros_like(v1)
    o3 = np.zeros_like(v3)
    o1[:, ms.idx1] = a1
    o3[:, ms.idx3] = a3
    return o1, o3


# --------------------------------------------------------------------------
# explicit terms


def skew_advection(v1, v3, w, grid: GridSpec) -> np.ndarray:
    """``½(v·∇w + ∇·(v w))`` for one scalar component ``w``."""
    return 0.5 * (v1 * ddx(w, grid) + v3 * ddz(w, grid)
                  + ddx(v1 * w, grid) + ddz(v3 * w, grid))


def tendencies(u1, u3, b1, b3, grid: GridSpec) -> tuple[np.ndarray, ...]:
    """Explicit right-hand sides of the momentum and induction equations."""
    g = grid
    nu1 = -skew_advection(u1, u3, u1, g) + skew_advection(b1, b3, b1, g)
    nu3 = -skew_advection(u1, u3, u3, g) + skew_advection(b1, b3, b3, g)
    nb1 = -skew_advection(u1, u3, b1, g) + skew_advection(b1, b3, u1, g)
    nb3 = -skew_advection(u1, u3, b3, g) + skew_advection(b1, b3, u3, g)
    return nu1, nu3, nb1, nb3


def _laplace(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return d2x(f, grid) + d2z(f, grid)


def dissipation_density(f: np.ndarray, grid: GridSpec) -> float:
    """``-⟨Δf, f⟩`` in the scheme's own quadrature (f zero on walls)."""
    fx = (np.roll(f, -1, axis=0) - f) / grid.dx
    fz = np.diff(f, axis=1) / np.diff(grid.z)
    return float(np.sum(fx**2 * grid.wz) * grid.dx
                 + np.sum(fz**2 * np.diff(grid.z)) * grid.dx)


def diagnostics(s: MhdState, cfg: SolverConfig) -> EnergyDiag:
    g = s.grid
    u1, u3 = s.u.arrays
    b1, b3 = s.b.arrays
    energy = 0.5 * integrate(u1**2 + u3**2 + b1**2 + b3**2, g)
    diss = cfg.eps1 * (dissipation_density(u1, g) + dissipation_density(u3, g))
    if cfg.eps2 > 0:
        diss += cfg.eps2 * (dissipation_density(b1, g) + dissipation_density(b3, g))
    div_u = np.max(np.abs(ddx(u1, g) + ddz(u3, g)))
    div_b = np.max(np.abs(ddx(b1, g) + ddz(b3, g)))
    return EnergyDiag(s.t, energy, diss, float(div_u), float(div_b))


def max_signal_rate(s: MhdState) -> float:
    """Largest ``(|u1|+|b1|)/Δx + (|u3|+|b3|)/Δz`` over the nodes."""
    g = s.grid
    u1, u3 = s.u.arrays
    b1, b3 = s.b.arrays
    dz = np.diff(g.z)
    local = np.minimum(np.r_[dz[0], dz], np.r_[dz, dz[-1]])
    rate = (np.abs(u1) + np.abs(b1)) / g.dx + (np.abs(u3) + np.abs(b3)) / local
    return float(rate.max())


# --------------------------------------------------------------------------
# state construction and stepping


def make_state(u1, u3, b1, b3, grid: GridSpec, t: float = 0.0,
               p: np.ndarray | None = None) -> MhdState:
    if p is None:
        p = np.zeros((grid.nx, grid.nz))
    return MhdState(VectorField.from_arrays(grid, u1, u3),
                    VectorField.from_arrays(grid, b1, b3),
                    ScalarField(grid, p), t)


def _advance(v1, v3, n1, n3, f1, f3, dt, eps, pinned, grid):
    alpha = 0.5 * dt * eps
    ms = mode_solver(grid, alpha, pinned)
    w = grid.wz
    s1 = v1 + dt * (n1 + f1)
    s3 = v3 + dt * (n3 + f3)
    if alpha:
        s1 = s1 + alpha * _laplace(v1, grid)
        s3 = s3 + alpha * _laplace(v3, grid)
    a1, a3, q = ms.solve((s1 * w)[:, ms.idx1], (s3 * w)[:, ms.idx3])
    o1 = np.zeros_like(v1)
    o3 = np.zeros_like(v3)
    o1[:, ms.idx1] = a1
    o3[:, ms.idx3] = a3
    return o1, o3, q / (dt * w)


def step(s: MhdState, cfg: SolverConfig, dt: float | None = None,
         step_index: int = 0) -> MhdState:
    """Advance one time step of size ``dt`` (default ``cfg.dt``)."""
    g = cfg.grid
    if s.grid != g:
        raise PreconditionError("state and solver configuration use different grids")
    dt = cfg.dt if dt is None else dt
    rate = max_signal_rate(s)
    if rate * dt > cfg.cfl_limit * (1 + 1e-12):
        raise CFLError(
            f"time step {dt:g} exceeds the CFL limit {cfg.cfl_limit:g}: max signal rate "
            f"{rate:.6g} (speed/spacing) at t = {s.t:.6g}"
        )
    u1, u3 = s.u.arrays
    b1, b3 = s.b.arrays
    now = tendencies(u1, u3, b1, b3, g)
    if s.history is None:
        ab = now
    else:
        r = dt / s.prev_dt
        ab = tuple((1 + 0.5 * r) * a - 0.5 * r * b for a, b in zip(now, s.history))
    if cfg.forcing is not None:
        fa = cfg.forcing(s.t)
        fb = cfg.forcing(s.t + dt)
        force = tuple(0.5 * (a + b) for a, b in zip(fa, fb))
    else:
        force = (0.0, 0.0, 0.0, 0.0)
    nu1, nu3, p = _advance(u1, u3, ab[0], ab[1], force[0], force[1], dt, cfg.eps1, True, g)
    nb1, nb3, _ = _advance(b1, b3, ab[2], ab[3], force[2], force[3], dt, cfg.eps2,
                           cfg.magnetic_pinned, g)
    out = make_state(nu1, nu3, nb1, nb3, g, s.t + dt, p)
    if not all(np.all(np.isfinite(a)) for a in (nu1, nu3, nb1, nb3)):
        raise InstabilityError(f"non-finite values after step {step_index} (t = {out.t:.6g})")
    return replace(out, history=now, prev_dt=dt)


def _snapshot_steps(nsteps: int, cadence: int) -> list[int]:
    return sorted(set(int(round(k)) for k in np.linspace(0, nsteps, cadence + 1)))


def _gradient_peak(b: VectorField) -> float:
    g = b.grid
    b1, b3 = b.arrays
    return float(max(np.abs(ddx(b1, g)).max(), np.abs(ddz(b1, g)).max(),
                     np.abs(ddx(b3, g)).max(), np.abs(ddz(b3, g)).max()))


def run(s0: MhdState, cfg: SolverConfig, T: float,
        observers: Sequence[Callable[[MhdState], object]] = (),
        cadence: int = 20, keep_states: bool = False) -> RunResult:
    """Integrate to time ``s0.t + T`` with fixed steps (last one shortened).

    Observers are called on the snapshot states, ``cadence + 1`` evenly
    spaced snapshots including the initial and final ones.
    """
    if T < 0:
        raise PreconditionError("T must be non-negative")
    nsteps = 0 if T == 0 else max(1, math.ceil(T / cfg.dt - 1e-9))
    if cfg.eps1 == 0 and cfg.eps2 == 0 and nsteps > 1000:
        warnings.warn("ideal runs longer than 1000 steps are not energy stable", stacklevel=2)
    snaps = set(_snapshot_steps(nsteps, cadence))
    t_end = s0.t + T
    s = s0
    diags = [diagnostics(s, cfg)]
    times, obs, states = [], [], []

    def record(state):
        times.append(state.t)
        obs.append([f(state) for f in observers])
        if keep_states:
            states.append(state)

    record(s)
    guard0 = _gradient_peak(s.b) if cfg.eps2 == 0 else 0.0
    for n in range(1, nsteps + 1):
        dt = cfg.dt if n < nsteps else t_end - s.t
        s = step(s, cfg, dt, step_index=n)
        if n == nsteps:
            s = replace(s, t=t_end)
        diags.append(diagnostics(s, cfg))
        if cfg.eps2 == 0 and _gradient_peak(s.b) > cfg.growth_guard * (guard0 + 1.0):
            raise InstabilityError(f"magnetic gradients grew beyond the guard at step {n}")
        if n in snaps:
            record(s)
    return RunResult(s, diags, times, obs, states)


def run_reference_viscous(s0: MhdState, cfg: SolverConfig, T: float,
                          cadence: int = 20) -> RunResult:
    """Run the system without magnetic diffusion and keep snapshot states."""
    if cfg.eps2 != 0:
        raise PreconditionError("the reference run needs eps2 = 0")
    return run(s0, cfg, T, cadence=cadence, keep_states=True)


def elsasser_views(s: MhdState) -> tuple[VectorField, VectorField]:
    return s.u + s.b, s.u - s.b


def perturbation(grid: GridSpec, seed: int, pin_tangential: bool = True,
                 modes: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Smooth random grid-solenoidal field with zero wall values and unit L² norm."""
    rng = np.random.default_rng(seed)
    X, Z = grid.mesh
    zeta = np.pi * Z / grid.h
    psi = np.zeros_like(X)
    for k in range(modes + 1):
        for m in range(modes):
            a, b = rng.standard_normal(2) / (1 + k + m)
            psi += (a * np.cos(k * X) + b * np.sin(k * X)) * np.cos(m * zeta)
    psi *= np.sin(zeta) ** 2
    v1, v3 = project(ddz(psi, grid), -ddx(psi, grid), grid, pin_tangential)
    nrm = np.sqrt(integrate(v1**2 + v3**2, grid))
    return v1 / nrm, v3 / nrm


def init_state(state, cs=None, perturb: dict | None = None, grid: GridSpec | None = None,
               eps: float = 1.0, project_initial: bool = True,
               magnetic_pinned: bool = True) -> MhdState:
    """Initial data ``u⁰ + u_B + δu``, ``b⁰ + b_B + δb``.

    ``perturb`` holds ``kappa`` and ``seed``; the perturbation has squared
    L² norm ``eps**kappa / 2``. The ideal-plus-corrector part is projected
    once onto grid-solenoidal fields unless ``project_initial`` is False.
    """
    if grid is None:
        raise PreconditionError("init_state needs a grid")
    u1, u3, b1, b3 = state.sample(grid)
    if cs is not None:
        c = cs.sample(grid, 0.0)
        u1, u3, b1, b3 = u1 + c[0], u3 + c[1], b1 + c[2], b3 + c[3]
    if project_initial:
        u1, u3 = project(u1, u3, grid, True)
        b1, b3 = project(b1, b3, grid, magnetic_pinned)
    if perturb:
        kappa, seed = perturb["kappa"], int(perturb.get("seed", 0))
        amp = np.sqrt(0.5 * eps**kappa)
        du1, du3 = perturbation(grid, seed)
        db1, db3 = perturbation(grid, seed + 7919)
        # split the budget equally between velocity and magnetic parts
        scale = amp / np.sqrt(2.0)
        u1, u3 = u1 + scale * du1, u3 + scale * du3
        b1, b3 = b1 + scale * db1, b3 + scale * db3
        measured = integrate((scale * du1) ** 2 + (scale * du3) ** 2
                             + (scale * db1) ** 2 + (scale * db3) ** 2, grid)
        assert measured <= eps**kappa, "perturbation exceeds its budget"
    return make_state(u1, u3, b1, b3, grid)
