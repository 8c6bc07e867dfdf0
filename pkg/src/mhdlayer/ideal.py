"""Closed-form steady solutions of the ideal MHD equations in the channel.

Three families are provided:

``elsasser_steady``
    any solenoidal velocity with ``b = ±u`` and zero pressure.
``shear_flow``
    ``u = (U(z), 0)``, ``b = (B(z), 0)`` for arbitrary profiles.
``well_prepared``
    an Elsässer state whose tangential wall traces vanish.

Profiles are given as sympy expressions (or strings) in ``x`` and ``z``; the
normal velocity is obtained by integrating the continuity equation from the
lower wall, so every state is exactly divergence free. Derivatives of any
order are produced symbolically and compiled with ``sympy.lambdify``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy as sp

from .errors import ConfigurationError, DomainError
from .fields import GridSpec, VectorField, ddx, ddz

X, Z = sp.symbols("x z", real=True)
KINDS = ("elsasser_steady", "shear_flow", "well_prepared")


def _parse(expr: str | sp.Expr | float, h: float) -> sp.Expr:
    if isinstance(expr, sp.Expr):
        out = expr
    else:
        out = sp.sympify(
            expr, locals={"x": X, "z": Z, "h": sp.Float(h), "pi": sp.pi}
        )
    extra = out.free_symbols - {X, Z}
    if extra:
        raise ConfigurationError(f"profile {expr!r} uses unknown symbols {sorted(map(str, extra))}")
    return out


class _Compiled:
    """Lazily compiled numeric evaluator for derivatives of one expression."""

    def __init__(self, expr: sp.Expr):
        self.expr = expr
        self._cache: dict[tuple[int, int], Callable] = {}

    def __call__(self, x, z, dx: int = 0, dz: int = 0) -> np.ndarray:
        key = (dx, dz)
        fn = self._cache.get(key)
        if fn is None:
            e = self.expr
            if dx:
                e = sp.diff(e, X, dx)
            if dz:
                e = sp.diff(e, Z, dz)
            fn = sp.lambdify((X, Z), e, modules="numpy")
            self._cache[key] = fn
        x, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float))
        return np.broadcast_to(np.asarray(fn(x, z), dtype=float), x.shape).copy()


@dataclass(frozen=True, eq=False)
class IdealState:
    """Analytic steady ideal-MHD state ``(u⁰, b⁰, p⁰ = 0)``.

    ``sign`` is ``+1`` or ``-1`` when ``b⁰ = sign·u⁰`` and ``0`` for shear
    flows without that structure.
    """

    kind: str
    h: float
    u1: sp.Expr
    u3: sp.Expr
    b1: sp.Expr
    b3: sp.Expr
    sign: int
    s_norm_bound: float = field(default=0.0)

    def __post_init__(self):
        comp = {name: _Compiled(getattr(self, name)) for name in ("u1", "u3", "b1", "b3")}
        object.__setattr__(self, "_compiled", comp)
        if self.s_norm_bound == 0.0:
            object.__setattr__(self, "s_norm_bound", self._sobolev_magnitude())

    def component(self, name: str) -> _Compiled:
        """Evaluator for ``"u1"``, ``"u3"``, ``"b1"`` or ``"b3"``."""
        return self._compiled[name]

    def sample(self, grid: GridSpec, dx: int = 0, dz: int = 0) -> tuple[np.ndarray, ...]:
        """Arrays ``(u1, u3, b1, b3)`` (or a derivative of them) on ``grid``."""
        X_, Z_ = grid.mesh
        return tuple(self._compiled[n](X_, Z_, dx, dz) for n in ("u1", "u3", "b1", "b3"))

    def velocity(self, grid: GridSpec) -> VectorField:
        u1, u3, _, _ = self.sample(grid)
        return VectorField.from_arrays(grid, u1, u3)

    def magnetic(self, grid: GridSpec) -> VectorField:
        _, _, b1, b3 = self.sample(grid)
        return VectorField.from_arrays(grid, b1, b3)

    def trace(self, name: str, wall: int, order: int = 0) -> Callable[[np.ndarray], np.ndarray]:
        """x-derivative of order ``order`` of component ``name`` on wall 0 or 1."""
        zw = 0.0 if wall == 0 else self.h
        comp = self._compiled[name]
        return lambda x: comp(x, np.full_like(np.asarray(x, float), zw), order, 0)

    def _sobolev_magnitude(self) -> float:
        xs = np.linspace(0.0, 2 * np.pi, 48, endpoint=False)
        zs = np.linspace(0.0, self.h, 33)
        xg, zg = np.meshgrid(xs, zs, indexing="ij")
        total = 0.0
        for comp in self._compiled.values():
            for dx, dz in ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)):
                total = max(total, float(np.max(np.abs(comp(xg, zg, dx, dz)))))
        return total


def _normal_from_continuity(u1: sp.Expr, h: float) -> sp.Expr:
    zp = sp.Symbol("zp", real=True)
    u3 = -sp.integrate(sp.diff(u1, X).subs(Z, zp), (zp, 0, Z))
    return sp.simplify(u3)


def _check_normal_traces(u3: sp.Expr, h: float, label: str) -> None:
    fn = sp.lambdify((X, Z), u3, modules="numpy")
    xs = np.linspace(0.0, 2 * np.pi, 37)
    for zw in (0.0, h):
        vals = np.broadcast_to(np.asarray(fn(xs, np.full_like(xs, zw)), float), xs.shape)
        if np.max(np.abs(vals)) > 1e-12:
            raise DomainError(
                f"{label}: normal component does not vanish at z = {zw}; the depth "
                "average of the tangential profile must be independent of x"
            )


def elsasser_steady(u1_profile: str | sp.Expr, sign: int = 1, h: float = 1.0) -> IdealState:
    """Steady state with ``b⁰ = sign·u⁰`` built from a tangential profile."""
    if sign not in (1, -1):
        raise ConfigurationError(f"state.sign must be +1 or -1, got {sign!r}")
    u1 = _parse(u1_profile, h)
    u3 = _normal_from_continuity(u1, h)
    _check_normal_traces(u3, h, "elsasser_steady")
    return IdealState("elsasser_steady", float(h), u1, u3, sign * u1, sign * u3, sign)


def well_prepared(u1_profile: str | sp.Expr, sign: int = 1, h: float = 1.0) -> IdealState:
    """Elsässer state whose tangential velocity vanishes on both walls."""
    st = elsasser_steady(u1_profile, sign, h)
    f = st.component("u1")
    xs = np.linspace(0.0, 2 * np.pi, 37)
    for zw in (0.0, h):
        if np.max(np.abs(f(xs, np.full_like(xs, zw)))) > 1e-12:
            raise DomainError(f"well_prepared: tangential trace at z = {zw} is not zero")
    return IdealState("well_prepared", st.h, st.u1, st.u3, st.b1, st.b3, st.sign)


def shear_flow(U: str | sp.Expr, B: str | sp.Expr, h: float = 1.0) -> IdealState:
    """Parallel flow ``u = (U(z), 0)``, ``b = (B(z), 0)``."""
    Ue, Be = _parse(U, h), _parse(B, h)
    for name, e in (("U", Ue), ("B", Be)):
        if X in e.free_symbols:
            raise ConfigurationError(f"shear_flow profile {name} must depend on z only")
    if sp.simplify(Ue - Be) == 0:
        sign = 1
    elif sp.simplify(Ue + Be) == 0:
        sign = -1
    else:
        sign = 0
    zero = sp.Integer(0)
    return IdealState("shear_flow", float(h), Ue, zero, Be, zero, sign)


def make_state(kind: str, h: float = 1.0, **params) -> IdealState:
    """Construct a state family by name, as used by the configuration layer."""
    if kind == "elsasser_steady":
        return elsasser_steady(params["u1_profile"], params.get("sign", 1), h)
    if kind == "well_prepared":
        return well_prepared(params["u1_profile"], params.get("sign", 1), h)
    if kind == "shear_flow":
        return shear_flow(params["U"], params["B"], h)
    raise ConfigurationError(f"state.kind must be one of {KINDS}, got {kind!r}")


def eval_ideal(state: IdealState, x: float, z: float, t: float = 0.0):
    """Point values ``(u0, b0, p0)``; all families are time independent."""
    if not (0.0 <= z <= state.h):
        raise DomainError(f"z = {z} lies outside the channel [0, {state.h}]")
    vals = [float(state.component(n)(x, z)) for n in ("u1", "u3", "b1", "b3")]
    return np.array(vals[:2]), np.array(vals[2:]), 0.0


def ideal_residual(state: IdealState, grid: GridSpec) -> float:
    """Largest nodal residual of the discretised ideal equations.

    Momentum ``u·∇u - b·∇b`` (pressure is zero), induction
    ``u·∇b - b·∇u`` and both divergences, all with the grid stencils.
    """
    u1, u3, b1, b3 = state.sample(grid)

    def adv(v1, v3, w):
        return v1 * ddx(w, grid) + v3 * ddz(w, grid)

    res = [
        adv(u1, u3, u1) - adv(b1, b3, b1),
        adv(u1, u3, u3) - adv(b1, b3, b3),
        adv(u1, u3, b1) - adv(b1, b3, u1),
        adv(u1, u3, b3) - adv(b1, b3, u3),
    ]
    mom = np.sqrt(res[0] ** 2 + res[1] ** 2)
    ind = np.sqrt(res[2] ** 2 + res[3] ** 2)
    div_u = np.abs(ddx(u1, grid) + ddz(u3, grid))
    div_b = np.abs(ddx(b1, grid) + ddz(b3, grid))
    return float(max(mom.max(), ind.max(), div_u.max(), div_b.max()))


def wall_traces(state: IdealState):
    """Tangential traces ``(u1(x,0), u1(x,h), b1(x,0), b1(x,h))`` as callables."""
    return (
        state.trace("u1", 0),
        state.trace("u1", 1),
        state.trace("b1", 0),
        state.trace("b1", 1),
    )


def flip_sign(state: IdealState) -> IdealState:
    """The same state with ``b⁰`` replaced by ``-b⁰``."""
    return IdealState(
        state.kind, state.h, state.u1, state.u3, -state.b1, -state.b3, -state.sign
    )


@lru_cache(maxsize=None)
def default_rate_state(h: float = 1.0) -> IdealState:
    """Shear flow with equal, non-constant profiles and non-zero wall traces."""
    return shear_flow("1 + cos(pi*z/h)/2", "1 + cos(pi*z/h)/2", h)
