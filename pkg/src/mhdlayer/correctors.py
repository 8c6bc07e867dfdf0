"""Explicit boundary-layer correctors for the velocity and magnetic field.

Two constructions are available.

``exact_exponential``
    For a wall trace ``a(x)`` and layer width ``s = sqrt(nu)`` the lower-wall
    layer is the curl of the stream function ``-a(x) Phi(z)`` with
    ``Phi(z) = s rho(z) (1 - exp(-z/s))``, i.e.

        tangential = -a(x) Phi'(z),     normal = a'(x) Phi(z).

    ``rho`` is a smooth cutoff equal to one at the wall and zero beyond a
    quarter of the channel, so the layer is exactly divergence free and its
    tangential value at the wall is ``-a(x)``. The upper wall is the mirror
    image in ``h - z``.

``prandtl_heat``
    The heat-kernel profile ``-a erfc(z / (2 sqrt(nu (t + s))))`` which solves
    ``∂t f = nu ∂z² f`` exactly. It needs a wall trace constant in x, in
    which case the normal component vanishes.

All derivatives are evaluated in closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import ConfigurationError, DomainError, PreconditionError
from .fields import GridSpec, NormSet, d2z, wall_distance
from .ideal import IdealState

MODES = ("exact_exponential", "prandtl_heat")


# --------------------------------------------------------------------------
# cutoffs


def _smoothstep(t: np.ndarray, n: int) -> np.ndarray:
    """n-th derivative of the quintic smoothstep 6t⁵ - 15t⁴ + 10t³."""
    if n == 0:
        return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)
    if n == 1:
        return 30.0 * t**2 * (1.0 - t) ** 2
    if n == 2:
        return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    if n == 3:
        return 60.0 - 360.0 * t + 360.0 * t**2
    raise ValueError("derivatives above third order are not provided")


@dataclass(frozen=True)
class Cutoff:
    """``1 - S(4 d / h)`` where ``d`` is the distance to one wall."""

    h: float
    upper: bool = False

    def __call__(self, z, n: int = 0) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        d = self.h - z if self.upper else z
        t = 4.0 * d / self.h
        inside = (t >= 0.0) & (t < 1.0)
        tc = np.clip(t, 0.0, 1.0)
        scale = (4.0 / self.h) ** n * (-1.0 if self.upper else 1.0) ** n
        val = -scale * _smoothstep(tc, n)
        if n == 0:
            val = 1.0 + val
        return np.where(inside, val, 0.0)


@dataclass(frozen=True)
class CutoffPair:
    rho1: Cutoff
    rho2: Cutoff


def make_cutoffs(h: float) -> CutoffPair:
    if not np.isfinite(h) or h <= 0:
        raise ConfigurationError(f"h must be positive, got {h!r}")
    return CutoffPair(Cutoff(float(h)), Cutoff(float(h), upper=True))


# --------------------------------------------------------------------------
# layer profile


def layer_profile(d: np.ndarray, s: float, rho: Cutoff, n: int) -> np.ndarray:
    """n-th derivative in the wall distance ``d`` of ``s rho (1 - e^{-d/s})``.

    ``rho`` is taken as the lower-wall cutoff evaluated at ``d``.
    """
    e = np.exp(-d / s)
    r0, r1, r2, r3 = (rho(d, k) for k in range(4))
    if n == 0:
        return s * r0 * (1.0 - e)
    if n == 1:
        return s * r1 * (1.0 - e) + r0 * e
    if n == 2:
        return s * r2 * (1.0 - e) + 2.0 * r1 * e - r0 * e / s
    if n == 3:
        return s * r3 * (1.0 - e) + 3.0 * r2 * e - 3.0 * r1 * e / s + r0 * e / s**2
    raise ValueError("profile derivatives above third order are not provided")


def nu2_star_diffusion_limit(eps2: float, theta: float, tau: float) -> float:
    """Magnetic layer width parameter ``(theta eps2)^(1 + tau)``."""
    if eps2 <= 0 or theta <= 0:
        raise DomainError("eps2 and theta must be positive")
    if not (0.0 <= tau < 1.0):
        raise DomainError(f"tau = {tau} outside the admissible range 0 <= tau < 1")
    return (theta * eps2) ** (1.0 + tau)


# --------------------------------------------------------------------------
# corrector set


@dataclass(frozen=True)
class CorrectorParams:
    nu1_star: float
    nu2_star: float
    s_shift: float = 1.0
    mode: str = "exact_exponential"

    def __post_init__(self):
        for name in ("nu1_star", "nu2_star", "s_shift"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ConfigurationError(f"corrector {name} must be positive, got {v!r}")
        if self.mode not in MODES:
            raise ConfigurationError(f"corrector mode must be one of {MODES}, got {self.mode!r}")


def _is_constant(fn: Callable, tol: float = 1e-13) -> bool:
    xs = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
    v = fn(xs)
    return bool(np.ptp(v) <= tol * max(1.0, np.max(np.abs(v))))


@dataclass(frozen=True, eq=False)
class CorrectorSet:
    """Velocity and magnetic boundary layers attached to an ideal state.

    Fields are evaluated with :meth:`evaluate`; the four named pieces of the
    construction are also exposed as ``u_plus`` (lower wall), ``u_minus``
    (upper wall), ``b_plus`` and ``b_minus``.
    """

    state: IdealState
    params: CorrectorParams
    cutoffs: CutoffPair
    velocity: bool = True
    magnetic: bool = True

    def _width(self, field: str) -> float:
        return self.params.nu1_star if field == "u" else self.params.nu2_star

    def _active(self, field: str) -> bool:
        return self.velocity if field == "u" else self.magnetic

    def trace(self, field: str, wall: int, order: int = 0) -> Callable:
        return self.state.trace(f"{field}1", wall, order)

    def piece(self, field: str, wall: int, x, z, t: float = 0.0,
              dx: int = 0, dz: int = 0, dt: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Derivative ``∂x^dx ∂z^dz ∂t^dt`` of one wall layer.

        ``field`` is ``"u"`` or ``"b"``; ``wall`` is 0 (lower) or 1 (upper).
        Returns the tangential and normal components.
        """
        x, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float))
        zero = np.zeros(x.shape)
        if not self._active(field):
            return zero, zero.copy()
        nu = self._width(field)
        h = self.state.h
        d = z if wall == 0 else h - z
        sgn_z = 1.0 if wall == 0 else -1.0
        if self.params.mode == "exact_exponential":
            if dt:
                return zero, zero.copy()
            s = np.sqrt(nu)
            rho = self.cutoffs.rho1
            a = self.trace(field, wall, dx)(x)
            ap = self.trace(field, wall, dx + 1)(x)
            f1 = -a * sgn_z**dz * layer_profile(d, s, rho, dz + 1)
            f3 = ap * sgn_z ** (dz + 1) * layer_profile(d, s, rho, dz)
            return f1, f3
        # prandtl_heat
        a = self.trace(field, wall, dx)(x)
        tt = t + self.params.s_shift
        delta = 2.0 * np.sqrt(nu * tt)
        eta = d / delta
        g = np.exp(-eta * eta) * 2.0 / np.sqrt(np.pi)
        if dt == 0 and dz == 0:
            prof = special.erfc(eta)
        elif dt == 0 and dz == 1:
            prof = -sgn_z * g / delta
        elif dt == 0 and dz == 2:
            prof = g * 2.0 * eta / delta**2
        elif dt == 1 and dz == 0:
            prof = g * d * 2.0 * nu / delta**3
        else:
            raise ValueError("unsupported derivative combination for the heat layer")
        return -a * prof, zero

    def evaluate(self, field: str, x, z, t: float = 0.0,
                 dx: int = 0, dz: int = 0, dt: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Sum of the lower and upper layers of ``field``."""
        l1, l3 = self.piece(field, 0, x, z, t, dx, dz, dt)
        u1, u3 = self.piece(field, 1, x, z, t, dx, dz, dt)
        return l1 + u1, l3 + u3

    def sample(self, grid: GridSpec, t: float = 0.0, dx: int = 0, dz: int = 0,
               dt: int = 0) -> tuple[np.ndarray, ...]:
        """Arrays ``(uB1, uB3, bB1, bB3)`` on the grid."""
        X, Z = grid.mesh
        return (*self.evaluate("u", X, Z, t, dx, dz, dt), *self.evaluate("b", X, Z, t, dx, dz, dt))

    def u_plus(self, x, z, t: float = 0.0):
        return self.piece("u", 0, x, z, t)

    def u_minus(self, x, z, t: float = 0.0):
        return self.piece("u", 1, x, z, t)

    def b_plus(self, x, z, t: float = 0.0):
        return self.piece("b", 0, x, z, t)

    def b_minus(self, x, z, t: float = 0.0):
        return self.piece("b", 1, x, z, t)


def build_correctors(state: IdealState, params: CorrectorParams,
                     cutoffs: CutoffPair | None = None, *,
                     velocity: bool = True, magnetic: bool = True) -> CorrectorSet:
    """Attach boundary layers to ``state``.

    ``velocity=False`` drops the velocity layers, as needed when only the
    magnetic diffusion vanishes.
    """
    if cutoffs is None:
        cutoffs = make_cutoffs(state.h)
    if abs(cutoffs.rho1.h - state.h) > 1e-14:
        raise PreconditionError("cutoffs were built for a different channel height")
    if params.mode == "prandtl_heat":
        for name in ("u1", "b1"):
            for wall in (0, 1):
                if not _is_constant(state.trace(name, wall)):
                    raise PreconditionError(
                        "prandtl_heat layers need wall traces that are constant in x"
                    )
    if state.kind == "well_prepared":
        # zero wall traces: no layer is attached at all
        velocity = magnetic = False
    return CorrectorSet(state, params, cutoffs, velocity, magnetic)


def prandtl_residual(cs: CorrectorSet, eps: float, grid: GridSpec, t: float) -> float:
    """Largest nodal ``|∂t u1B - eps ∂z² u1B|`` with a discrete ∂z²."""
    if cs.params.mode != "prandtl_heat":
        raise PreconditionError("prandtl_residual needs a prandtl_heat corrector set")
    X, Z = grid.mesh
    f1, _ = cs.evaluate("u", X, Z, t)
    ft, _ = cs.evaluate("u", X, Z, t, dt=1)
    res = ft - eps * d2z(f1, grid)
    return float(np.max(np.abs(res[:, 1:-1])))


# --------------------------------------------------------------------------
# layer norm scalings


LAYER_NORMS = (
    "tan_l2",        # ‖(U_B, ∂x U_B)‖
    "nor_l2",        # ‖u_B3‖
    "dz_tan_l2",     # ‖∂z U_B‖
    "dz_nor_l2",     # ‖∂z u_B3‖
    "zdz_tan_l2",    # ‖(z ∂z U_B+, (h - z) ∂z U_B-)‖
    "z2dz_tan_linf", # ‖(z² ∂z U_B+, (h - z)² ∂z U_B-)‖∞
    "linf",          # ‖u_B‖∞
    "dz_nor_linf",   # ‖∂z u_B3‖∞
)

# expected exponents of each norm in nu
LAYER_SLOPES = {
    "tan_l2": 0.25,
    "nor_l2": 0.5,
    "dz_tan_l2": -0.25,
    "dz_nor_l2": 0.25,
    "zdz_tan_l2": 0.25,
    "z2dz_tan_linf": 0.5,
    "linf": 0.0,
    "dz_nor_linf": 0.0,
}


@dataclass(frozen=True)
class LayerNorms:
    """Norm values keyed ``"<field>_<norm>"`` plus any resolution warnings."""

    values: dict
    warnings: tuple = ()

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def as_normset(self, field: str, group: str) -> NormSet:
        """Pack the tangential (``group="tan"``) norms into a NormSet."""
        v = self.values
        if group == "tan":
            return NormSet(v[f"{field}_tan_l2"], v[f"{field}_linf"], v[f"{field}_dz_tan_l2"],
                           v[f"{field}_zdz_tan_l2"], v[f"{field}_z2dz_tan_linf"])
        return NormSet(v[f"{field}_nor_l2"], v[f"{field}_dz_nor_linf"], v[f"{field}_dz_nor_l2"],
                       0.0, 0.0)


def lemma31_norms(cs: CorrectorSet, grid: GridSpec, t: float = 0.0) -> LayerNorms:
    """Layer norms by trapezoid quadrature of the sampled closed forms."""
    X, Z = grid.mesh
    w = grid.weights
    dist = wall_distance(grid)[None, :]
    out: dict[str, float] = {}
    notes = []
    for f in ("u", "b"):
        nu = cs._width(f)
        inside = int(np.sum(grid.z < np.sqrt(nu)))
        if cs._active(f) and inside < 4:
            notes.append(f"{f}-layer width sqrt({nu:g}) holds only {inside} grid nodes")
        t1, t3 = cs.evaluate(f, X, Z, t)
        x1, _ = cs.evaluate(f, X, Z, t, dx=1)
        z1, z3 = cs.evaluate(f, X, Z, t, dz=1)

        def l2(a):
            return float(np.sqrt(np.sum(a * w)))

        out[f"{f}_tan_l2"] = l2(t1**2 + x1**2)
        out[f"{f}_nor_l2"] = l2(t3**2)
        out[f"{f}_dz_tan_l2"] = l2(z1**2)
        out[f"{f}_dz_nor_l2"] = l2(z3**2)
        out[f"{f}_zdz_tan_l2"] = l2(dist**2 * z1**2)
        out[f"{f}_z2dz_tan_linf"] = float(np.max(np.abs(dist**2 * z1)))
        out[f"{f}_linf"] = float(np.sqrt(np.max(t1**2 + t3**2)))
        out[f"{f}_dz_nor_linf"] = float(np.max(np.abs(z3)))
    for n in notes:
        warnings.warn(n, stacklevel=2)
    return LayerNorms(out, tuple(notes))


def _periodic_sq(fn: Callable, n: int = 2048) -> tuple[float, float]:
    """(∫₀^{2π} f², max |f|) of a smooth periodic function."""
    xs = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    v = fn(xs)
    return float(np.sum(v * v) * 2 * np.pi / n), float(np.max(np.abs(v)))


def _quad(fn: Callable, a: float, b: float, s: float) -> float:
    pts = [p for p in (s, 3 * s, 10 * s, 30 * s, 100 * s) if a < p < b]
    val, _ = integrate.quad(fn, a, b, points=pts or None, limit=400,
                            epsabs=0.0, epsrel=1e-12)
    return val


def _profile_max(fn: Callable, h: float, s: float) -> float:
    zs = np.concatenate([np.geomspace(1e-6 * s, 0.25 * h, 20000), [0.0]])
    return float(np.max(np.abs(fn(zs))))


def lemma31_quadrature(cs: CorrectorSet, t: float = 0.0) -> LayerNorms:
    """Layer norms of the exact-exponential construction by 1D quadrature.

    Each layer factors as ``trace(x) * profile(z)``, so every norm is a
    product of a periodic x-integral and an adaptive z-integral.
    """
    if cs.params.mode != "exact_exponential":
        raise PreconditionError("quadrature norms are implemented for exact_exponential layers")
    h = cs.state.h
    rho = cs.cutoffs.rho1
    top = 0.25 * h
    out: dict[str, float] = {}
    for f in ("u", "b"):
        if not cs._active(f):
            for k in LAYER_NORMS:
                out[f"{f}_{k}"] = 0.0
            continue
        s = np.sqrt(cs._width(f))

        def prof(n, s=s):
            return lambda d: layer_profile(np.asarray(d, float), s, rho, n)

        a2, amax, ap2, apmax = 0.0, 0.0, 0.0, 0.0
        for wall in (0, 1):
            q0, m0 = _periodic_sq(cs.trace(f, wall, 0))
            q1, m1 = _periodic_sq(cs.trace(f, wall, 1))
            a2, ap2 = a2 + q0, ap2 + q1
            amax, apmax = max(amax, m0), max(apmax, m1)
        i0 = _quad(lambda d: prof(0)(d) ** 2, 0.0, top, s)
        i1 = _quad(lambda d: prof(1)(d) ** 2, 0.0, top, s)
        i2 = _quad(lambda d: prof(2)(d) ** 2, 0.0, top, s)
        iw = _quad(lambda d: (d * prof(2)(d)) ** 2, 0.0, top, s)
        out[f"{f}_tan_l2"] = float(np.sqrt((a2 + ap2) * i1))
        out[f"{f}_nor_l2"] = float(np.sqrt(ap2 * i0))
        out[f"{f}_dz_tan_l2"] = float(np.sqrt(a2 * i2))
        out[f"{f}_dz_nor_l2"] = float(np.sqrt(ap2 * i1))
        out[f"{f}_zdz_tan_l2"] = float(np.sqrt(a2 * iw))
        out[f"{f}_z2dz_tan_linf"] = amax * _profile_max(lambda d: d * d * prof(2)(d), h, s)
        out[f"{f}_dz_nor_linf"] = apmax * _profile_max(prof(1), h, s)
        out[f"{f}_linf"] = _linf_layer(cs, f, s, h)
    return LayerNorms(out)


def _linf_layer(cs: CorrectorSet, f: str, s: float, h: float) -> float:
    xs = np.linspace(0.0, 2 * np.pi, 256, endpoint=False)
    ds = np.concatenate([[0.0], np.geomspace(1e-4 * s, 0.25 * h, 2000)])
    best = 0.0
    rho = cs.cutoffs.rho1
    p0 = layer_profile(ds, s, rho, 0)
    p1 = layer_profile(ds, s, rho, 1)
    for wall in (0, 1):
        a = cs.trace(f, wall, 0)(xs)[:, None]
        ap = cs.trace(f, wall, 1)(xs)[:, None]
        best = max(best, float(np.sqrt(np.max((a * p1) ** 2 + (ap * p0) ** 2))))
    return best


def scaling_fit(samples) -> tuple[float, float]:
    """Least-squares slope and r² of log(value) against log(nu)."""
    nu = np.array([p[0] for p in samples], dtype=float)
    val = np.array([p[1] for p in samples], dtype=float)
    if len(nu) < 2:
        raise PreconditionError("need at least two samples for a fit")
    if np.any(nu <= 0) or np.any(val <= 0):
        raise DomainError("scaling_fit needs positive nu and values")
    lx, ly = np.log(nu), np.log(val)
    slope, icept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if ss == 0 else 1.0 - np.sum(resid**2) / ss
    return float(slope), float(r2)
