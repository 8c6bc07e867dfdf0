"""Channel grids with the finite-difference operators acting on discrete fields.

The domain is [0, 2π) x [0, h] with x periodic and walls at z = 0 and z = h.
Arrays are laid out as ``values[i, j]`` with ``i`` the x-index and ``j`` the
z-index. All derivatives are second order:

* x: centered periodic differences.
* z: centered differences ``(f[j+1] - f[j-1]) / (z[j+1] - z[j-1])`` in the
  interior and three-point one-sided stencils at the walls.
* second z-derivative: conservative three-point form divided by the
  trapezoid weight, which is exact for quadratics on any node distribution.

The interior z-stencil equals ``W^{-1} S`` with ``W`` the trapezoid weights
and ``S`` antisymmetric, so advection written in skew-symmetric form has an
exactly vanishing quadratic form under trapezoid quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import factorial
from typing import Literal

import numpy as np

from .errors import ConfigurationError, PreconditionError

Wall = Literal["lower", "upper"]


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid on the periodic channel.

    ``stretch = 0`` gives uniform z-nodes. For ``stretch > 0`` the nodes
    follow a symmetric tanh map that clusters points at both walls.
    """

    nx: int
    nz: int
    h: float = 1.0
    stretch: float = 0.0

    @cached_property
    def dx(self) -> float:
        return 2.0 * np.pi / self.nx

    @cached_property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.nx)

    @cached_property
    def z(self) -> np.ndarray:
        xi = np.linspace(0.0, 1.0, self.nz)
        if self.stretch == 0.0:
            z = self.h * xi
        else:
            s = self.stretch
            z = 0.5 * self.h * (1.0 + np.tanh(s * (2.0 * xi - 1.0)) / np.tanh(s))
        z[0], z[-1] = 0.0, self.h
        return z

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Broadcast-ready coordinates ``(X, Z)`` of shape (nx, nz)."""
        return np.meshgrid(self.x, self.z, indexing="ij")

    @cached_property
    def wz(self) -> np.ndarray:
        """Trapezoid weights in z."""
        dz = np.diff(self.z)
        w = np.zeros(self.nz)
        w[:-1] += 0.5 * dz
        w[1:] += 0.5 * dz
        return w

    @cached_property
    def weights(self) -> np.ndarray:
        """Full 2D quadrature weights, shape (nx, nz)."""
        return np.broadcast_to(self.dx * self.wz, (self.nx, self.nz))

    @cached_property
    def wall_stencils(self) -> tuple[np.ndarray, np.ndarray]:
        """Three-point first-derivative weights at the lower and upper wall."""
        z = self.z
        return (_fd_weights(z[:3], z[0], 1), _fd_weights(z[-3:], z[-1], 1))

    @cached_property
    def wall_stencils2(self) -> tuple[np.ndarray, np.ndarray]:
        """Four-point second-derivative weights at the lower and upper wall."""
        z = self.z
        return (_fd_weights(z[:4], z[0], 2), _fd_weights(z[-4:], z[-1], 2))

    @cached_property
    def dz_matrix(self) -> np.ndarray:
        """Dense matrix of the first z-derivative (acts on column vectors)."""
        n, z = self.nz, self.z
        d = np.zeros((n, n))
        inv = 1.0 / (z[2:] - z[:-2])
        j = np.arange(1, n - 1)
        d[j, j + 1] = inv
        d[j, j - 1] = -inv
        lo, hi = self.wall_stencils
        d[0, :3] = lo
        d[-1, -3:] = hi
        return d

    @cached_property
    def stiffness(self) -> np.ndarray:
        """Symmetric matrix K with ``W d2z f = -K f`` on interior rows.

        Only rows/columns of interior nodes are meaningful; wall rows are 0.
        """
        n = self.nz
        inv = 1.0 / np.diff(self.z)
        k = np.zeros((n, n))
        j = np.arange(1, n - 1)
        k[j, j] = inv[j - 1] + inv[j]
        k[j, j - 1] = -inv[j - 1]
        k[j, j + 1] = -inv[j]
        return k


def _fd_weights(nodes: np.ndarray, at: float, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at ``at``."""
    n = len(nodes)
    fact = np.array([factorial(k) for k in range(n)], dtype=float)
    vander = (nodes - at)[None, :] ** np.arange(n)[:, None] / fact[:, None]
    rhs = np.zeros(n)
    rhs[order] = 1.0
    return np.linalg.solve(vander, rhs)


def build_grid(nx: int, nz: int, h: float = 1.0, stretch: float = 0.0) -> GridSpec:
    """Validate the dimensions and return a :class:`GridSpec`."""
    if int(nx) != nx or nx < 4 or nx % 2:
        raise ConfigurationError(f"grid.nx must be an even integer >= 4, got {nx!r}")
    if int(nz) != nz or nz < 5:
        raise ConfigurationError(f"grid.nz must be an integer >= 5, got {nz!r}")
    if not np.isfinite(h) or h <= 0:
        raise ConfigurationError(f"grid.h must be positive, got {h!r}")
    if not np.isfinite(stretch) or stretch < 0:
        raise ConfigurationError(f"grid.stretch must be non-negative, got {stretch!r}")
    return GridSpec(int(nx), int(nz), float(h), float(stretch))


# --------------------------------------------------------------------------
# array-level stencils


def ddx(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2.0 * grid.dx)


def d2x(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return (np.roll(f, -1, axis=0) - 2.0 * f + np.roll(f, 1, axis=0)) / grid.dx**2


def ddz(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    z = grid.z
    out = np.empty_like(f)
    out[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (z[2:] - z[:-2])
    lo, hi = grid.wall_stencils
    out[:, 0] = f[:, :3] @ lo
    out[:, -1] = f[:, -3:] @ hi
    return out


def d2z(f: np.ndarray, grid: GridSpec, walls: str = "one_sided") -> np.ndarray:
    """Second z-derivative.

    ``walls="one_sided"`` uses four-point one-sided stencils at the walls.
    ``walls="odd"`` places a linearly extrapolated ghost node beyond each
    wall, which gives zero curvature there; appropriate for fields that
    vanish at the wall together with their second derivative.
    """
    z = grid.z
    dz = np.diff(z)
    out = np.empty_like(f)
    flux = np.diff(f, axis=1) / dz
    out[:, 1:-1] = (flux[:, 1:] - flux[:, :-1]) / grid.wz[1:-1]
    if walls == "one_sided":
        lo, hi = grid.wall_stencils2
        out[:, 0] = f[:, :4] @ lo
        out[:, -1] = f[:, -4:] @ hi
    elif walls == "odd":
        out[:, 0] = 0.0
        out[:, -1] = 0.0
    else:
        raise ConfigurationError(f"unknown wall treatment {walls!r}")
    return out


def integrate(f: np.ndarray, grid: GridSpec) -> float:
    """Trapezoid quadrature over the channel."""
    return float(np.sum(f * grid.wz) * grid.dx)


# --------------------------------------------------------------------------
# field containers


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.nx, self.grid.nz):
            raise ConfigurationError(
                f"field shape {self.values.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.nz})"
            )

    def __add__(self, other: ScalarField) -> ScalarField:
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: ScalarField) -> ScalarField:
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> ScalarField:
        return ScalarField(self.grid, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> ScalarField:
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Tangential component ``f1`` and wall-normal component ``f3``."""

    f1: ScalarField
    f3: ScalarField

    def __post_init__(self):
        if self.f1.grid != self.f3.grid:
            raise ConfigurationError("vector components live on different grids")

    @property
    def grid(self) -> GridSpec:
        return self.f1.grid

    @classmethod
    def from_arrays(cls, grid: GridSpec, a1: np.ndarray, a3: np.ndarray) -> VectorField:
        return cls(ScalarField(grid, a1), ScalarField(grid, a3))

    @classmethod
    def zeros(cls, grid: GridSpec) -> VectorField:
        shape = (grid.nx, grid.nz)
        return cls.from_arrays(grid, np.zeros(shape), np.zeros(shape))

    @property
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.f1.values, self.f3.values

    def __add__(self, other: VectorField) -> VectorField:
        return VectorField(self.f1 + other.f1, self.f3 + other.f3)

    def __sub__(self, other: VectorField) -> VectorField:
        return VectorField(self.f1 - other.f1, self.f3 - other.f3)

    def __mul__(self, c: float) -> VectorField:
        return VectorField(self.f1 * c, self.f3 * c)

    __rmul__ = __mul__

    def __neg__(self) -> VectorField:
        return VectorField(-self.f1, -self.f3)


@dataclass(frozen=True)
class NormSet:
    l2: float
    linf: float
    l2_dz: float
    l2_z_weighted: float
    linf_z2_weighted: float


# --------------------------------------------------------------------------
# operators on fields


def divergence(v: VectorField) -> ScalarField:
    g = v.grid
    return ScalarField(g, ddx(v.f1.values, g) + ddz(v.f3.values, g))


def gradient(s: ScalarField) -> VectorField:
    g = s.grid
    return VectorField.from_arrays(g, ddx(s.values, g), ddz(s.values, g))


def laplacian(s: ScalarField, walls: str = "one_sided") -> ScalarField:
    g = s.grid
    return ScalarField(g, d2x(s.values, g) + d2z(s.values, g, walls))


def curl(psi: ScalarField) -> VectorField:
    """Velocity ``(∂z ψ, -∂x ψ)`` of a stream function; discretely solenoidal."""
    g = psi.grid
    return VectorField.from_arrays(g, ddz(psi.values, g), -ddx(psi.values, g))


def wall_distance(grid: GridSpec) -> np.ndarray:
    """Distance to the nearer wall, switching at h/2."""
    z = grid.z
    return np.where(z <= 0.5 * grid.h, z, grid.h - z)


def _components(f: ScalarField | VectorField) -> list[np.ndarray]:
    if isinstance(f, VectorField):
        return [f.f1.values, f.f3.values]
    return [f.values]


def norms(f: ScalarField | VectorField) -> NormSet:
    """L², L∞ and wall-weighted norms of a scalar or vector field."""
    g = f.grid
    comps = _components(f)
    d = wall_distance(g)[None, :]
    mag2 = sum(c * c for c in comps)
    dz2 = sum(ddz(c, g) ** 2 for c in comps)
    return NormSet(
        l2=float(np.sqrt(integrate(mag2, g))),
        linf=float(np.sqrt(mag2.max())),
        l2_dz=float(np.sqrt(integrate(dz2, g))),
        l2_z_weighted=float(np.sqrt(integrate(d**2 * dz2, g))),
        linf_z2_weighted=float(np.sqrt((d**4 * dz2).max())),
    )


def hardy_ratio(f: ScalarField, wall: Wall = "lower", tol: float = 1e-12) -> float:
    """Ratio ``‖f/d‖ / ‖∂z f‖`` with ``d`` the distance to ``wall``.

    At the wall node itself ``f/d`` is replaced by its limit ``∂z f`` so the
    quadrature stays second order.
    """
    g = f.grid
    v = f.values
    j = 0 if wall == "lower" else g.nz - 1
    if wall not in ("lower", "upper"):
        raise PreconditionError(f"wall must be 'lower' or 'upper', got {wall!r}")
    if np.max(np.abs(v[:, j])) > tol:
        raise PreconditionError(f"field does not vanish on the {wall} wall")
    d = g.z if wall == "lower" else g.h - g.z
    dfz = ddz(v, g)
    q = np.empty_like(v)
    inner = np.arange(g.nz) != j
    q[:, inner] = v[:, inner] / d[inner]
    q[:, j] = dfz[:, j] * (1.0 if wall == "lower" else -1.0)
    num = integrate(q * q, g)
    den = integrate(dfz * dfz, g)
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return float(np.sqrt(num / den))
