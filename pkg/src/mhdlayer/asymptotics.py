"""Rate bounds and error measurement, with energy budgets and the rate studies built on them.

All reported errors are norms, not squared norms, so every predicted slope
is half of the exponent appearing in the corresponding squared-norm bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .correctors import (CorrectorParams, CorrectorSet, build_correctors,
                         nu2_star_diffusion_limit, _is_constant)
from .errors import ConfigurationError, DomainError, PreconditionError
from .fields import GridSpec, ScalarField, build_grid, ddx, ddz, d2x, d2z, integrate
from .ideal import IdealState
from .solver import (MhdState, SolverConfig, dissipation_density, init_state,
                     project, run, run_reference_viscous, skew_advection)

SLOPE_MARGIN = 0.05
ENVELOPE_DELTA = 0.25


# --------------------------------------------------------------------------
# parameter laws


@dataclass(frozen=True)
class EpsilonFamily:
    """Map ``eps -> (eps1, eps2)`` plus the initial-data exponent ``kappa``.

    ``law`` is ``"equal"``, ``"shifted"`` (``eps2 = eps + eps**(alpha+1)``)
    or ``"custom"`` with ``table`` a sequence of ``(eps, eps1, eps2)``.
    """

    law: str = "equal"
    kappa: float = 4.0
    alpha: float | None = None
    table: tuple[tuple[float, float, float], ...] | None = None

    def __post_init__(self):
        if self.law not in ("equal", "shifted", "custom"):
            raise ConfigurationError(f"family.law must be equal, shifted or custom, got {self.law!r}")
        if self.law == "shifted" and (self.alpha is None or not np.isfinite(self.alpha)):
            raise ConfigurationError("family.alpha is required for the shifted law")
        if self.law == "custom":
            if not self.table:
                raise ConfigurationError("family.table is required for the custom law")
            rows = tuple(tuple(float(v) for v in r) for r in self.table)
            if any(len(r) != 3 or min(r) <= 0 for r in rows):
                raise ConfigurationError("family.table rows must be positive (eps, eps1, eps2)")
            object.__setattr__(self, "table", rows)
        if not np.isfinite(self.kappa):
            raise ConfigurationError("family.kappa must be finite")

    def __call__(self, eps: float) -> tuple[float, float]:
        if eps <= 0:
            raise DomainError(f"eps must be positive, got {eps}")
        if self.law == "equal":
            return eps, eps
        if self.law == "shifted":
            return eps, eps + eps ** (self.alpha + 1.0)
        for e, e1, e2 in self.table:
            if math.isclose(e, eps, rel_tol=1e-12):
                return e1, e2
        raise ConfigurationError(f"eps = {eps} is not in the custom family table")


def equal_family(kappa: float = 4.0) -> EpsilonFamily:
    return EpsilonFamily("equal", kappa)


def shifted_family(alpha: float, kappa: float = 4.0) -> EpsilonFamily:
    return EpsilonFamily("shifted", kappa, alpha=alpha)


@dataclass
class AssumptionReport:
    eps: np.ndarray
    sum_ratio: np.ndarray
    diff_ratio: np.ndarray
    min_ratio: np.ndarray
    verdicts: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def _loglog_slope(eps: np.ndarray, vals: np.ndarray) -> float:
    return float(np.polyfit(np.log(eps), np.log(vals), 1)[0])


def _tends_to_zero(eps: np.ndarray, vals: np.ndarray) -> bool:
    if np.all(vals == 0):
        return True
    if np.any(vals <= 0):
        return False
    monotone = bool(np.all(np.diff(vals) <= 1e-12 * vals[:-1]))
    return monotone and _loglog_slope(eps, vals) > SLOPE_MARGIN


def _bounded(eps: np.ndarray, vals: np.ndarray) -> bool:
    if np.all(vals == 0):
        return True
    if np.any(vals <= 0):
        return False
    # no power-law growth as eps decreases, and no large excursion
    return _loglog_slope(eps, vals) >= -SLOPE_MARGIN and vals.max() <= 10.0 * vals[0]


def check_assumption_2_1(family: EpsilonFamily, eps_grid: Sequence[float]) -> AssumptionReport:
    """Evaluate the three admissibility ratios of a parameter law.

    The first two must decrease to zero along the grid; the third, the
    squared-difference ratio divided by ``min(eps1, eps2)``, must stay bounded.
    """
    eps = np.asarray(eps_grid, float)
    if eps.ndim != 1 or len(eps) < 3 or np.any(np.diff(eps) >= 0):
        raise PreconditionError("eps_grid must be strictly decreasing with at least 3 values")
    if math.log10(eps[0] / eps[-1]) < 2 - 1e-9:
        raise PreconditionError("eps_grid must span at least two decades")
    pairs = np.array([family(e) for e in eps])
    e1, e2 = pairs[:, 0], pairs[:, 1]
    d2 = (e1 - e2) ** 2
    sum_ratio = (e1 + e2) / np.sqrt(eps)
    diff_ratio = d2 / (np.sqrt(eps) * eps * (e1 + e2))
    min_ratio = d2 / (eps * (e1 + e2)) / np.minimum(e1, e2)
    verdicts = {
        "sum_ratio_to_zero": _tends_to_zero(eps, sum_ratio),
        "diff_ratio_to_zero": _tends_to_zero(eps, diff_ratio),
        "min_ratio_bounded": _bounded(eps, min_ratio),
    }
    return AssumptionReport(eps, sum_ratio, diff_ratio, min_ratio, verdicts)


def assumption_grid(eps_list: Sequence[float], decades: float = 4.0) -> np.ndarray:
    """Decreasing grid from ``max(eps_list)`` spanning ``decades`` decades."""
    top = max(eps_list)
    return np.geomspace(top, top * 10.0 ** (-decades), 25)


# --------------------------------------------------------------------------
# beta formulas


BETA_NAMES = ("beta0", "beta1", "beta2", "beta3", "beta4", "betabar0", "betabar1", "betabar2")


@dataclass
class BetaReport:
    beta0: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    betabar0: float
    betabar1: float
    betabar2: float
    side_conditions: list[tuple[str, float, bool]] = field(default_factory=list)
    footnotes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in BETA_NAMES}


def _betas(eps: float, e1: float, e2: float, kappa: float) -> dict[str, float]:
    m = min(e1, e2)
    s = e1 + e2
    d2 = (e1 - e2) ** 2
    r = math.sqrt(eps)
    b0 = (eps ** (kappa - 1) + e1**2 + e2**2 + (e1 - eps) ** 2 / (e1 * r)
          + (e2 - eps) ** 2 / (e2 * r) + d2 / (eps * r * s))
    bb0 = d2 / (s * m) * b0 + eps**kappa + d2 / (r * s)
    # the last bracket repeats eps1 in both denominators, kept as printed
    b1 = (e1**2 + e2**2 + d2 / (eps * s**2 * m) * b0 + eps ** (kappa - 1) / s
          + d2 / (eps * r * s**2) + ((e1 - eps) ** 2 / (e1 * r) + (e2 - eps) ** 2 / (e1 * r)))
    bb1 = d2 + d2 / (s * m) * b1 + eps**2 / m * b1 + d2 / (r * s)
    b2 = d2 / (eps * s**2 * m) * b0 + e1**2 + e2**2 + eps ** (kappa - 1) / s + d2 / (eps * r * s**2)
    bb2 = eps**kappa + d2 / (s * m) * b2 + eps**2 / m * b2 + d2 / (r * s)
    b3 = eps**kappa + (b1 * bb2 + b2 * bb1) / (eps**2 * s)
    inv = 1.0 / e1 + 1.0 / e2
    b4 = (eps**kappa + b3 / eps + eps ** (kappa - 1) + d2 / (eps * s * m) * b2
          + d2 / (eps * r * s) + inv / m * b1 * b2 + (b1 + b2) * inv + b0 / m)
    return {"beta0": b0, "beta1": b1, "beta2": b2, "beta3": b3, "beta4": b4,
            "betabar0": bb0, "betabar1": bb1, "betabar2": bb2}


def _side_values(b: dict[str, float], e1: float, e2: float) -> dict[str, float]:
    m = min(e1, e2)
    s = e1 + e2
    return {
        "beta0/(min*sum)": b["beta0"] / (m * s),
        "betabar0/sum": b["betabar0"] / s,
        "betabar1/sum^2": b["betabar1"] / s**2,
        "(beta0+beta1+beta2)/min*(1/eps1+1/eps2)":
            (b["beta0"] + b["beta1"] + b["beta2"]) / m * (1.0 / e1 + 1.0 / e2),
    }


def beta_report(family: EpsilonFamily, eps: float, eps_max: float | None = None) -> BetaReport:
    """All eight beta quantities at ``eps`` with the side-condition ratios.

    A side condition passes when its ratio is at most ten times its value at
    ``eps_max`` (the largest eps of the configured range; defaults to ``eps``).
    """
    e1, e2 = family(eps)
    if e1 <= 0 or e2 <= 0:
        raise DomainError("eps1 and eps2 must be positive")
    vals = _betas(eps, e1, e2, family.kappa)
    side = _side_values(vals, e1, e2)
    if eps_max is None or eps_max == eps:
        ref = side
    else:
        r1, r2 = family(eps_max)
        ref = _side_values(_betas(eps_max, r1, r2, family.kappa), r1, r2)
    conds = [(k, v, bool(v <= 10.0 * ref[k] * (1 + 1e-12))) for k, v in side.items()]
    notes = ["beta1: the (eps2 - eps)^2 term is divided by eps1*sqrt(eps) as printed; "
             "eps2*sqrt(eps) is the likely intent"]
    return BetaReport(**vals, side_conditions=conds, footnotes=notes)


def predict_linf_bound(br: BetaReport, eps1: float, eps2: float) -> float:
    """Sup-norm bound for the corrected error with unit constant."""
    m = min(eps1, eps2)
    return float((br.beta1 / m) ** 0.25 * br.beta2**0.25
                 + br.beta0**0.25 * (br.beta4 / m) ** 0.25)


def inviscid_bound_sq(eps: float, e1: float, e2: float, kappa: float) -> float:
    """Right-hand side (unit constant) of the squared L² error bound."""
    return (eps ** (kappa - 1) + e1**2 + e2**2 + (e1 + e2) / math.sqrt(eps)
            + (e1 - e2) ** 2 / (eps * math.sqrt(eps) * (e1 + e2)))


def diffusion_bound_sq(eps2: float, tau: float) -> float:
    return math.sqrt(eps2) ** (1.0 - tau)


# --------------------------------------------------------------------------
# rate fitting


@dataclass
class RateFit:
    pairs: list[tuple[float, float]]
    slope: float
    r2: float
    predicted_slope: float
    margin: float = SLOPE_MARGIN

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.slope) and self.slope >= self.predicted_slope - self.margin)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def summary(self, family: str) -> dict:
        return {"family": family, "slope": self.slope, "r2": self.r2,
                "predicted_slope": self.predicted_slope, "verdict": self.verdict,
                "margin": self.margin,
                "note": "errors are norms (not squared); slopes are half the squared-bound exponents"}


def fit_rate(pairs: Sequence[tuple[float, float]], predicted_slope: float = 0.0) -> RateFit:
    """Least-squares slope of ``log(error)`` against ``log(eps)``."""
    pairs = [(float(e), float(v)) for e, v in pairs]
    if len(pairs) < 3:
        raise PreconditionError("fit_rate needs at least three (eps, error) pairs")
    arr = np.array(pairs)
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise DomainError("fit_rate needs positive finite eps and error values")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss == 0 else 1.0 - float(np.sum(resid**2)) / ss
    return RateFit(pairs, float(slope), r2, float(predicted_slope))


def predicted_slope_from(bound_sq: Callable[[float], float], eps_list: Sequence[float]) -> float:
    """Fitted log-log slope of the square root of a squared-norm bound."""
    e = np.asarray(eps_list, float)
    vals = np.sqrt([bound_sq(v) for v in e])
    return _loglog_slope(e, vals)


# --------------------------------------------------------------------------
# error measurement


def _reference_arrays(ideal: IdealState, cs: CorrectorSet | None, grid: GridSpec, t: float):
    u1, u3, b1, b3 = ideal.sample(grid)
    if cs is not None:
        c = cs.sample(grid, t)
        u1, u3, b1, b3 = u1 + c[0], u3 + c[1], b1 + c[2], b3 + c[3]
    return u1, u3, b1, b3


def error_norms(s: MhdState, ideal: IdealState, cs: CorrectorSet | None = None) -> dict[str, float]:
    """Raw and corrector-corrected errors of ``s`` against the ideal state."""
    g = s.grid
    u1, u3 = s.u.arrays
    b1, b3 = s.b.arrays
    i1, i3, j1, j3 = ideal.sample(g)
    raw = integrate((u1 - i1) ** 2 + (u3 - i3) ** 2 + (b1 - j1) ** 2 + (b3 - j3) ** 2, g)
    r1, r3, q1, q3 = _reference_arrays(ideal, cs, g, s.t)
    e = (u1 - r1, u3 - r3, b1 - q1, b3 - q3)
    corr = integrate(sum(a**2 for a in e), g)
    linf = float(np.max(np.sqrt(sum(a**2 for a in e))))
    sgn = -1.0 if ideal.sign == -1 else 1.0
    w1, w3 = e[0] - sgn * e[2], e[1] - sgn * e[3]
    return {"raw_l2": math.sqrt(raw), "corrected_l2": math.sqrt(corr),
            "corrected_linf": linf, "elsasser_l2": math.sqrt(integrate(w1**2 + w3**2, g))}


def remainder(s: MhdState, ideal: IdealState, cs: CorrectorSet | None,
              magnetic_pinned: bool = True) -> tuple[np.ndarray, ...]:
    """``(uR1, uR3, bR1, bR3)`` relative to the projected ideal-plus-corrector field.

    Projecting the reference makes the remainder exactly grid-solenoidal and
    zero on the walls, so the discrete identities behind the vanishing
    budget terms hold to round-off.
    """
    g = s.grid
    r1, r3, q1, q3 = _reference_arrays(ideal, cs, g, s.t)
    r1, r3 = project(r1, r3, g, True)
    q1, q3 = project(q1, q3, g, magnetic_pinned)
    u1, u3 = s.u.arrays
    b1, b3 = s.b.arrays
    return u1 - r1, u3 - r3, b1 - q1, b3 - q3


def derivative_error_norms(trajectory: Sequence[MhdState], ideal: IdealState,
                           cs: CorrectorSet | None) -> dict[str, float]:
    """Largest L² norms of ``∂t``, ``∂x`` and ``∂t∂x`` of the remainder.

    Time derivatives are centred differences between consecutive states;
    ``dx_l2`` is taken over every state.
    """
    if len(trajectory) < 3:
        raise PreconditionError("derivative norms need at least three consecutive states")
    g = trajectory[0].grid
    rems = [remainder(s, ideal, cs) for s in trajectory]
    ts = [s.t for s in trajectory]

    def l2(parts):
        return math.sqrt(integrate(sum(p**2 for p in parts), g))

    dx_l2 = max(l2([ddx(a, g) for a in r]) for r in rems)
    dt_l2 = dtdx_l2 = 0.0
    for k in range(1, len(rems) - 1):
        h = ts[k + 1] - ts[k - 1]
        if h <= 0:
            raise PreconditionError("trajectory times must increase")
        d = [(a - b) / h for a, b in zip(rems[k + 1], rems[k - 1])]
        dt_l2 = max(dt_l2, l2(d))
        dtdx_l2 = max(dtdx_l2, l2([ddx(a, g) for a in d]))
    return {"dt_l2": dt_l2, "dx_l2": dx_l2, "dtdx_l2": dtdx_l2}


# --------------------------------------------------------------------------
# energy budgets


@dataclass
class BudgetReport:
    family: str
    terms: dict[str, float]
    t: float

    ARITY = {"J": 13, "K": 7, "I": 11}

    def __post_init__(self):
        n = self.ARITY[self.family]
        if list(self.terms) != [f"{self.family}{i}" for i in range(1, n + 1)]:
            raise ValueError(f"{self.family} budget must list {n} terms in order")

    def __getitem__(self, i: int) -> float:
        return self.terms[f"{self.family}{i}"]

    @property
    def total(self) -> float:
        return float(sum(self.terms.values()))


def _adv(v, w, g):
    """``(v·∇)w`` for a vector ``w``, plain form."""
    v1, v3 = v
    return tuple(v1 * ddx(c, g) + v3 * ddz(c, g) for c in w)


def _dot(a, b, g) -> float:
    return integrate(a[0] * b[0] + a[1] * b[1], g)


def _skew_dot(v, w, r, g) -> float:
    """``∫ r·(v·∇)w`` with the skew-symmetric advection form."""
    return integrate(r[0] * skew_advection(v[0], v[1], w[0], g)
                     + r[1] * skew_advection(v[0], v[1], w[1], g), g)


def _pressure_term(s: MhdState, uR, p_ref: np.ndarray | None = None) -> float:
    g = s.grid
    p = s.p.values if p_ref is None else s.p.values - p_ref
    return integrate(p * (ddx(uR[0], g) + ddz(uR[1], g)), g)


def remainder_dissipation(uR, bR, g: GridSpec) -> tuple[float, float]:
    """``∫|∇u_R|²`` and ``∫|∇b_R|²`` in the scheme's quadrature."""
    return (dissipation_density(uR[0], g) + dissipation_density(uR[1], g),
            dissipation_density(bR[0], g) + dissipation_density(bR[1], g))


def energy_budget(s: MhdState, ideal: IdealState | None, cs: CorrectorSet | None,
                  family: str, reference: MhdState | None = None, *,
                  eps1: float, eps2: float, eps: float | None = None) -> BudgetReport:
    """Terms of the remainder energy balance evaluated on one state.

    ``family`` ``"J"`` and ``"K"`` use the ideal-plus-corrector split; ``"I"``
    uses ``reference`` (a state of the run without magnetic diffusion at the
    same time) plus the magnetic corrector.
    """
    g = s.grid
    u = s.u.arrays
    b = s.b.arrays
    if family == "I":
        if reference is None:
            raise PreconditionError("the I budget needs the reference state without magnetic diffusion")
        ur = reference.u.arrays
        br = reference.b.arrays
        zero = np.zeros_like(u[0])
        if cs is not None:
            c = cs.sample(g, s.t)
            bB = (c[2], c[3])
            bB_t = cs.sample(g, s.t, dt=1)[2:]
            bB_lap = tuple(a + b_ for a, b_ in zip(cs.sample(g, s.t, dx=2)[2:], cs.sample(g, s.t, dz=2)[2:]))
        else:
            bB = bB_t = bB_lap = (zero, zero)
        uR = (u[0] - ur[0], u[1] - ur[1])
        q1, q3 = project(br[0] + bB[0], br[1] + bB[1], g, eps2 > 0)
        bR = (b[0] - q1, b[1] - q3)
        lap_ref = tuple(d2x(a, g) + d2z(a, g) for a in br)
        terms = [
            _pressure_term(s, uR, reference.p.values),
            # the time derivative of the corrector moves to the right with a minus sign
            -_dot(bB_t, bR, g),
            -_skew_dot(u, uR, uR, g) - _skew_dot(u, bR, bR, g),
            _dot(_adv(br, bB, g), uR, g) - _dot(_adv(ur, bB, g), bR, g),
            _dot(_adv(bB, bB, g), uR, g),
            -_dot(_adv(uR, bB, g), bR, g) + _dot(_adv(bR, bB, g), uR, g),
            _dot(_adv(bB, br, g), uR, g) + _dot(_adv(bB, ur, g), bR, g),
            (-_dot(_adv(uR, ur, g), uR, g) - _dot(_adv(uR, br, g), bR, g)
             + _dot(_adv(bR, br, g), uR, g) + _dot(_adv(bR, ur, g), bR, g)),
            _skew_dot(b, bR, uR, g) + _skew_dot(b, uR, bR, g),
            eps2 * _dot(lap_ref, bR, g),
            eps2 * _dot(bB_lap, bR, g),
        ]
        return BudgetReport("I", {f"I{i + 1}": float(v) for i, v in enumerate(terms)}, s.t)

    if ideal is None:
        raise PreconditionError(f"the {family} budget needs the ideal state")
    if family not in ("J", "K"):
        raise ConfigurationError(f"budget family must be J, K or I, got {family!r}")
    i1, i3, j1, j3 = ideal.sample(g)
    u0, b0 = (i1, i3), (j1, j3)
    zero = np.zeros_like(i1)
    if cs is not None:
        c = cs.sample(g, s.t)
        uB, bB = (c[0], c[1]), (c[2], c[3])
        czz = cs.sample(g, s.t, dz=2)
        uB_zz, bB_zz = (czz[0], czz[1]), (czz[2], czz[3])
    else:
        uB = bB = uB_zz = bB_zz = (zero, zero)
    uR1, uR3, bR1, bR3 = remainder(s, ideal, cs, eps2 > 0)
    uR, bR = (uR1, uR3), (bR1, bR3)
    t3 = -_skew_dot(u, uR, uR, g) - _skew_dot(u, bR, bR, g)
    t9 = _skew_dot(b, bR, uR, g) + _skew_dot(b, uR, bR, g)
    t6 = (-_dot(_adv(uR, uB, g), uR, g) - _dot(_adv(uR, bB, g), bR, g)
          + _dot(_adv(bR, bB, g), uR, g) + _dot(_adv(bR, uB, g), bR, g))
    t8 = (-_dot(_adv(uR, u0, g), uR, g) - _dot(_adv(uR, b0, g), bR, g)
          + _dot(_adv(bR, b0, g), uR, g) + _dot(_adv(bR, u0, g), bR, g))
    u0_zz, b0_zz = ideal.sample(g, dz=2)[:2], ideal.sample(g, dz=2)[2:]
    t11 = eps1 * _dot(u0_zz, uR, g) + eps2 * _dot(b0_zz, bR, g)
    j1 = _pressure_term(s, uR)
    if family == "K":
        if eps is None:
            raise PreconditionError("the K budget needs eps")
        k7 = (eps1 - eps) * _dot(uB_zz, uR, g) + (eps2 - eps) * _dot(bB_zz, bR, g)
        terms = [j1, t3, t6, t8, t9, t11, k7]
        return BudgetReport("K", {f"K{i + 1}": float(v) for i, v in enumerate(terms)}, s.t)
    if cs is not None:
        ct = cs.sample(g, s.t, dt=1)
        uB_t, bB_t = (ct[0], ct[1]), (ct[2], ct[3])
        cxx = cs.sample(g, s.t, dx=2)
        uB_xx, bB_xx = (cxx[0], cxx[1]), (cxx[2], cxx[3])
    else:
        uB_t = bB_t = uB_xx = bB_xx = (zero, zero)
    ix = ideal.sample(g, dx=2)
    u0_xx, b0_xx = ix[:2], ix[2:]
    terms = [
        j1,
        -_dot(uB_t, uR, g) - _dot(bB_t, bR, g),
        t3,
        (-_dot(_adv(u0, uB, g), uR, g) - _dot(_adv(u0, bB, g), bR, g)
         + _dot(_adv(b0, bB, g), uR, g) + _dot(_adv(b0, uB, g), bR, g)),
        (-_dot(_adv(uB, uB, g), uR, g) - _dot(_adv(uB, bB, g), bR, g)
         + _dot(_adv(bB, bB, g), uR, g) + _dot(_adv(bB, uB, g), bR, g)),
        t6,
        (-_dot(_adv(uB, u0, g), uR, g) - _dot(_adv(uB, b0, g), bR, g)
         + _dot(_adv(bB, b0, g), uR, g) + _dot(_adv(bB, u0, g), bR, g)),
        t8,
        t9,
        eps1 * _dot(uB_zz, uR, g) + eps2 * _dot(bB_zz, bR, g),
        t11,
        eps1 * _dot(uB_xx, uR, g) + eps2 * _dot(bB_xx, bR, g),
        eps1 * _dot(u0_xx, uR, g) + eps2 * _dot(b0_xx, bR, g),
    ]
    return BudgetReport("J", {f"J{i + 1}": float(v) for i, v in enumerate(terms)}, s.t)


def grad_sup(ideal: IdealState, grid: GridSpec) -> float:
    """``max(‖∇u⁰‖∞, ‖∇b⁰‖∞)`` with the pointwise Frobenius norm."""
    dx = ideal.sample(grid, dx=1)
    dz = ideal.sample(grid, dz=1)
    gu = np.sqrt(dx[0] ** 2 + dx[1] ** 2 + dz[0] ** 2 + dz[1] ** 2)
    gb = np.sqrt(dx[2] ** 2 + dx[3] ** 2 + dz[2] ** 2 + dz[3] ** 2)
    return float(max(gu.max(), gb.max()))


@dataclass
class EnvelopeCheck:
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    C: float
    delta: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs))


def elsasser_envelope(t: Sequence[float], w_sq: Sequence[float], w_grad_int: Sequence[float],
                      rem_grad_int: Sequence[float], eps: float, eps1: float, eps2: float,
                      kappa: float, delta: float = ENVELOPE_DELTA, C: float | None = None,
                      slack: float = 1.05) -> EnvelopeCheck:
    """Compare the Elsässer remainder with its energy envelope.

    ``w_sq`` is ``‖w(t)‖²``; ``w_grad_int`` and ``rem_grad_int`` are the time
    integrals of ``‖∇w‖²`` and ``‖∇u_R‖² + ‖∇b_R‖²``. When ``C`` is not given
    it is calibrated from the initial value, ``C = slack·‖w(0)‖²/eps^kappa``.
    """
    t = np.asarray(t, float)
    w_sq = np.asarray(w_sq, float)
    lhs = w_sq + (1 - delta) * (eps1 + eps2) * np.asarray(w_grad_int, float)
    mix = (eps1 - eps2) ** 2 / (4 * delta * (eps1 + eps2))
    if C is None:
        C = slack * w_sq[0] / eps**kappa
    rhs = (C * eps**kappa + mix * np.asarray(rem_grad_int, float)
           + C * mix / math.sqrt(eps))
    return EnvelopeCheck(t, lhs, rhs, float(C), delta)


# --------------------------------------------------------------------------
# inequality probes


def anisotropic_linf_check(f: ScalarField, tol: float = 1e-12) -> tuple[float, float]:
    """``(‖f‖∞, ‖f‖^½‖∂x f‖^½ + ‖f‖^½‖∂x∂z f‖^½)`` for a field vanishing on the walls."""
    g = f.grid
    v = f.values
    if max(np.abs(v[:, 0]).max(), np.abs(v[:, -1]).max()) > tol:
        raise PreconditionError("anisotropic_linf_check needs a field vanishing on both walls")

    def l2(a):
        return math.sqrt(integrate(a * a, g))

    fx = ddx(v, g)
    n0 = l2(v)
    rhs = math.sqrt(n0 * l2(fx)) + math.sqrt(n0 * l2(ddz(fx, g)))
    return float(np.abs(v).max()), rhs


def calibrate_constant(pairs: Sequence[tuple[float, float]], margin: float = 2.0) -> float:
    """Smallest ``C`` with ``lhs <= C·rhs`` on the pairs, times ``margin``."""
    ratios = [l / r for l, r in pairs if r > 0]
    return margin * max(ratios)


# --------------------------------------------------------------------------
# rate studies


def default_grid() -> GridSpec:
    return build_grid(96, 257, 1.0, 3.0)


@dataclass
class StudyResult:
    fit: RateFit
    rows: list[dict]
    label: str

    def summary(self) -> dict:
        return self.fit.summary(self.label)


def _resolve_grid(policy, eps: float) -> GridSpec:
    if policy is None:
        return default_grid()
    if isinstance(policy, GridSpec):
        return policy
    return policy(eps)


def _corrector_mode(state: IdealState, mode: str) -> str:
    if mode != "auto":
        return mode
    const = all(_is_constant(state.trace(n, w)) for n in ("u1", "b1") for w in (0, 1))
    return "prandtl_heat" if const else "exact_exponential"


def inviscid_case(family: EpsilonFamily, eps: float, state: IdealState, T: float,
                  grid: GridSpec, dt: float, cadence: int = 20, seed: int = 0,
                  mode: str = "auto", s_shift: float = 1.0) -> dict:
    """One member of the inviscid-limit sweep; returns its CSV row."""
    e1, e2 = family(eps)
    mode = _corrector_mode(state, mode)
    cs = None
    if state.kind != "well_prepared":
        cs = build_correctors(state, CorrectorParams(eps, eps, s_shift, mode))
    s0 = init_state(state, cs, {"kappa": family.kappa, "seed": seed}, grid, eps)
    cfg = SolverConfig(grid=grid, eps1=e1, eps2=e2, dt=dt)
    res = run(s0, cfg, T, observers=[lambda st: error_norms(st, state, cs)], cadence=cadence)
    obs = [o[0] for o in res.observations]
    return {
        "eps": eps, "eps1": e1, "eps2": e2,
        "raw_l2_sup": max(o["raw_l2"] for o in obs),
        "corrected_l2_sup": max(o["corrected_l2"] for o in obs),
        "elsasser_l2_sup": max(o["elsasser_l2"] for o in obs),
        "corrected_linf_sup": max(o["corrected_linf"] for o in obs),
        "predicted_bound": math.sqrt(inviscid_bound_sq(eps, e1, e2, family.kappa)),
    }


def _map(fn, args: list[tuple], jobs: int) -> list:
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as ex:
        futs = [ex.submit(fn, *a) for a in args]
        return [f.result() for f in futs]


def run_inviscid_limit_study(family: EpsilonFamily, eps_list: Sequence[float],
                             state: IdealState, T: float, grid_policy=None, *,
                             dt: float = 2.5e-3, cadence: int = 20, seed: int = 0,
                             mode: str = "auto", jobs: int = 1) -> StudyResult:
    """Sweep eps and fit the L² rate of the sup-in-time errors."""
    if state.kind not in ("elsasser_steady", "shear_flow", "well_prepared") or state.sign == 0:
        raise PreconditionError("the inviscid study needs a state with b0 = ±u0")
    report = check_assumption_2_1(family, assumption_grid(eps_list))
    if not report.passed:
        failed = [k for k, v in report.verdicts.items() if not v]
        raise ConfigurationError(f"parameter law violates the admissibility assumption: {failed}")
    eps_sorted = sorted(eps_list, reverse=True)
    args = [(family, e, state, T, _resolve_grid(grid_policy, e), dt, cadence, seed, mode)
            for e in eps_sorted]
    rows = _map(inviscid_case, args, jobs)
    pred = predicted_slope_from(lambda e: inviscid_bound_sq(e, *family(e), family.kappa), eps_sorted)
    fit = fit_rate([(r["eps"], r["raw_l2_sup"]) for r in rows], pred)
    return StudyResult(fit, rows, f"inviscid-{family.law}")


def _diffusion_reference(state: IdealState, eps1: float, T: float, grid: GridSpec,
                         dt: float, cadence: int):
    s0 = init_state(state, None, None, grid, 1.0, magnetic_pinned=False)
    cfg = SolverConfig(grid=grid, eps1=eps1, eps2=0.0, dt=dt)
    return run_reference_viscous(s0, cfg, T, cadence)


def diffusion_case(eps1: float, eps2: float, theta: float, tau: float, state: IdealState,
                   T: float, grid: GridSpec, dt: float, cadence: int, seed: int,
                   kappa: float, ref_states: list[MhdState] | None = None) -> dict:
    """One member of the magnetic-diffusion sweep; returns its CSV row."""
    if ref_states is None:
        ref_states = _diffusion_reference(state, eps1, T, grid, dt, cadence).states
    nu2 = nu2_star_diffusion_limit(eps2, theta, tau)
    cs = build_correctors(state, CorrectorParams(nu2, nu2, 1.0, "exact_exponential"),
                          velocity=False)
    s0 = init_state(state, cs, {"kappa": kappa, "seed": seed}, grid, eps2)
    cfg = SolverConfig(grid=grid, eps1=eps1, eps2=eps2, dt=dt)
    res = run(s0, cfg, T, cadence=cadence, keep_states=True)
    errs = []
    for s, r in zip(res.states, ref_states):
        d = [a - b for a, b in zip((*s.u.arrays, *s.b.arrays), (*r.u.arrays, *r.b.arrays))]
        errs.append(math.sqrt(integrate(sum(x**2 for x in d), grid)))
    return {"eps2": eps2, "nu2_star": nu2, "err_l2_sup": max(errs),
            "predicted_bound": math.sqrt(diffusion_bound_sq(eps2, tau))}


def run_diffusion_limit_study(eps1_fixed: float, eps2_list: Sequence[float], theta: float,
                              tau: float, state: IdealState, T: float, grid_policy=None, *,
                              dt: float = 2.5e-3, cadence: int = 20, seed: int = 0,
                              kappa: float = 4.0, jobs: int = 1) -> StudyResult:
    """Sweep eps2 at fixed viscosity against the run without magnetic diffusion."""
    if not eps1_fixed > 0:
        raise PreconditionError("eps1_fixed must be positive")
    if not 0.0 <= tau < 1.0:
        raise DomainError(f"tau = {tau} outside [0, 1) (the rate holds for any given 0 <= tau < 1)")
    if not theta > 0:
        raise DomainError("theta must be positive")
    eps_sorted = sorted(eps2_list, reverse=True)
    grids = {e: _resolve_grid(grid_policy, e) for e in eps_sorted}
    refs = {}
    for g in set(grids.values()):
        refs[g] = _diffusion_reference(state, eps1_fixed, T, g, dt, cadence).states
    args = [(eps1_fixed, e, theta, tau, state, T, grids[e], dt, cadence, seed, kappa, refs[grids[e]])
            for e in eps_sorted]
    rows = _map(diffusion_case, args, jobs)
    fit = fit_rate([(r["eps2"], r["err_l2_sup"]) for r in rows], (1.0 - tau) / 4.0)
    return StudyResult(fit, rows, "diffusion")
