"""Experiment configuration: strict JSON parsing with defaults.

Unknown or duplicate keys are rejected, as are values of the wrong type;
errors carry the JSON path of the offending entry.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from .errors import ConfigurationError, DomainError

EXPERIMENTS = ("correctors", "lemma31", "simulate", "inviscid-limit",
               "diffusion-limit", "budget", "betas")


@dataclass
class GridConfig:
    nx: int = 96
    nz: int = 257
    h: float = 1.0
    stretch: float = 3.0


@dataclass
class StateConfig:
    kind: str = "shear_flow"
    u1_profile: str | None = None
    sign: int = 1
    U: str | None = "1 + cos(pi*z/h)/2"
    B: str | None = "1 + cos(pi*z/h)/2"


@dataclass
class FamilyConfig:
    law: str = "equal"
    kappa: float = 4.0
    alpha: float | None = None
    table: list[list[float]] | None = None


@dataclass
class SolverSection:
    eps1: float | None = None
    eps2: float | None = None
    dt: float = 2.5e-3
    cfl_limit: float = 0.5
    T: float = 0.25


@dataclass
class CorrectorSection:
    mode: str = "auto"
    s_shift: float = 1.0
    theta: float = 0.1
    tau: float = 0.0


@dataclass
class ExperimentConfig:
    experiment: str
    grid: GridConfig = field(default_factory=GridConfig)
    state: StateConfig = field(default_factory=StateConfig)
    family: FamilyConfig = field(default_factory=FamilyConfig)
    solver: SolverSection = field(default_factory=SolverSection)
    correctors: CorrectorSection = field(default_factory=CorrectorSection)
    eps: list[float] | None = None
    eps1_fixed: float = 1e-2
    nu: list[float] | None = None
    budget_family: str = "J"
    control_state: StateConfig | None = None
    output_dir: str = "out"
    seed: int = 0
    snapshot_cadence: int = 20

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_SECTIONS = {"grid": GridConfig, "state": StateConfig, "family": FamilyConfig,
             "solver": SolverSection, "correctors": CorrectorSection,
             "control_state": StateConfig}

_TYPES: dict[str, tuple] = {
    "nx": (int,), "nz": (int,), "h": (float,), "stretch": (float,),
    "kind": (str,), "u1_profile": (str, None), "sign": (int,), "U": (str, None), "B": (str, None),
    "law": (str,), "kappa": (float,), "alpha": (float, None), "table": ("table", None),
    "eps1": (float, None), "eps2": (float, None), "dt": (float,), "cfl_limit": (float,), "T": (float,),
    "mode": (str,), "s_shift": (float,), "theta": (float,), "tau": (float,),
    "experiment": (str,), "eps": ("floats", None), "eps1_fixed": (float,), "nu": ("floats", None),
    "budget_family": (str,), "output_dir": (str,), "seed": (int,), "snapshot_cadence": (int,),
}


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigurationError(f"duplicate key {k!r} in configuration")
        out[k] = v
    return out


def _check_value(name: str, value: Any, path: str) -> Any:
    allowed = _TYPES[name]
    if value is None:
        if None in allowed:
            return None
        raise ConfigurationError(f"{path}: null is not allowed")
    for kind in allowed:
        if kind is int and isinstance(value, int) and not isinstance(value, bool):
            return value
        if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if kind is str and isinstance(value, str):
            return value
        if kind == "floats" and isinstance(value, list) and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            return [float(v) for v in value]
        if kind == "table" and isinstance(value, list) and all(
                isinstance(r, list) and len(r) == 3 for r in value):
            return [[float(v) for v in r] for r in value]
    raise ConfigurationError(f"{path}: value {value!r} has the wrong type")


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected an object")
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigurationError(f"{path}.{key}: unknown key")
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}"
        if key in _SECTIONS:
            kwargs[key] = None if value is None and key == "control_state" else _build(_SECTIONS[key], value, sub)
        else:
            kwargs[key] = _check_value(key, value, sub)
    return cls(**kwargs)


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigurationError(f"$.experiment: must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    g = cfg.grid
    if g.nx < 4 or g.nx % 2:
        raise ConfigurationError("$.grid.nx: must be an even integer >= 4")
    if g.nz < 5:
        raise ConfigurationError("$.grid.nz: must be >= 5")
    if g.h <= 0:
        raise ConfigurationError("$.grid.h: must be positive")
    if g.stretch < 0:
        raise ConfigurationError("$.grid.stretch: must be non-negative")
    if cfg.family.law not in ("equal", "shifted", "custom"):
        raise ConfigurationError("$.family.law: must be equal, shifted or custom")
    if cfg.family.law == "shifted" and cfg.family.alpha is None:
        raise ConfigurationError("$.family.alpha: required for the shifted law")
    if cfg.family.law == "custom" and not cfg.family.table:
        raise ConfigurationError("$.family.table: required for the custom law")
    s = cfg.solver
    if s.dt <= 0:
        raise ConfigurationError("$.solver.dt: must be positive")
    if s.T < 0:
        raise ConfigurationError("$.solver.T: must be non-negative")
    for name in ("eps1", "eps2"):
        v = getattr(s, name)
        if v is not None and v < 0:
            raise ConfigurationError(f"$.solver.{name}: must be non-negative")
    c = cfg.correctors
    if c.mode not in ("auto", "exact_exponential", "prandtl_heat"):
        raise ConfigurationError("$.correctors.mode: must be auto, exact_exponential or prandtl_heat")
    if c.s_shift <= 0:
        raise ConfigurationError("$.correctors.s_shift: must be positive")
    if c.theta <= 0:
        raise ConfigurationError("$.correctors.theta: must be positive")
    if not 0.0 <= c.tau < 1.0:
        raise DomainError(f"$.correctors.tau = {c.tau}: the magnetic diffusion rate holds "
                          "for any given 0 <= tau < 1")
    for name in ("eps", "nu"):
        v = getattr(cfg, name)
        if v is not None and (not v or min(v) <= 0):
            raise ConfigurationError(f"$.{name}: must be a non-empty list of positive values")
    if cfg.eps1_fixed <= 0:
        raise ConfigurationError("$.eps1_fixed: must be positive")
    if cfg.budget_family not in ("J", "K", "I"):
        raise ConfigurationError("$.budget_family: must be J, K or I")
    if cfg.snapshot_cadence < 1:
        raise ConfigurationError("$.snapshot_cadence: must be >= 1")
    for st in (cfg.state, cfg.control_state):
        if st is None:
            continue
        if st.kind not in ("elsasser_steady", "shear_flow", "well_prepared"):
            raise ConfigurationError(f"$.state.kind: unknown state family {st.kind!r}")
        if st.kind == "shear_flow" and (st.U is None or st.B is None):
            raise ConfigurationError("$.state: shear_flow needs U and B")
        if st.kind != "shear_flow" and st.u1_profile is None:
            raise ConfigurationError("$.state.u1_profile: required for this state family")


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("$: configuration must be a JSON object")
    if "experiment" not in data:
        raise ConfigurationError("$.experiment: missing")
    cfg = _build(ExperimentConfig, data, "$")
    _validate(cfg)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON configuration document."""
    try:
        data = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON: {exc}") from None
    return from_dict(data)
