"""Experiment orchestration and the ``mhdlayer`` command line."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import shutil
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import asymptotics as asy
from . import verification as ver
from .config import ExperimentConfig, StateConfig, parse_config
from .correctors import CorrectorParams, build_correctors
from .errors import ConfigurationError, MhdLayerError
from .fields import GridSpec, build_grid
from .ideal import IdealState, make_state
from .solver import SolverConfig, init_state, run

INVISCID_COLUMNS = ("eps", "eps1", "eps2", "raw_l2_sup", "corrected_l2_sup",
                    "elsasser_l2_sup", "predicted_bound", "corrected_linf_sup")
DIFFUSION_COLUMNS = ("eps2", "nu2_star", "err_l2_sup", "predicted_bound")
DIAG_COLUMNS = ("t", "energy", "dissipation", "div_u_max", "div_b_max")


@dataclass
class RunManifest:
    config: dict
    version: str
    wall_clock: float
    artifacts: dict[str, str] = field(default_factory=dict)
    verdicts: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return {"config": self.config, "version": self.version, "wall_clock_s": self.wall_clock,
                "artifacts": self.artifacts, "verdicts": self.verdicts, "passed": self.passed}


# --------------------------------------------------------------------------
# serialization


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if v is None:
        return ""
    return str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


class ArtifactWriter:
    """Single writer for one run directory; remembers what it wrote."""

    def __init__(self, out: Path):
        self.out = out
        self.created_dir = not out.exists()
        out.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def write(self, name: str, data: str | bytes) -> Path:
        p = self.out / name
        if isinstance(data, str):
            data = data.encode()
        p.write_bytes(data)
        self.files.append(p)
        return p

    def hashes(self) -> dict[str, str]:
        return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in self.files}

    def discard(self) -> None:
        for p in self.files:
            p.unlink(missing_ok=True)
        (self.out / "manifest.json").unlink(missing_ok=True)
        if self.created_dir:
            shutil.rmtree(self.out, ignore_errors=True)


def write_checkpoint(writer: ArtifactWriter, name: str, s, cfg: ExperimentConfig) -> None:
    """Flat float64 arrays ``u1, u3, b1, b3, p`` plus a JSON sidecar."""
    arrays = (*s.u.arrays, *s.b.arrays, s.p.values)
    blob = np.concatenate([np.ascontiguousarray(a, dtype="<f8").ravel() for a in arrays])
    writer.write(f"{name}.bin", blob.tobytes())
    g = s.grid
    side = {"grid": {"nx": g.nx, "nz": g.nz, "h": g.h, "stretch": g.stretch},
            "fields": ["u1", "u3", "b1", "b3", "p"], "dtype": "<f8", "order": "C",
            "shape": [g.nx, g.nz], "time": s.t, "config": cfg.to_dict()}
    writer.write(f"{name}.json", json_text(side))


def read_checkpoint(path: str | Path):
    """Inverse of :func:`write_checkpoint`: ``(grid, arrays dict, time)``."""
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    g = side["grid"]
    grid = build_grid(g["nx"], g["nz"], g["h"], g["stretch"])
    data = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    shape = tuple(side["shape"])
    n = shape[0] * shape[1]
    arrays = {k: data[i * n:(i + 1) * n].reshape(shape) for i, k in enumerate(side["fields"])}
    return grid, arrays, side["time"]


# --------------------------------------------------------------------------
# config helpers


def build_state(sc: StateConfig, h: float) -> IdealState:
    return make_state(sc.kind, h, u1_profile=sc.u1_profile, sign=sc.sign, U=sc.U, B=sc.B)


def build_family(cfg: ExperimentConfig) -> asy.EpsilonFamily:
    f = cfg.family
    table = [tuple(r) for r in f.table] if f.table else None
    return asy.EpsilonFamily(f.law, f.kappa, f.alpha, table)


def _grid(cfg: ExperimentConfig) -> GridSpec:
    g = cfg.grid
    return build_grid(g.nx, g.nz, g.h, g.stretch)


def _eps_list(cfg: ExperimentConfig, default) -> list[float]:
    return list(cfg.eps) if cfg.eps else list(default)


# --------------------------------------------------------------------------
# experiments; each returns its verdict dictionary


def _exp_correctors(cfg, w, jobs):
    state = build_state(cfg.state, cfg.grid.h)
    nu = cfg.eps[0] if cfg.eps else 1e-2
    suite = ver.corrector_suite(state, nu)
    rows = [{"piece": k, "n": n, "div_max": v}
            for k, vals in suite["div_errors"].items()
            for n, v in zip((128, 256, 512), vals)]
    w.write("divergence.csv", csv_text(("piece", "n", "div_max"), rows))
    prandtl = ver.prandtl_suite()
    w.write("correctors.json", json_text({k: v for k, v in suite.items()} | {"prandtl": prandtl}))
    return {**{f"correctors.{k}": v for k, v in suite["verdicts"].items()},
            **{f"prandtl.{k}": v for k, v in prandtl["verdicts"].items()}}


def _exp_lemma31(cfg, w, jobs):
    state = build_state(cfg.state, cfg.grid.h)
    nus = cfg.nu or [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    suite = ver.lemma31_suite(state, tuple(nus))
    w.write("lemma31.csv", csv_text(("nu", "norm_name", "value", "fitted_slope"), suite["rows"]))
    w.write("slopes.json", json_text({"slopes": suite["slopes"], "expected": suite["expected"],
                                      "verdicts": suite["verdicts"]}))
    return suite["verdicts"]


def _simulation_eps(cfg) -> tuple[float, float, float]:
    s = cfg.solver
    if s.eps1 is not None and s.eps2 is not None:
        eps = cfg.eps[0] if cfg.eps else max(s.eps1, s.eps2, 1e-300)
        return eps, s.eps1, s.eps2
    if not cfg.eps:
        raise ConfigurationError("$.solver: simulate needs eps1/eps2 or an eps value")
    eps = cfg.eps[0]
    e1, e2 = build_family(cfg)(eps)
    return eps, e1, e2


def _exp_simulate(cfg, w, jobs):
    grid = _grid(cfg)
    state = build_state(cfg.state, grid.h)
    eps, e1, e2 = _simulation_eps(cfg)
    cs = None
    if state.kind != "well_prepared" and e1 > 0:
        mode = asy._corrector_mode(state, cfg.correctors.mode)
        cs = build_correctors(state, CorrectorParams(e1, max(e2, 0.0) or e1,
                                                     cfg.correctors.s_shift, mode),
                              magnetic=e2 > 0)
    s0 = init_state(state, cs, {"kappa": cfg.family.kappa, "seed": cfg.seed}, grid, eps,
                    magnetic_pinned=e2 > 0)
    scfg = SolverConfig(grid=grid, eps1=e1, eps2=e2, dt=cfg.solver.dt,
                        cfl_limit=cfg.solver.cfl_limit)
    res = run(s0, scfg, cfg.solver.T, cadence=cfg.snapshot_cadence)
    diag = [{c: getattr(d, c) for c in DIAG_COLUMNS} for d in res.diagnostics]
    w.write("diagnostics.csv", csv_text(DIAG_COLUMNS, diag))
    write_checkpoint(w, "final", res.final, cfg)
    div = max(max(d["div_u_max"], d["div_b_max"]) for d in diag)
    verdicts = {"divergence": div <= 1e-10}
    if e1 > 0 and e2 > 0 and cfg.solver.T > 0:
        e = np.array([d["energy"] for d in diag])
        verdicts["energy_non_increasing"] = bool(np.all(np.diff(e) <= 0.0))
    return verdicts


def _exp_inviscid(cfg, w, jobs):
    grid = _grid(cfg)
    fam = build_family(cfg)
    state = build_state(cfg.state, grid.h)
    eps = _eps_list(cfg, (4e-3, 2e-3, 1e-3, 5e-4))
    study = asy.run_inviscid_limit_study(fam, eps, state, cfg.solver.T, grid,
                                         dt=cfg.solver.dt, cadence=cfg.snapshot_cadence,
                                         seed=cfg.seed, mode=cfg.correctors.mode, jobs=jobs)
    w.write("rates.csv", csv_text(INVISCID_COLUMNS, study.rows))
    linf = [r["corrected_linf_sup"] for r in study.rows]
    summary = study.summary()
    summary["corrected_linf_monotone"] = all(a > b for a, b in zip(linf, linf[1:]))
    w.write("rates.json", json_text(summary))
    return {"rate": study.fit.passed}


def _exp_diffusion(cfg, w, jobs):
    grid = _grid(cfg)
    c = cfg.correctors
    eps2 = _eps_list(cfg, (4e-3, 2e-3, 1e-3, 5e-4))
    kw = dict(dt=cfg.solver.dt, cadence=cfg.snapshot_cadence, seed=cfg.seed,
              kappa=cfg.family.kappa, jobs=jobs)
    state = build_state(cfg.state, grid.h)
    study = asy.run_diffusion_limit_study(cfg.eps1_fixed, eps2, c.theta, c.tau, state,
                                          cfg.solver.T, grid, **kw)
    w.write("diffusion.csv", csv_text(DIFFUSION_COLUMNS, study.rows))
    w.write("diffusion.json", json_text(study.summary()))
    verdicts = {"rate": study.fit.passed}
    if cfg.control_state is not None:
        ctrl = asy.run_diffusion_limit_study(cfg.eps1_fixed, eps2, c.theta, c.tau,
                                             build_state(cfg.control_state, grid.h),
                                             cfg.solver.T, grid, **kw)
        ctrl.fit = replace(ctrl.fit, predicted_slope=0.5, margin=0.0)
        w.write("control.csv", csv_text(DIFFUSION_COLUMNS, ctrl.rows))
        w.write("control.json", json_text(ctrl.fit.summary("diffusion-zero-trace")))
        verdicts["control_rate"] = ctrl.fit.passed
    return verdicts


def _exp_budget(cfg, w, jobs):
    grid = _grid(cfg)
    state = build_state(cfg.state, grid.h)
    eps = cfg.eps[0] if cfg.eps else 1e-3
    suite = ver.budget_suite(eps, cfg.solver.T, grid, cfg.solver.dt, kappa=cfg.family.kappa,
                             seed=cfg.seed, state=state, family=cfg.budget_family)
    w.write("budget.csv", csv_text(("t", "term_name", "value"), suite["rows"]))
    env = suite["envelope"]
    w.write("envelope.csv", csv_text(("t", "lhs", "rhs"), [
        {"t": a, "lhs": b, "rhs": c} for a, b, c in zip(env.t, env.lhs, env.rhs)]))
    w.write("budget.json", json_text({"worst": suite["worst"], "C": env.C, "delta": env.delta,
                                      "verdicts": suite["verdicts"]}))
    return suite["verdicts"]


def _exp_betas(cfg, w, jobs):
    fam = build_family(cfg)
    eps = _eps_list(cfg, (1e-2, 1e-3, 1e-4))
    eps_max = max(eps)
    rows, report = [], {}
    verdicts = {}
    for e in eps:
        br = asy.beta_report(fam, e, eps_max)
        e1, e2 = fam(e)
        for name, v in br.as_dict().items():
            rows.append({"eps": e, "name": name, "value": v})
        rows.append({"eps": e, "name": "linf_bound", "value": asy.predict_linf_bound(br, e1, e2)})
        report[_fmt(e)] = {"betas": br.as_dict(), "side_conditions": br.side_conditions,
                           "footnotes": br.footnotes}
        verdicts[f"side_conditions@{_fmt(e)}"] = all(ok for _, _, ok in br.side_conditions)
    w.write("betas.csv", csv_text(("eps", "name", "value"), rows))
    w.write("betas.json", json_text(report))
    return verdicts


DISPATCH = {
    "correctors": _exp_correctors,
    "lemma31": _exp_lemma31,
    "simulate": _exp_simulate,
    "inviscid-limit": _exp_inviscid,
    "diffusion-limit": _exp_diffusion,
    "budget": _exp_budget,
    "betas": _exp_betas,
}


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> RunManifest:
    """Run one configured experiment and write its artifacts plus ``manifest.json``."""
    t0 = time.perf_counter()
    w = ArtifactWriter(Path(cfg.output_dir))
    try:
        verdicts = DISPATCH[cfg.experiment](cfg, w, jobs)
        man = RunManifest(cfg.to_dict(), __version__, 0.0, w.hashes(),
                          {k: bool(v) for k, v in verdicts.items()})
        man.wall_clock = time.perf_counter() - t0
        (w.out / "manifest.json").write_text(json_text(man.to_dict()))
        return man
    except BaseException as exc:
        w.discard()
        if isinstance(exc, MhdLayerError):
            raise type(exc)(f"[{cfg.experiment}] {exc}") from exc
        raise


# --------------------------------------------------------------------------
# command line


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mhdlayer", description=__doc__)
    p.add_argument("experiment", choices=sorted(DISPATCH))
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="random seed (overrides seed)")
    p.add_argument("--jobs", type=int, default=1, help="parallel jobs for parameter sweeps")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    jobs = args.jobs
    env = os.environ.get("MHDLAYER_JOBS")
    try:
        if env:
            try:
                jobs = int(env)
            except ValueError:
                raise ConfigurationError(f"MHDLAYER_JOBS must be an integer, got {env!r}") from None
        if jobs < 1:
            raise ConfigurationError("--jobs must be >= 1")
        cfg = parse_config(Path(args.config).read_text())
        if cfg.experiment != args.experiment:
            raise ConfigurationError(
                f"$.experiment: config names {cfg.experiment!r} but the command is {args.experiment!r}")
        if args.out is not None:
            cfg = replace(cfg, output_dir=args.out)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        man = run_experiment(cfg, jobs)
    except (MhdLayerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name, ok in man.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if man.passed else 2


if __name__ == "__main__":
    sys.exit(main())
