"""Batch command line front-end.

Exit codes: 0 all requested checks pass, 1 numerical failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .algebroid import LieAlgebroid, builtin, check_structure_equations, from_json, sample_points
from .dynamics import IntegrationError, LagrangianSystem, el_residual, energy, integrate
from .expr import ExprError
from .models import (
    HeavyTopParams,
    abnormal_check,
    heavy_top_invariants,
    heavy_top_system,
    normal_multiplier_gap,
    normal_multiplier_gap_grid,
    rigid_body_system,
    free_particle_system,
    free_rigid_body_demo,
)
from .morphism import AlgebroidMorphism, admissibility_residual_m, euler_to_so3, morphism_residual_m
from .paths import lift_base, path_to_csv
from .variation import homotopy_sheet, morphism_residual, random_section, stationarity_report

log = logging.getLogger("algebroid_mech")

DEFAULT_TOL = {
    "structure": 1e-10,
    "morphism": 1e-8,
    "stationarity": 1e-5,
    "homotopy": 5e-4,
    "reduction": 1e-4,
    "abnormal": 1e-6,
    "energy": 1e-6,
    "route": 1e-4,
}

HEAVY_TOP_X0 = [0.3, 0.4, float(np.sqrt(0.75))]
HEAVY_TOP_Y0 = [0.7, -0.4, 1.3]


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    raw: dict[str, Any]
    algebroid: LieAlgebroid
    system: LagrangianSystem | None
    model: str | None
    params: HeavyTopParams | None
    x0: np.ndarray | None
    y0: np.ndarray | None
    t0: float
    t1: float
    N: int
    suites: dict[str, bool]
    tol: dict[str, float]
    seed: int
    out: Path | None
    parallel: bool = False
    extra: dict[str, Any] = field(default_factory=dict)


def _algebroid_from(desc) -> LieAlgebroid:
    if isinstance(desc, str):
        return builtin(desc)
    if isinstance(desc, dict) and "builtin" in desc:
        params = {k: v for k, v in desc.items() if k != "builtin"}
        if "constants" in params:
            params["constants"] = {
                (int(c["alpha"]) - 1, int(c["beta"]) - 1, int(c["gamma"]) - 1): float(c["value"])
                for c in params["constants"]
            }
        return builtin(desc["builtin"], **params)
    if isinstance(desc, dict):
        return from_json(desc)
    raise ConfigError(f"cannot interpret algebroid {desc!r}")


def _vec(value, size: int, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (size,):
        raise ConfigError(f"{what} must have {size} components")
    return arr


def load_config(args: argparse.Namespace) -> RunConfig:
    raw: dict[str, Any] = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    try:
        return _build_config(raw, args)
    except ConfigError:
        raise
    except (ExprError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _build_config(raw: dict[str, Any], args: argparse.Namespace) -> RunConfig:
    model = raw.get("model")
    params = None
    system = None
    if args.builtin:
        A = builtin(args.builtin)
    elif model is not None:
        if model == "heavy_top":
            p = raw.get("params", {})
            params = HeavyTopParams(tuple(p.get("inertia", (1.0, 1.0, 2.0))), tuple(p.get("e", (0.0, 0.0, 1.0))))
            system = heavy_top_system(params)
        elif model == "rigid_body":
            system = rigid_body_system(tuple(raw.get("params", {}).get("inertia", (1.0, 2.0, 3.0))))
        elif model == "free_particle":
            system = free_particle_system(int(raw.get("params", {}).get("n", 2)))
        else:
            raise ConfigError(f"unknown model preset {model!r}")
        A = system.algebroid
    elif "algebroid" in raw:
        A = _algebroid_from(raw["algebroid"])
    else:
        A = builtin("so3_r3")
    if system is None and "lagrangian" in raw:
        system = LagrangianSystem(A, raw["lagrangian"])

    defaults_x0 = HEAVY_TOP_X0 if model == "heavy_top" else None
    defaults_y0 = HEAVY_TOP_Y0 if model == "heavy_top" else None
    x0 = raw.get("x0", defaults_x0)
    y0 = raw.get("y0", defaults_y0)
    if x0 is None and model in ("rigid_body",):
        x0 = [0.0]
    if model == "rigid_body" and y0 is None:
        y0 = [1.0, 1.0, 1.0]
    if model == "free_particle":
        x0 = x0 if x0 is not None else [0.0] * A.n
        y0 = y0 if y0 is not None else [1.0] + [0.0] * (A.m - 1)

    tol = dict(DEFAULT_TOL)
    tol.update({k: float(v) for k, v in raw.get("tol", {}).items()})
    for key in DEFAULT_TOL:
        override = getattr(args, f"tol_{key}", None)
        if override is not None:
            tol[key] = override
    unknown = set(tol) - set(DEFAULT_TOL)
    if unknown:
        raise ConfigError(f"unknown tolerance keys {sorted(unknown)}")

    suites = {"structure": True, "stationarity": True, "homotopy": True, "reduction": False, "multipliers": False}
    suites.update({k: bool(v) for k, v in raw.get("suites", {}).items()})
    N = int(raw.get("N", 2000))
    t0, t1 = float(raw.get("t0", 0.0)), float(raw.get("t1", 5.0))
    if not t0 < t1 or N < 2:
        raise ConfigError("need t0 < t1 and N >= 2")
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    out = args.out or raw.get("out")
    return RunConfig(
        raw=raw,
        algebroid=A,
        system=system,
        model=model,
        params=params,
        x0=None if x0 is None else _vec(x0, A.n, "x0"),
        y0=None if y0 is None else _vec(y0, A.m, "y0"),
        t0=t0,
        t1=t1,
        N=N,
        suites=suites,
        tol=tol,
        seed=seed,
        out=Path(out) if out else None,
        parallel=bool(getattr(args, "parallel", False)),
    )


def _morphism_from(desc: dict[str, Any]) -> AlgebroidMorphism:
    if desc.get("builtin") == "euler_to_so3":
        return euler_to_so3()
    if "builtin" in desc:
        raise ConfigError(f"unknown builtin morphism {desc['builtin']!r}")
    src = _algebroid_from(desc["source"])
    tgt = _algebroid_from(desc["target"])
    return AlgebroidMorphism(src, tgt, desc["phi"], desc["Phi"], name=desc.get("name", "custom"), validate=False)


def _dump(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _emit(cfg: RunConfig | None, name: str, report: dict[str, Any]) -> None:
    text = _dump(report)
    sys.stdout.write(text)
    if cfg is not None and cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        (cfg.out / f"{name}.json").write_text(text, encoding="utf-8")


def _require_system(cfg: RunConfig) -> LagrangianSystem:
    if cfg.system is None:
        raise ConfigError("this command needs a model preset or a 'lagrangian' expression")
    if cfg.x0 is None or cfg.y0 is None:
        raise ConfigError("this command needs initial data x0 and y0")
    return cfg.system


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_check(cfg: RunConfig) -> int:
    A = cfg.algebroid
    pts = sample_points(A.n, int(cfg.raw.get("points", 100)), cfg.seed)
    rep = check_structure_equations(A, pts, cfg.tol["structure"])
    report: dict[str, Any] = {"algebroid": A.name, "structure": rep.to_json(), "seed": cfg.seed}
    ok = rep.passed
    if "morphism" in cfg.raw:
        M = _morphism_from(cfg.raw["morphism"])
        mpts = M.sample(int(cfg.raw.get("points", 100)), cfg.seed)
        adm = admissibility_residual_m(M, mpts)
        br = morphism_residual_m(M, mpts)
        m_ok = adm <= cfg.tol["morphism"] and br.general <= cfg.tol["morphism"]
        report["morphism"] = {
            "name": M.name,
            "admissibility": adm,
            "bracket": br.to_json(),
            "tol": cfg.tol["morphism"],
            "pass": m_ok,
        }
        ok = ok and m_ok
    report["pass"] = ok
    _emit(cfg, "check", report)
    return 0 if ok else 1


def _invariant_columns(cfg: RunConfig, path) -> dict[str, np.ndarray]:
    sys_ = cfg.system
    cols: dict[str, np.ndarray] = {}
    E = energy(sys_, path.xs, path.ys)
    cols["energy"] = E
    cols["energy_drift"] = E - E[0]
    if cfg.model == "heavy_top":
        inv = heavy_top_invariants(cfg.params, path)
        cols["gamma_norm2"] = inv["gamma_norm2"]
        cols["gamma_dot_Iomega"] = inv["gamma_dot_Iomega"]
    elif cfg.model == "rigid_body":
        mom = sys_.gradients(path.xs, path.ys)[2]
        cols["casimir"] = np.einsum("pa,pa->p", mom, mom)
    cols["el_residual"] = el_residual(sys_, path).node_norms
    return cols


def cmd_simulate(cfg: RunConfig) -> int:
    sys_ = _require_system(cfg)
    try:
        path = integrate(sys_, cfg.x0, cfg.y0, cfg.t0, cfg.t1, cfg.N)
    except IntegrationError as exc:
        _emit(cfg, "simulate", {"error": str(exc), "abort_time": exc.t, "pass": False})
        return 1
    cols = _invariant_columns(cfg, path)
    out = cfg.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(path_to_csv(path), encoding="utf-8")
    with open(out / "invariants.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + list(cols))
        for k, t in enumerate(path.times):
            w.writerow([repr(float(t))] + [repr(float(c[k])) for c in cols.values()])
    drift = {
        name: float(np.abs(c - c[0]).max())
        for name, c in cols.items()
        if name not in ("el_residual", "energy_drift")
    }
    ok = drift["energy"] <= cfg.tol["energy"]
    report = {
        "system": sys_.name,
        "N": cfg.N,
        "t0": cfg.t0,
        "t1": cfg.t1,
        "drift": drift,
        "el_residual_max": float(cols["el_residual"].max()),
        "files": ["trajectory.csv", "invariants.csv"],
        "pass": ok,
    }
    _emit(cfg, "simulate", report)
    return 0 if ok else 1


def _perturbed(cfg: RunConfig, path):
    amp = float(cfg.raw.get("perturb", {}).get("amplitude", 0.0))
    if amp == 0.0:
        return path
    tau = (path.times - path.t0) / (path.t1 - path.t0)
    ys = path.ys + amp * np.sin(np.pi * tau)[:, None]
    return lift_base(path.algebroid, path.xs[0], ys, path.t0, path.t1)


def cmd_certify(cfg: RunConfig) -> int:
    sys_ = _require_system(cfg)
    if cfg.N % 2:
        raise ConfigError("certify needs an even N (Simpson quadrature)")
    try:
        path = integrate(sys_, cfg.x0, cfg.y0, cfg.t0, cfg.t1, cfg.N)
    except IntegrationError as exc:
        _emit(cfg, "certify", {"error": f"simulate: {exc}", "pass": False})
        return 1
    path = _perturbed(cfg, path)
    report: dict[str, Any] = {"system": sys_.name, "seed": cfg.seed, "N": cfg.N, "t0": cfg.t0, "t1": cfg.t1}
    ok = True
    if cfg.suites.get("stationarity", True):
        st_cfg = cfg.raw.get("stationarity", {})
        st = stationarity_report(
            sys_,
            path,
            k=int(st_cfg.get("k", 20)),
            seed=cfg.seed,
            tol=cfg.tol["stationarity"],
            ds=float(st_cfg.get("ds", 1e-3)),
            parallel=cfg.parallel,
        )
        report["stationarity"] = st.to_json()
        report["stationary"] = st.verdict == "stationary"
        ok = ok and st.verdict != "non-stationary" and st.max_route_gap <= cfg.tol["route"]
    if cfg.suites.get("homotopy", True):
        h_cfg = cfg.raw.get("homotopy", {})
        rng = np.random.default_rng([cfg.seed, 1])
        sheet = homotopy_sheet(
            sys_.algebroid, path, random_section(path, rng), float(h_cfg.get("s_max", 0.1)), int(h_cfg.get("M", 20))
        )
        res, _ = morphism_residual(sheet)
        boundary = bool(np.all(sheet.b[:, 0] == 0) and np.all(sheet.b[:, -1] == 0))
        h_ok = res <= cfg.tol["homotopy"] and boundary
        report["homotopy"] = {"residual": res, "tol": cfg.tol["homotopy"], "boundary_exact": boundary, "pass": h_ok}
        ok = ok and h_ok
    if cfg.suites.get("reduction", False):
        r_cfg = cfg.raw.get("reduction", {})
        red = free_rigid_body_demo(
            inertia=tuple(r_cfg.get("inertia", (1.0, 2.0, 3.0))),
            t1=float(r_cfg.get("t1", 5.0)),
            N=int(r_cfg.get("N", 5000)),
        )
        report["reduction"] = red.to_json()
        report["reduction_gap"] = red.reduction_gap
        ok = ok and red.reduction_gap <= cfg.tol["reduction"]
    report["pass"] = ok
    _emit(cfg, "certify", report)
    return 0 if ok else 1


def cmd_reduce(cfg: RunConfig) -> int:
    r_cfg = cfg.raw.get("reduction", {})
    red = free_rigid_body_demo(
        inertia=tuple(r_cfg.get("inertia", (1.0, 2.0, 3.0))),
        x0=r_cfg.get("x0"),
        omega0=r_cfg.get("omega0"),
        t1=float(r_cfg.get("t1", 5.0)),
        N=int(r_cfg.get("N", 5000)),
    )
    report = red.to_json()
    ok = red.reduction_gap is not None and red.reduction_gap <= cfg.tol["reduction"] and red.action_gap <= 1e-10
    report["tol"] = cfg.tol["reduction"]
    report["pass"] = ok
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        (cfg.out / "source.csv").write_text(path_to_csv(red.source_path), encoding="utf-8")
        (cfg.out / "pushed.csv").write_text(path_to_csv(red.pushed_path), encoding="utf-8")
        (cfg.out / "direct.csv").write_text(path_to_csv(red.direct_path), encoding="utf-8")
    _emit(cfg, "reduce", report)
    return 0 if ok else 1


def cmd_multipliers(cfg: RunConfig) -> int:
    params = cfg.params or HeavyTopParams()
    sys_ = heavy_top_system(params)
    m_cfg = cfg.raw.get("multipliers", {})
    x0 = cfg.x0 if cfg.x0 is not None and cfg.model == "heavy_top" else np.array(HEAVY_TOP_X0)
    y0 = cfg.y0 if cfg.y0 is not None and cfg.model == "heavy_top" else np.array(HEAVY_TOP_Y0)
    t1 = float(m_cfg.get("t1", 10.0))
    N = int(m_cfg.get("N", 10000))
    path = integrate(sys_, x0, y0, 0.0, t1, N)
    abn = [abnormal_check(path, float(a)).to_json() for a in m_cfg.get("alpha", [-1.0, 2.0])]
    e = np.asarray(params.e)
    omega = float(m_cfg.get("spin", 1.0)) * e
    closed = normal_multiplier_gap(params, e, omega)
    grid = normal_multiplier_gap_grid(params, e, omega)
    ok = all(a["max_gap"] <= cfg.tol["abnormal"] for a in abn) and abs(closed - grid) <= 1e-6
    report = {
        "abnormal": abn,
        "normal_gap_relative_equilibrium": {
            "gamma": e.tolist(),
            "omega": omega.tolist(),
            "closed_form": closed,
            "grid": grid,
            "normal_multiplier_exists": closed <= 1e-12,
        },
        "tol": cfg.tol["abnormal"],
        "pass": ok,
    }
    _emit(cfg, "multipliers", report)
    return 0 if ok else 1


COMMANDS = {
    "check": cmd_check,
    "simulate": cmd_simulate,
    "certify": cmd_certify,
    "reduce": cmd_reduce,
    "multipliers": cmd_multipliers,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="algebroid-mech",
        description="Lagrangian mechanics on Lie algebroids: simulate, certify, reduce.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--builtin", help="built-in algebroid name (overrides the config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--parallel", action="store_true", help="evaluate independent samples concurrently")
        for key in DEFAULT_TOL:
            p.add_argument(f"--tol-{key}", type=float, default=None, dest=f"tol_{key}")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("ALGEBROID_MECH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ExprError, KeyError, ValueError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 2
    except IntegrationError as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
