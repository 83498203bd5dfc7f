"""Command-line front end.

Every subcommand writes CSV/JSON artifacts under ``--out`` and prints a
one-line summary.  Exit codes: 0 success, 1 invariant violations (listed on
stderr), 2 configuration error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from hjdefect import artifacts
from hjdefect.correctors import check_growth, corrector_w
from hjdefect.defect_ergodic import ergodic_constant
from hjdefect.effective_ham import DEFAULT_LAMBDAS, effective_hamiltonian_at, tabulate
from hjdefect.experiments import (
    ALIASES,
    PRESETS,
    StageError,
    convergence_study,
    get_preset,
    pipeline_report,
    study_invariants,
)
from hjdefect.hj_core import ConvergenceError, box_grid, solve_eps_problem
from hjdefect.homogenized import solve_homogenized
from hjdefect.oracles_1d import flat_solution
from hjdefect.random_defects import limit_law_mc, regime_summary, sample_lattice
from hjdefect.scalar_fields import (
    KINETIC_KINDS,
    HamiltonianSpec,
    defect_from_config,
    periodic_from_config,
)

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
HBAR_ACCURACY = 2e-2

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_num_or_list = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]}
_pos_or_list = {"oneOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]}
_cost = {
    "type": "object",
    "properties": {
        "kind": {"type": "string"},
        "value": _num,
        "amplitude": _num,
        "depth": _num,
        "radius": _pos,
        "path": {"type": "string"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"type": "string", "enum": sorted(set(PRESETS) | set(ALIASES))},
        "environment": _cost,
        "defect": {"oneOf": [_cost, {"type": "null"}]},
        "kinetic": {"type": "string", "enum": sorted(KINETIC_KINDS)},
        "dim": {"type": "integer", "enum": [1, 2]},
        "out": {"type": "string"},
        "jobs": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "p": _num_or_list,
        "p_range": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
        "lambdas": {"type": "array", "items": _pos, "minItems": 3},
        "R_sweep": {"type": "array", "items": _pos, "minItems": 3},
        "R": _pos,
        "eps": _pos_or_list,
        "alpha": _pos,
        "h": _pos,
        "L": _pos,
        "E": _num,
        "mode": {"type": "string", "enum": ["fixed", "scaled"]},
        "eta": {"type": "number", "minimum": 0, "maximum": 1},
        "eta_bar": {"type": "number", "minimum": 0},
        "n_samples": {"type": "integer", "minimum": 10000},
        "window": {"type": "integer", "minimum": 1},
        "q": {"type": "integer", "minimum": 1},
        "t": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
        "two_sided": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return cfg


def _validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc
    return cfg


def _settings(args: argparse.Namespace) -> dict:
    """Config file values overridden by any flag given on the command line."""
    cfg = dict(_load_config(args.config))
    _validate(cfg)
    for key in CONFIG_SCHEMA["properties"]:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    _validate(cfg)
    cfg.setdefault("preset", "flat-down")
    cfg.setdefault("out", "hjdefect-out")
    cfg.setdefault("jobs", 1)
    cfg.setdefault("seed", 0)
    return cfg


def _spec(cfg: dict) -> HamiltonianSpec:
    preset = get_preset(cfg["preset"])
    base = preset.spec()
    dim = cfg.get("dim", preset.dim)
    try:
        per = periodic_from_config(cfg["environment"], dim) if "environment" in cfg else None
        if "defect" in cfg:
            defect = None if cfg["defect"] is None else defect_from_config(cfg["defect"], dim)
        else:
            defect = base.defect
        kin = KINETIC_KINDS[cfg["kinetic"]](dim) if "kinetic" in cfg else None
    except (KeyError, ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    if dim != preset.dim and (per is None or kin is None):
        raise ConfigError("changing dim needs inline environment and kinetic definitions")
    if defect is not None and defect.dim != dim:
        raise ConfigError("defect dimension differs from dim")
    return HamiltonianSpec(per or base.periodic, defect, kinetic=kin or base.kinetic)


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _lambdas(cfg):
    return tuple(cfg.get("lambdas", DEFAULT_LAMBDAS))


# --------------------------------------------------------------------------
# subcommands: each returns (summary line, list of violations)


def cmd_hbar(cfg: dict, out: Path):
    spec = _spec(cfg)
    if "p" in cfg and "p_range" not in cfg:
        rows, vio = [], []
        for p in _as_list(cfg["p"]):
            pv = np.zeros(spec.dim)
            pv[0] = p
            est = effective_hamiltonian_at(spec, pv, _lambdas(cfg), h=cfg.get("h"))
            rows.append((p, est.value, est.sequence[-1]))
            if est.warning:
                vio.append(f"p={p}: {est.warning}")
        artifacts.write_csv(out / "hbar.csv", ["p", "hbar", "hbar_lambda_min"], rows)
        summary = " ".join(f"hbar={v:.2f}±{HBAR_ACCURACY:.2f}" for _, v, _ in rows)
        return summary, vio
    lo, hi, n = cfg.get("p_range", (-3.0, 3.0, 61))
    table = tabulate(spec, lo, hi, int(n), _lambdas(cfg), h=cfg.get("h"), jobs=cfg["jobs"])
    artifacts.write_csv(out / "hbar_table.csv", ["p", "hbar"], table.as_rows())
    artifacts.write_json(out / "hbar_table.json", table.diagnostics())
    vio = list(table.warnings)
    if table.convexity_violation > 1e-3:
        vio.append(f"convexity violation {table.convexity_violation:.2e}")
    return f"p0={table.p0[0]:.4g} min_hbar={table.min_value:.4f} points={n}", vio


def cmd_ergodic(cfg: dict, out: Path):
    spec = _spec(cfg)
    if spec.defect is None:
        raise ConfigError("ergodic needs a defect")
    est = ergodic_constant(spec, tuple(cfg.get("R_sweep", (2.0, 4.0, 8.0))), _lambdas(cfg),
                           h=cfg.get("h"), jobs=cfg["jobs"])
    rows = [(t.R, lam, v) for t in est.truncated for lam, v in zip(t.lambdas, t.sequence)]
    artifacts.write_csv(out / "ergodic_sequences.csv", ["R", "lambda", "minus_lambda_w"], rows)
    artifacts.write_json(out / "ergodic.json", est.as_dict())
    vio = list(est.warnings)
    if est.monotonicity_violation > 1e-2:
        vio.append(f"E^R not monotone in R: {est.monotonicity_violation:.2e}")
    return f"E={est.E:.4f} E_R={[round(e, 4) for e in est.E_R]}", vio


def cmd_solve_eps(cfg: dict, out: Path):
    spec = _spec(cfg)
    eps = float(_as_list(cfg.get("eps", 0.05))[0])
    h = cfg.get("h", eps / 20)
    grid = box_grid(cfg.get("L", 3.0), h, spec.dim)
    u, rep = solve_eps_problem(spec, cfg.get("alpha", 1.0), eps, grid)
    artifacts.write_field(out / "u_eps", u)
    i0 = int(grid.node_index(np.zeros(spec.dim))[0])
    vio = [] if np.all(np.isfinite(u.values)) else ["non-finite values"]
    return f"u_eps(0)={u.values[i0]:.4f} min={u.values.min():.4f} iterations={rep.iterations}", vio


def cmd_homogenize(cfg: dict, out: Path):
    spec = _spec(cfg)
    lo, hi, n = cfg.get("p_range", (-3.0, 3.0, 61) if spec.dim == 1 else (0.0, 3.0, 13))
    table = tabulate(spec, lo, hi, int(n), _lambdas(cfg), jobs=cfg["jobs"])
    if "E" in cfg:
        E = float(cfg["E"])
    elif spec.defect is None:
        E = table.min_value
    else:
        E = ergodic_constant(spec, tuple(cfg.get("R_sweep", (2.0, 4.0, 8.0))), _lambdas(cfg), jobs=cfg["jobs"]).E
    sol = solve_homogenized(table, E, cfg.get("alpha", 1.0), L=cfg.get("L", 4.0),
                            h=cfg.get("h", 0.01 if spec.dim == 1 else 0.05))
    artifacts.write_field(out / "homogenized", sol.field)
    artifacts.write_json(out / "homogenized_summary.json",
                         {"E": E, "visible": sol.visible, "origin_value": sol.origin_value,
                          "hbar": table.diagnostics()})
    return f"E={E:.4f} visible={str(sol.visible).lower()} u(0)={sol.origin_value:.4f}", []


def cmd_corrector(cfg: dict, out: Path):
    spec = _spec(cfg)
    R = float(cfg.get("R", 6.0))
    w = corrector_w(spec, R, _lambdas(cfg), h=cfg.get("h"))
    artifacts.write_field(out / "corrector_w", w.field)
    p0 = np.zeros(spec.dim)
    if "p" in cfg:
        p0[0] = float(_as_list(cfg["p"])[0])
    growth = check_growth(spec, p0, (R,), lambdas=_lambdas(cfg), h=cfg.get("h"))[0]
    artifacts.write_csv(out / "growth.csv", ["r", "min_w_minus_p0_y"], list(zip(growth.radii, growth.minima)))
    artifacts.write_json(out / "corrector.json",
                         {"R": R, "level": w.level, "residual_median": w.residual_median,
                          "verdict": growth.verdict, "oscillation_bound": growth.oscillation_bound})
    vio = [] if growth.verdict != "unbounded" else ["growth ladder neither increasing nor bounded"]
    return f"level={w.level:.4f} growth={growth.verdict}", vio


def cmd_random(cfg: dict, out: Path):
    spec = _spec(cfg)
    if spec.dim != 1 or not spec.periodic.is_constant or spec.periodic.mean != 0.0:
        raise ConfigError("random runs on the flat one-dimensional environment")
    if spec.defect is None:
        raise ConfigError("random needs a defect")
    seed = int(cfg["seed"])
    mode = cfg.get("mode", "scaled")
    eps_list = _as_list(cfg.get("eps", 1e-3 if mode == "scaled" else 0.05))
    eps = float(eps_list[0])
    if mode == "scaled":
        param = float(cfg.get("eta_bar", 1.0))
        kw = {"eta_bar": param}
    else:
        param = float(cfg.get("eta", 0.3))
        kw = {"eta": param}
    K = int(cfg.get("window", 100))
    real = sample_lattice(mode, eps, (-K, K), int(cfg.get("q", 1)), seed, **kw)
    artifacts.write_csv(out / "realization.csv", ["k", "X"], real.rows())
    vio = []
    freq, lo, hi = real.frequency_band()
    t = cfg.get("t", [0.25, 0.5, 0.75])
    report = {"realization": {"window": [-K, K], "eta": real.eta, "frequency": freq, "band": [lo, hi]}}
    if real.eta > 0:
        law = limit_law_mc(mode, eps, param, int(cfg.get("n_samples", 100_000)), seed,
                           t=t, two_sided=bool(cfg.get("two_sided", False)))
        artifacts.write_csv(out / "cdf.csv", ["t", "empirical", "analytic", "exact"], law.rows())
        report["limit_law"] = {"dkw_distance": law.dkw_distance, "dkw_band": law.dkw_band}
        if law.dkw_distance > law.dkw_band:
            vio.append(f"empirical CDF outside the DKW band: {law.dkw_distance:.4f} > {law.dkw_band:.4f}")
    regimes = regime_summary(lambda e: flat_solution(spec.defect, e), spec.defect.value_at_origin,
                             [{"regime": "i", "eps": 0.01, "eta": 0.3, "n": 200},
                              {"regime": "ii", "eps": 0.005, "eta": 0.005**2, "n": 200},
                              {"regime": "iii", "eps": 0.01, "eta_bar": 1.0, "n": 500}], seed=seed)
    report["regimes"] = [r.as_dict() for r in regimes]
    artifacts.write_json(out / "random.json", report)
    if not lo <= freq <= hi:
        vio.append(f"indicator frequency {freq:.4f} outside [{lo:.4f}, {hi:.4f}]")
    line = f"eta={real.eta:.4g} frequency={freq:.4f}"
    if "limit_law" in report:
        line += f" dkw={report['limit_law']['dkw_distance']:.4f}"
    return line, vio


def cmd_converge(cfg: dict, out: Path):
    preset = get_preset(cfg["preset"])
    eps = _as_list(cfg["eps"]) if "eps" in cfg else None
    table = convergence_study(preset, eps, jobs=cfg["jobs"])
    artifacts.write_csv(out / f"errors_{preset.name}.csv", table.header, table.rows)
    inv = study_invariants(preset, table)
    artifacts.write_json(out / f"errors_{preset.name}.json",
                         {"preset": preset.as_dict(), "window": table.window, "reference": table.reference,
                          "invariants": inv})
    vio = sorted(k for k, ok in inv.items() if not ok)
    return f"{preset.name}: errors={[round(float(e), 4) for e in table.errors]}", vio


def cmd_report(cfg: dict, out: Path):
    preset = get_preset(cfg["preset"])
    bundle = pipeline_report(preset, jobs=cfg["jobs"])
    artifacts.write_json(out / f"report_{preset.name}.json", bundle)
    return f"{preset.name}: E={bundle['E']:.4f} visible={str(bundle['visible']).lower()}", bundle["violations"]


COMMANDS = {
    "hbar": cmd_hbar,
    "ergodic": cmd_ergodic,
    "solve-eps": cmd_solve_eps,
    "homogenize": cmd_homogenize,
    "corrector": cmd_corrector,
    "random": cmd_random,
    "converge": cmd_converge,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override its keys")
    common.add_argument("--preset", help=f"one of {', '.join(sorted(PRESETS))} (aliases: sin, flat)")
    common.add_argument("--out", help="output directory (default: hjdefect-out)")
    common.add_argument("--jobs", type=int, help="worker threads")
    common.add_argument("--seed", type=int, help="seed for every stochastic output")
    common.add_argument("--h", type=float, help="grid spacing")
    common.add_argument("--alpha", type=float, help="discount of the eps-problem")
    common.add_argument("--lambdas", type=float, nargs="+", help="vanishing-discount schedule")

    parser = argparse.ArgumentParser(prog="hjdefect", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hbar", parents=[common], help="effective Hamiltonian")
    p.add_argument("--p", type=float, nargs="+", help="covector(s); omit for a table")
    p.add_argument("--p-range", dest="p_range", type=float, nargs=3, metavar=("MIN", "MAX", "N"))

    p = sub.add_parser("ergodic", parents=[common], help="ergodic constant of the defect")
    p.add_argument("--R-sweep", dest="R_sweep", type=float, nargs="+")

    p = sub.add_parser("solve-eps", parents=[common], help="oscillatory problem at one eps")
    p.add_argument("--eps", type=float)
    p.add_argument("--L", type=float, help="box half-width")

    p = sub.add_parser("homogenize", parents=[common], help="homogenized Dirichlet problem")
    p.add_argument("--E", type=float, help="use this ergodic constant instead of computing it")
    p.add_argument("--L", type=float)
    p.add_argument("--p-range", dest="p_range", type=float, nargs=3, metavar=("MIN", "MAX", "N"))
    p.add_argument("--R-sweep", dest="R_sweep", type=float, nargs="+")

    p = sub.add_parser("corrector", parents=[common], help="truncated corrector and growth ladder")
    p.add_argument("--R", type=float)
    p.add_argument("--p", type=float, nargs=1, help="p0 used in the growth ladder")

    p = sub.add_parser("random", parents=[common], help="Bernoulli defect lattices")
    p.add_argument("--mode", choices=["fixed", "scaled"])
    p.add_argument("--eps", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--eta-bar", dest="eta_bar", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--window", type=int, help="lattice indices run over [-window, window]")
    p.add_argument("--q", type=int)
    p.add_argument("--t", type=float, nargs="+")
    p.add_argument("--two-sided", dest="two_sided", action="store_const", const=True)

    p = sub.add_parser("converge", parents=[common], help="eps-sweep error table")
    p.add_argument("--eps", type=float, nargs="+")

    sub.add_parser("report", parents=[common], help="full pipeline bundle")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = _settings(args)
        _spec(cfg)  # catches inconsistent inline definitions before any output exists
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["out"])
    try:
        summary, violations = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER if isinstance(exc.cause, ConvergenceError) else EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(summary)
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_VIOLATION if violations else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
