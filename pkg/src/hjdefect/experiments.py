"""Preset suites: eps-sweeps against the homogenized limit and end-to-end reports."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from hjdefect.correctors import check_growth
from hjdefect.defect_ergodic import analytic_E_1d, ergodic_constant
from hjdefect.effective_ham import EffectiveHamiltonianTable, analytic_hbar_1d, tabulate
from hjdefect.hj_core import ConvergenceError, box_grid, solve_eps_problem
from hjdefect.homogenized import analytic_homogenized_1d, check_infinity, defect_visible, solve_homogenized
from hjdefect.scalar_fields import (
    HamiltonianSpec,
    cos2_bump,
    is_downward,
    norm_kinetic,
    relativistic_kinetic,
    sin_cost,
    zero_cost,
)

ERROR_TARGET = 0.1
UPWARD_TARGET = 0.05


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class Preset:
    name: str
    environment: str  # "zero" | "sin"
    depth: float | None  # None: no defect; negative: upward bump
    dim: int = 1
    alpha: float = 1.0
    kinetic: str = "norm"
    eps_schedule: tuple[float, ...] = (0.2, 0.1, 0.05)
    R_sweep: tuple[float, ...] = (2.0, 4.0, 8.0)
    growth_R: float = 6.0
    p_range: tuple[float, float, int] = (-3.0, 3.0, 61)
    h_factor: float = 20.0
    L: float = 3.0
    window: float = 2.0
    budget_s: float = 60.0
    seed: int = 0

    @property
    def orientation(self) -> str:
        if self.depth is None or self.depth == 0:
            return "none"
        return "down" if self.depth > 0 else "up"

    def spec(self) -> HamiltonianSpec:
        per = sin_cost(dim=self.dim) if self.environment == "sin" else zero_cost(self.dim)
        defect = None if self.depth is None else cos2_bump(self.depth, dim=self.dim)
        kin = relativistic_kinetic(self.dim) if self.kinetic == "relativistic" else norm_kinetic(self.dim)
        return HamiltonianSpec(per, defect, kinetic=kin)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "environment": self.environment,
            "depth": self.depth,
            "orientation": self.orientation,
            "dim": self.dim,
            "alpha": self.alpha,
            "kinetic": self.kinetic,
            "eps_schedule": list(self.eps_schedule),
            "R_sweep": list(self.R_sweep),
            "budget_s": self.budget_s,
            "seed": self.seed,
        }


PRESETS = {
    "flat-down": Preset("flat-down", "zero", 1.0, budget_s=30.0),
    "sin-down": Preset("sin-down", "sin", 1.0, budget_s=60.0),
    "flat-up": Preset("flat-up", "zero", -1.0, budget_s=30.0),
    "sin-none": Preset("sin-none", "sin", None, budget_s=60.0),
    "radial-2d": Preset("radial-2d", "zero", 1.0, dim=2, kinetic="relativistic",
                        eps_schedule=(0.5, 0.25), R_sweep=(2.0, 3.0, 4.0), growth_R=4.0,
                        p_range=(0.0, 3.0, 13), h_factor=8.0, L=2.5, window=2.0, budget_s=600.0),
}
ALIASES = {"flat": "flat-down", "sin": "sin-down", "flat-up": "flat-up", "up": "flat-up", "none": "sin-none"}


def get_preset(name: str) -> Preset:
    key = ALIASES.get(name, name)
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return PRESETS[key]


# --------------------------------------------------------------------------
# convergence study


@dataclass
class ErrorTable:
    preset: str
    window: float
    rows: list[tuple[float, float, float, float, float]] = field(default_factory=list)
    reference: str = ""

    header = ("eps", "h", "error_off_origin", "error_with_origin", "runtime_s")

    @property
    def errors(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    @property
    def decreasing(self) -> bool:
        e = self.errors
        return bool(np.all(np.diff(e) < 0))

    @property
    def final(self) -> float:
        return float(self.errors[-1])

    def invariants(self, target: float) -> dict[str, bool]:
        e_off = self.errors
        e_all = np.array([r[3] for r in self.rows])
        return {
            "finite": bool(np.all(np.isfinite(e_off)) and np.all(np.isfinite(e_all))),
            "nested_sup": bool(np.all(e_off <= e_all)),
            "decreasing": self.decreasing,
            "final_within_target": self.final <= target,
        }


def _reference(preset: Preset, spec: HamiltonianSpec, jobs: int = 1):
    """Homogenized ``u`` as a callable: closed form in 1D, numeric otherwise."""
    if preset.dim == 1:
        an = analytic_homogenized_1d(spec.periodic, spec.defect, preset.alpha)
        return (lambda x: an(np.asarray(x)[:, 0])), "analytic"
    table = _table(preset, spec, jobs)
    E = ergodic_constant(spec, preset.R_sweep, jobs=jobs).E
    sol = solve_homogenized(table, E, preset.alpha, L=preset.L, h=0.05)
    return sol.at, "numeric"


def convergence_study(preset: Preset | str, eps_schedule=None, *, jobs: int = 1) -> ErrorTable:
    """``sup |u_eps - u|`` on ``[-window, window]^d`` for each eps of the schedule.

    The eps-problem runs on a box of half-width ``L`` with ``h = eps / h_factor``;
    the first error column leaves out the origin node, where ``u`` may be kinked.
    """
    preset = get_preset(preset) if isinstance(preset, str) else preset
    spec = preset.spec()
    try:
        ref, kind = _reference(preset, spec, jobs)
    except Exception as exc:  # noqa: BLE001 - tag and re-raise
        raise StageError("reference", exc) from exc
    table = ErrorTable(preset.name, preset.window, reference=kind)
    schedule = tuple(eps_schedule) if eps_schedule is not None else preset.eps_schedule

    def one(eps):
        t0 = time.perf_counter()
        h = eps / preset.h_factor
        grid = box_grid(preset.L, h, preset.dim)
        try:
            u, _ = solve_eps_problem(spec, preset.alpha, eps, grid)
        except (ConvergenceError, ValueError) as exc:
            raise StageError(f"solve eps={eps:g}", exc) from exc
        x = u.coords
        win = np.max(np.abs(x), axis=1) <= preset.window + 1e-12
        off = win & (np.linalg.norm(x, axis=1) > 0.5 * grid.h)
        err = np.abs(u.values[win] - ref(x[win]))
        err_off = np.abs(u.values[off] - ref(x[off]))
        return (float(eps), float(grid.h), float(np.max(err_off)), float(np.max(err)),
                time.perf_counter() - t0)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            table.rows = list(ex.map(one, schedule))
    else:
        table.rows = [one(eps) for eps in schedule]
    return table


def target_for(preset: Preset) -> float:
    return UPWARD_TARGET if preset.orientation == "up" else ERROR_TARGET


def study_invariants(preset: Preset, table: ErrorTable) -> dict[str, bool]:
    return table.invariants(target_for(preset))


# --------------------------------------------------------------------------
# full pipeline


def _table(preset: Preset, spec: HamiltonianSpec, jobs: int) -> EffectiveHamiltonianTable:
    lo, hi, n = preset.p_range
    return tabulate(spec, lo, hi, n, jobs=jobs)


def _stage(name, timing, fn, *args, **kwargs):
    t0 = time.perf_counter()
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - tag and re-raise
        raise StageError(name, exc) from exc
    finally:
        timing[name] = time.perf_counter() - t0


def pipeline_report(preset: Preset | str, *, jobs: int = 1) -> dict:
    """Hbar table, E, visibility, homogenized solve and growth check in one bundle.

    Oracle deltas are reported for the one-dimensional presets.  Runtimes sit
    under the ``timing`` key, so the rest of the bundle is deterministic.
    """
    preset = get_preset(preset) if isinstance(preset, str) else preset
    spec = preset.spec()
    timing: dict[str, float] = {}
    one_d = preset.dim == 1
    bundle: dict = {"preset": preset.as_dict()}

    table = _stage("hbar", timing, _table, preset, spec, jobs)
    hb = {"p": table.s.tolist(), "values": table.values.tolist(), **table.diagnostics()}
    if one_d:
        hb["oracle_delta"] = float(np.max(np.abs(table.values - analytic_hbar_1d(spec.periodic, table.s))))
    bundle["hbar"] = hb

    if spec.defect is None:
        E = table.min_value
        bundle["ergodic"] = {"E": E, "source": "no defect: min Hbar"}
    else:
        est = _stage("ergodic", timing, ergodic_constant, spec, preset.R_sweep, jobs=jobs)
        E = est.E
        bundle["ergodic"] = est.as_dict()
        if one_d and is_downward(spec.periodic, spec.defect):
            bundle["ergodic"]["oracle"] = analytic_E_1d(spec.periodic, spec.defect)
            bundle["ergodic"]["oracle_delta"] = abs(E - bundle["ergodic"]["oracle"])
    bundle["E"] = E
    visible = defect_visible(E, table)
    bundle["visible"] = visible
    bundle["consistency"] = {"E_minus_min_hbar": E - table.min_value}

    hom_h = 0.01 if one_d else 0.05
    sol = _stage("homogenized", timing, solve_homogenized, table, E, preset.alpha, L=4.0, h=hom_h)
    ladder = list(np.round(np.arange(0.0, 3.0 + 1e-9, hom_h), 10))
    decay = check_infinity(sol, ladder)
    hom = {
        "origin_value": sol.origin_value,
        "max_deviation_from_u_per": float(np.max(np.abs(sol.field.values - sol.u_per))),
        "exact_beyond": decay.exact_beyond,
        "p0_nonzero": sol.p0_nonzero,
    }
    # mu: radius of the region where the defect is felt
    hom["mu"] = decay.exact_beyond if decay.exact_beyond is not None else math.inf
    if one_d:
        an = analytic_homogenized_1d(spec.periodic, spec.defect, preset.alpha)
        xs = np.linspace(-3.0, 3.0, 601)
        hom["mu_analytic"] = an.mu
        hom["oracle_delta"] = float(np.max(np.abs(sol.at(xs) - an(xs))))
    bundle["homogenized"] = hom

    growth = _stage("growth", timing, check_growth, spec, table.p0, (preset.growth_R,))
    bundle["growth"] = [{"R": g.R, "radii": g.radii, "minima": g.minima, "verdict": g.verdict,
                         "oscillation_bound": g.oscillation_bound} for g in growth]

    inv = {
        "E_at_least_min_hbar": E >= table.min_value - 1e-2,
        "visibility_matches_growth": (growth[0].verdict == "increasing") == visible,
        "invisible_means_u_per": visible or hom["max_deviation_from_u_per"] <= 1e-6,
    }
    if one_d:
        inv["hbar_oracle"] = hb["oracle_delta"] <= 2e-2
        inv["homogenized_oracle"] = hom["oracle_delta"] <= 2e-2
        if "oracle_delta" in bundle["ergodic"]:
            inv["ergodic_oracle"] = bundle["ergodic"]["oracle_delta"] <= 3e-2
    bundle["invariants"] = inv
    bundle["violations"] = sorted(k for k, ok in inv.items() if not ok)
    bundle["timing"] = timing
    return bundle
