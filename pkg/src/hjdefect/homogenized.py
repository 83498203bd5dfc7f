"""The homogenized problem: ``alpha u + Hbar(Du) = 0`` off the origin, ``u(0) = -E / alpha``.

The weak Dirichlet condition at the origin is realized in control form: the
effective cost ``lbar = Hbar*`` drives trajectories on a box, and the origin
node is pinned to ``min(-E, -Hbar(p0)) / alpha``, so reaching the origin and
stopping there is one of the available strategies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hjdefect.effective_ham import EffectiveHamiltonianTable
from hjdefect.hj_core import Grid, GridField, box_grid, solve_control_problem
from hjdefect.scalar_fields import (
    DefectCost,
    HamiltonianSpec,
    PeriodicCost,
    composite_inf,
    control_set,
    is_downward,
    legendre_cost,
    table_kinetic,
    zero_cost,
)

VISIBILITY_TOL = 1e-2
CONSISTENCY_TOL = 1e-2


def defect_visible(E: float, table: EffectiveHamiltonianTable, tol: float = VISIBILITY_TOL) -> bool:
    """``E > Hbar(p0)``: the defect survives in the limit."""
    return bool(E > table.min_value + tol)


def effective_spec(table: EffectiveHamiltonianTable, n_speeds: int | None = None,
                   n_directions: int = 32) -> HamiltonianSpec:
    """Control form of ``Hbar``: Legendre transform of the table interpolant."""
    lo, hi = table.slope_range()
    vmax = max(abs(lo), abs(hi))
    if table.dim == 1:
        kin = table_kinetic(table.s, table.values, dim=1)
    else:
        pos = table.s >= -1e-12
        kin = table_kinetic(table.s[pos], table.values[pos], dim=table.dim)
    ctrl = control_set(table.dim, n_speeds=n_speeds, n_directions=n_directions, max_speed=vmax)
    return HamiltonianSpec(zero_cost(table.dim), controls=ctrl,
                           control_cost=legendre_cost(kin, ctrl, p_max=max(20.0, 4 * np.max(np.abs(table.s)))))


@dataclass
class HomogenizedSolution:
    field: GridField
    E: float
    table: EffectiveHamiltonianTable = field(repr=False)
    alpha: float
    visible: bool
    u_per: np.ndarray = field(repr=False)
    p0_nonzero: bool = False

    def at(self, x):
        return self.field.at(x)

    @property
    def origin_value(self) -> float:
        i0 = int(self.field.grid.node_index(np.zeros(self.field.dim))[0])
        return float(self.field.values[i0])


def solve_homogenized(table: EffectiveHamiltonianTable, E: float, alpha: float, grid: Grid | None = None, *,
                      L: float = 4.0, h: float = 0.01, tol: float = CONSISTENCY_TOL) -> HomogenizedSolution:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if E < table.min_value - tol:
        raise ValueError(f"inconsistent inputs: E = {E:.4g} below min Hbar = {table.min_value:.4g}")
    if grid is None:
        grid = box_grid(L, h, table.dim)
    if grid.geometry != "box":
        raise ValueError("homogenized solve runs on a box")
    spec = effective_spec(table)
    pin_value = min(-E, -table.min_value) / alpha

    def pins(x):
        hx = np.min(np.diff(np.unique(np.round(x[:, 0], 12))))
        mask = np.linalg.norm(x, axis=1) < 0.5 * hx
        return mask, np.full(len(x), pin_value)

    zero = lambda x: np.zeros(len(x))
    vals, rep = solve_control_problem(spec, grid, zero, alpha, pins)
    free, _ = solve_control_problem(spec, grid, zero, alpha)
    p0_nonzero = bool(np.linalg.norm(table.p0) > 0.05)
    meta = {"geometry": grid.tag, "h": grid.h, "alpha": alpha, "E": E, "pin": pin_value, **rep.as_dict()}
    return HomogenizedSolution(GridField(grid, vals, meta), E, table, alpha,
                               defect_visible(E, table), free, p0_nonzero)


@dataclass
class DecayReport:
    radii: list[float]
    errors: list[float]
    exact_beyond: float | None
    tol: float


def check_infinity(sol: HomogenizedSolution, radii, tol: float = 1e-9) -> DecayReport:
    """``max |u - u_per|`` on shells ``r <= |x| <= r + h``; first radius past which it is exactly 0."""
    coords = sol.field.coords
    r = np.linalg.norm(coords, axis=1) if sol.field.dim > 1 else np.abs(coords[:, 0])
    diff = np.abs(sol.field.values - sol.u_per)
    h = sol.field.h
    errs = []
    for rr in radii:
        shell = (r >= rr - 1e-12) & (r <= rr + h + 1e-12)
        errs.append(float(np.max(diff[shell])) if np.any(shell) else float("nan"))
    exact = None
    for rr, e in zip(radii, errs):
        beyond = r >= rr - 1e-12
        if np.all(diff[beyond] <= tol):
            exact = float(rr)
            break
    return DecayReport(list(radii), errs, exact, tol)


@dataclass
class AnalyticHomogenized:
    """``u(x) = (<l> - e^{-alpha|x|} (<l> + E)) / alpha`` for ``|x| <= mu``, ``inf l_per / alpha`` beyond."""

    mean: float
    inf_per: float
    E: float
    alpha: float
    mu: float

    def __call__(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        inner = (self.mean - np.exp(-self.alpha * x) * (self.mean + self.E)) / self.alpha
        out = np.where(x <= self.mu, inner, self.inf_per / self.alpha)
        return float(out) if out.ndim == 0 else out


def analytic_homogenized_1d(per: PeriodicCost, defect: DefectCost | None, alpha: float = 1.0) -> AnalyticHomogenized:
    if per.dim != 1:
        raise ValueError("closed form is one-dimensional")
    mean, inf_per = per.mean, per.inf
    if defect is None or not is_downward(per, defect):
        return AnalyticHomogenized(mean, inf_per, -inf_per, alpha, 0.0)
    E = -composite_inf(per, defect)
    gap = mean - inf_per
    mu = math.inf if gap <= 1e-14 else math.log((mean + E) / gap) / alpha
    return AnalyticHomogenized(mean, inf_per, E, alpha, mu)
