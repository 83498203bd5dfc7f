"""Correctors around the defect.

* ``w^R``: the truncated global corrector, ``H(y, Dw) = E^R`` in ``B_R``.
* Growth of ``w - p0 . y`` at infinity, the dichotomy behind visibility.
* ``p~``: the covector on the far side of ``p0`` at the same level of ``Hbar``.
* ``chi^R_{p,p~}``: the Dirichlet corrector with piecewise-affine boundary data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hjdefect.defect_ergodic import DEFAULT_H, ergodic_constant_truncated
from hjdefect.effective_ham import DEFAULT_LAMBDAS, PLATEAU_TOL, EffectiveHamiltonianTable, PeriodicCorrector
from hjdefect.hj_core import (
    ConvergenceError,
    GridField,
    ball_grid,
    outward_policy,
    solve_control_problem,
)
from hjdefect.scalar_fields import HamiltonianSpec, eval_hamiltonian, shift_hamiltonian


@dataclass
class CorrectorField:
    field: GridField
    level: float
    normalization: str = "value 0 at the node nearest the origin"
    residual_median: float = float("nan")

    def at(self, x):
        return self.field.at(x)


def _central_gradient(f: GridField) -> np.ndarray:
    """Central differences on the full lattice, NaN where a neighbour is missing."""
    arr = f.full()
    grads = []
    for ax in range(f.dim):
        fwd = np.roll(arr, -1, axis=ax)
        bwd = np.roll(arr, 1, axis=ax)
        g = (fwd - bwd) / (2 * f.h)
        idx = [slice(None)] * f.dim
        idx[ax] = 0
        g[tuple(idx)] = np.nan
        idx[ax] = -1
        g[tuple(idx)] = np.nan
        grads.append(g[f.grid.mask])
    return np.stack(grads, axis=1)


def corrector_w(spec: HamiltonianSpec, R: float, lambdas=DEFAULT_LAMBDAS, *,
                h: float | None = None) -> CorrectorField:
    """``w^R ~ w^{lam_min,R} - w^{lam_min,R}(0)`` with the level ``E^R``."""
    spec = spec.to_control_form()
    est = ergodic_constant_truncated(spec, R, lambdas, h=h, keep_field=True)
    w = est.field
    i0 = int(w.grid.node_index(np.zeros(spec.dim))[0])
    vals = w.values - w.values[i0]
    out = GridField(w.grid, vals, {**w.meta, "level": est.value, "normalization": "w(0)=0"})
    grad = _central_gradient(out)
    ok = np.all(np.isfinite(grad), axis=1)
    res = eval_hamiltonian(spec, out.coords[ok], grad[ok]) - est.value
    return CorrectorField(out, est.value, residual_median=float(np.median(np.abs(res))))


@dataclass
class GrowthReport:
    R: float
    radii: list[float]
    minima: list[float]
    increasing: bool
    bounded_below: bool
    oscillation_bound: float

    @property
    def verdict(self) -> str:
        if self.increasing:
            return "increasing"
        return "bounded" if self.bounded_below else "unbounded"


def growth_ladder(w: CorrectorField, p0, radii) -> tuple[list[float], list[float]]:
    """``m(r) = min_{r <= |y| <= r + h} (w(y) - p0 . y)`` along a radius ladder."""
    coords = w.field.coords
    r = np.linalg.norm(coords, axis=1)
    p0 = np.asarray(p0, dtype=float).reshape(w.field.dim)
    g = w.field.values - coords @ p0
    h = w.field.h
    out = []
    for rr in radii:
        shell = (r >= rr - 1e-12) & (r <= rr + h + 1e-12)
        out.append(float(np.min(g[shell])))
    return list(radii), out


def check_growth(spec: HamiltonianSpec, p0, R_sweep=(6.0,), radii=None, lambdas=DEFAULT_LAMBDAS, *,
                 h: float | None = None) -> list[GrowthReport]:
    """Ladder of ``m(r)`` for each truncation radius; increasing vs bounded-below verdicts."""
    spec = spec.to_control_form()
    p0 = np.asarray(p0, dtype=float).reshape(spec.dim)
    r0 = spec.defect.radius if spec.defect is not None else 0.0
    bound = 2.0 * spec.cost_bound * np.sqrt(spec.dim) / spec.controls.inner_radius
    reports = []
    for R in R_sweep:
        ladder = radii if radii is not None else [float(k) for k in range(1, int(np.floor(R - 2)) + 1)]
        ladder = [rr for rr in ladder if rr > r0 and rr + 1.0 <= R]
        w = corrector_w(spec, R, lambdas, h=h)
        rs, ms = growth_ladder(w, p0, ladder)
        inc = bool(np.all(np.diff(ms) > 0))
        bounded = bool(np.min(ms) >= -bound)
        reports.append(GrowthReport(float(R), rs, ms, inc, bounded, float(bound)))
    return reports


def check_growth_shifted(spec: HamiltonianSpec, p0, R_sweep=(6.0,), radii=None, lambdas=DEFAULT_LAMBDAS, *,
                         h: float | None = None) -> list[GrowthReport]:
    """The same ladder for ``H(y, p0 + p)``, whose corrector already has ``p0`` folded in."""
    shifted = shift_hamiltonian(spec.to_control_form(), p0)
    return check_growth(shifted, np.zeros(spec.dim), R_sweep, radii, lambdas, h=h)


@dataclass
class PTildePair:
    p: np.ndarray
    ptilde: np.ndarray
    e: np.ndarray
    level: float
    degenerate: bool = False
    plateau: tuple[float, float] | None = None


def _hbar_line(table: EffectiveHamiltonianTable, p0: np.ndarray, d: np.ndarray):
    return lambda t: float(np.atleast_1d(table(p0 + t * d if table.dim > 1 else (p0 + t * d)[0]))[0])


def find_ptilde(table: EffectiveHamiltonianTable, p, *, tol: float = 1e-6,
                plateau_tol: float = PLATEAU_TOL) -> PTildePair:
    """Covector ``p~ = p0 + t (p - p0)``, ``t < 0``, with ``Hbar(p~) = Hbar(p)``."""
    p0 = np.asarray(table.p0, dtype=float)
    p = np.asarray(p, dtype=float).reshape(p0.shape)
    d = p - p0
    level = float(np.atleast_1d(table(p if table.dim > 1 else p[0]))[0])
    if level < table.min_value - 1e-9:
        raise ValueError(f"level {level} is below min Hbar = {table.min_value}")
    if np.linalg.norm(d) == 0 or level <= table.min_value + plateau_tol:
        # flat at the level: expose the plateau edges instead of guessing
        lo, hi = table.plateau
        unit = d / np.linalg.norm(d) if np.linalg.norm(d) > 0 else np.eye(len(p0))[0]
        s_p = float(d @ unit)
        edge = lo if s_p >= 0 else hi
        pt = p0 + (edge - float(p0 @ unit)) * unit if table.dim > 1 else np.array([edge])
        e = -unit if s_p >= 0 else unit
        return PTildePair(p, pt, e, level, True, (lo, hi))
    f = _hbar_line(table, p0, d)
    # bracket the crossing on the t < 0 side
    lo = -1.0
    while f(lo) < level:
        lo *= 2.0
        if lo < -1e6:
            raise ValueError("no crossing found on the far side of p0")
    a, b = lo, 0.0
    while b - a > tol:
        mid = 0.5 * (a + b)
        if f(mid) >= level:
            a = mid
        else:
            b = mid
    t = 0.5 * (a + b)
    pt = p0 + t * d
    e = (pt - p0) / np.linalg.norm(pt - p0)
    return PTildePair(p, pt, e, level, False, None)


@dataclass
class PiecewiseCorrector:
    field: GridField
    p: np.ndarray
    ptilde: np.ndarray
    level: float
    boundary: np.ndarray = field(repr=False)
    sigma: np.ndarray | None = field(default=None, repr=False)
    lower_constant: float = float("nan")
    upper_constant: float = float("nan")
    sandwich_violation: float = float("nan")

    def sublinearity(self, radii) -> list[float]:
        """``max_{|y| ~ r} |chi - min(p . y, p~ . y)| / r`` on shells of width h."""
        coords = self.field.coords
        r = np.linalg.norm(coords, axis=1)
        aff = np.minimum(coords @ self.p, coords @ self.ptilde)
        dev = np.abs(self.field.values - aff)
        out = []
        for rr in radii:
            shell = (r >= rr - 1e-12) & (r <= rr + self.field.h + 1e-12)
            out.append(float(np.max(dev[shell]) / rr))
        return out


def corrector_piecewise(spec: HamiltonianSpec, p, ptilde, R: float, chi_p: PeriodicCorrector,
                        chi_pt: PeriodicCorrector, E: float, *, level: float | None = None,
                        h: float | None = None, w: CorrectorField | None = None) -> PiecewiseCorrector:
    """Solve ``H(y, D chi) = Hbar(p)`` in ``B_R`` with ``chi = min(p.y + chi_p, p~.y + chi_p~)`` outside.

    Exit-time reading: ``chi(y) = inf [ int_0^tau (l + Hbar(p)) dt + chi(y(tau)) ]``
    over trajectories leaving the open ball.  If ``w`` is given, the subsolution
    ``sigma = min(w - c, boundary data)`` is evaluated for the sandwich check.
    """
    spec = spec.to_control_form()
    p = np.asarray(p, dtype=float).reshape(spec.dim)
    pt = np.asarray(ptilde, dtype=float).reshape(spec.dim)
    level = chi_p.hbar if level is None else float(level)
    if level <= E:
        raise ValueError(f"need Hbar(p) > E; got Hbar(p) = {level:.4g}, E = {E:.4g}")
    h = h if h is not None else DEFAULT_H[spec.dim]
    grid = ball_grid(R, h, spec.dim)

    def data(x):
        return np.minimum(x @ p + chi_p.field.at(x), x @ pt + chi_pt.field.at(x))

    def pins(x):
        hx = np.min(np.diff(np.unique(np.round(x[:, 0], 12)))) if len(x) > 1 else h
        mask = np.linalg.norm(x, axis=1) > R - hx * (1 + 1e-9)
        return mask, np.where(mask, data(x), 0.0)

    cost = lambda x: spec.spatial_cost(x) + level
    try:
        vals, rep = solve_control_problem(spec, grid, cost, 0.0, pins, start=outward_policy)
    except ConvergenceError:
        vals, rep = solve_control_problem(spec, grid, cost, 0.0, pins, method="value",
                                          w0=data(grid.coords), tol=1e-10)
    chi = GridField(grid, vals, {"geometry": grid.tag, "h": grid.h, "R": R, "level": level,
                                 "p": p.tolist(), "ptilde": pt.tolist(), **rep.as_dict()})
    bdry = data(grid.coords)
    out = PiecewiseCorrector(chi, p, pt, level, bdry)
    out.upper_constant = float(np.max(vals - bdry))
    if w is not None:
        r0 = spec.defect.radius if spec.defect is not None else 0.0
        wv = w.field.at(grid.coords)
        inner = np.linalg.norm(grid.coords, axis=1) <= r0 + 1.0
        c = float(np.max(wv[inner] - bdry[inner])) + 1e-6
        sigma = np.minimum(wv - c, bdry)
        out.sigma = sigma
        out.lower_constant = float(-np.min(sigma - bdry))
        out.sandwich_violation = float(np.max(sigma - vals))
    return out
