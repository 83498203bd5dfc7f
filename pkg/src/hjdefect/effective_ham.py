"""Effective Hamiltonian from the discounted periodic cell problem.

``Hbar(p)`` is read off the vanishing-discount limit of ``-lam <w_lam>``, with a
linear extrapolation in ``lam`` over the last three discounts of a schedule.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from hjdefect.hj_core import GridField, Grid, solve_discounted_periodic, torus_grid
from hjdefect.scalar_fields import HamiltonianSpec, PeriodicCost, eval_hamiltonian

DEFAULT_LAMBDAS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
DEFAULT_H = {1: 1 / 400, 2: 1 / 64}
MONOTONE_TOL = 1e-3
PLATEAU_TOL = 2e-3


def check_schedule(lambdas) -> tuple[float, ...]:
    lam = tuple(float(v) for v in lambdas)
    if len(lam) < 3:
        raise ValueError("discount schedule needs at least 3 entries")
    if any(v <= 0 for v in lam) or any(b >= a for a, b in zip(lam, lam[1:])):
        raise ValueError("discount schedule must be positive and strictly decreasing")
    return lam


def extrapolate(lambdas, values) -> float:
    """Intercept at ``lam = 0`` of the least-squares line through the last three points."""
    lam = np.asarray(lambdas[-3:], dtype=float)
    val = np.asarray(values[-3:], dtype=float)
    slope, intercept = np.polyfit(lam, val, 1)
    return float(intercept)


def monotone_defect(values) -> float:
    """How far a sequence is from being monotone (0 when it is)."""
    d = np.diff(np.asarray(values, dtype=float))
    return float(min(np.max(np.maximum(d, 0.0), initial=0.0), np.max(np.maximum(-d, 0.0), initial=0.0)))


@dataclass
class HbarEstimate:
    value: float
    p: np.ndarray
    lambdas: tuple[float, ...]
    sequence: list[float]
    warning: str | None = None

    def __float__(self) -> float:
        return self.value


def _grid_for(spec: HamiltonianSpec, grid: Grid | None, h: float | None) -> Grid:
    if grid is not None:
        return grid
    return torus_grid(h if h is not None else DEFAULT_H[spec.dim], spec.dim)


def effective_hamiltonian_at(spec_per: HamiltonianSpec, p, lambdas=DEFAULT_LAMBDAS, *,
                             grid: Grid | None = None, h: float | None = None) -> HbarEstimate:
    lam = check_schedule(lambdas)
    spec = spec_per.to_control_form()
    g = _grid_for(spec, grid, h)
    p = np.asarray(p, dtype=float).reshape(spec.dim)
    seq = []
    for l in lam:
        w, _ = solve_discounted_periodic(spec, p, l, g)
        seq.append(-l * w.mean())
    warning = None
    defect = monotone_defect(seq)
    if defect > MONOTONE_TOL:
        warning = f"-lam<w_lam> not monotone in lam (off by {defect:.2e})"
    return HbarEstimate(extrapolate(lam, seq), p, lam, seq, warning)


def analytic_hbar_1d(per: PeriodicCost, p) -> float | np.ndarray:
    """``Hbar`` for ``H = |p| - l_per`` in 1D: a plateau at ``-inf l_per``, then ``|p| - <l_per>``."""
    if per.dim != 1:
        raise ValueError("closed form is one-dimensional")
    p = np.asarray(p, dtype=float)
    thresh = per.mean - per.inf
    out = np.where(np.abs(p) <= thresh, -per.inf, np.abs(p) - per.mean)
    return float(out) if out.ndim == 0 else out


@dataclass
class EffectiveHamiltonianTable:
    """``Hbar`` on a uniform p-grid; in 2D the grid runs along the first axis (radial reading)."""

    dim: int
    p: np.ndarray
    values: np.ndarray
    p0: np.ndarray
    min_value: float
    plateau: tuple[float, float]
    convexity_violation: float
    lipschitz_violation: float
    coercivity_slope: float
    warnings: list[str] = field(default_factory=list)

    @property
    def s(self) -> np.ndarray:
        """Scalar abscissa of the table (``p`` in 1D, first component in 2D)."""
        return self.p[:, 0]

    def __call__(self, p) -> np.ndarray | float:
        """Interpolated ``Hbar``; affine extension past the ends; radial in 2D."""
        arr = np.asarray(p, dtype=float)
        if self.dim == 1:
            t = arr
        else:
            t = np.linalg.norm(arr.reshape(-1, self.dim), axis=1)
        out = _interp_ext(t, self.s, self.values)
        return float(out) if np.ndim(out) == 0 else out

    def slope_range(self) -> tuple[float, float]:
        d = np.diff(self.values) / np.diff(self.s)
        return float(d[0]), float(d[-1])

    def as_rows(self):
        return [(float(s), float(v)) for s, v in zip(self.s, self.values)]

    def diagnostics(self) -> dict:
        return {
            "p0": self.p0.tolist(),
            "min_value": self.min_value,
            "plateau": list(self.plateau),
            "convexity_violation": self.convexity_violation,
            "lipschitz_violation": self.lipschitz_violation,
            "coercivity_slope": self.coercivity_slope,
            "warnings": list(self.warnings),
        }


def _interp_ext(t, xs, ys):
    t = np.asarray(t, dtype=float)
    out = np.interp(t, xs, ys)
    lo = (ys[1] - ys[0]) / (xs[1] - xs[0])
    hi = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    out = np.where(t < xs[0], ys[0] + lo * (t - xs[0]), out)
    return np.where(t > xs[-1], ys[-1] + hi * (t - xs[-1]), out)


def locate_minimum(s: np.ndarray, v: np.ndarray, plateau_tol: float = PLATEAU_TOL) -> tuple[float, float, tuple[float, float]]:
    """Argmin and minimum of a sampled convex function.

    When several samples sit within ``plateau_tol`` of the minimum, the graph is
    treated as flat there and the plateau midpoint is returned; otherwise a
    parabola through the three samples around the discrete minimum refines it.
    """
    i = int(np.argmin(v))
    vmin = float(v[i])
    flat = np.flatnonzero(v <= vmin + plateau_tol)
    # the plateau is the connected run of near-minimal samples around i
    lo = hi = i
    while lo - 1 in flat:
        lo -= 1
    while hi + 1 in flat:
        hi += 1
    if hi > lo:
        return 0.5 * (s[lo] + s[hi]), vmin, (float(s[lo]), float(s[hi]))
    if 0 < i < len(s) - 1:
        x0, x1, x2 = s[i - 1], s[i], s[i + 1]
        y0, y1, y2 = v[i - 1], v[i], v[i + 1]
        denom = y0 - 2 * y1 + y2
        if denom > 0:
            step = 0.5 * (x2 - x0) / 2 * (y0 - y2) / denom
            xm = x1 + step
            ym = y1 - 0.125 * (y0 - y2) ** 2 / denom
            return float(xm), float(min(ym, vmin)), (float(xm), float(xm))
    return float(s[i]), vmin, (float(s[i]), float(s[i]))


def tabulate(spec_per: HamiltonianSpec, p_min: float, p_max: float, n_p: int,
             lambdas=DEFAULT_LAMBDAS, *, grid: Grid | None = None, h: float | None = None,
             jobs: int = 1) -> EffectiveHamiltonianTable:
    if n_p < 5:
        raise ValueError("need at least 5 table points")
    if p_max <= p_min:
        raise ValueError("empty p-range")
    lam = check_schedule(lambdas)
    spec = spec_per.to_control_form()
    g = _grid_for(spec, grid, h)
    s = np.linspace(p_min, p_max, n_p)
    ps = np.zeros((n_p, spec.dim))
    ps[:, 0] = s
    run = lambda p: effective_hamiltonian_at(spec, p, lam, grid=g)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            ests = list(ex.map(run, ps))
    else:
        ests = [run(p) for p in ps]
    vals = np.array([e.value for e in ests])
    warn = [f"p={e.p.tolist()}: {e.warning}" for e in ests if e.warning]
    for msg in warn:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    p0s, vmin, plateau = locate_minimum(s, vals)
    p0 = np.zeros(spec.dim)
    p0[0] = p0s
    conv = float(np.max(vals[1:-1] - 0.5 * (vals[:-2] + vals[2:]), initial=0.0))
    lip = float(np.max(np.abs(np.diff(vals)) - spec.max_speed * np.diff(s)))
    far = np.abs(s - p0s) >= 0.5 * np.max(np.abs(s - p0s))
    slope = float(np.min((vals[far] - vmin) / np.abs(s[far] - p0s)))
    return EffectiveHamiltonianTable(spec.dim, ps, vals, p0, vmin, plateau, conv, lip, slope, warn)


@dataclass
class PeriodicCorrector:
    field: GridField
    hbar: float
    residual: np.ndarray

    @property
    def residual_median(self) -> float:
        return float(np.median(np.abs(self.residual)))


def periodic_corrector(spec_per: HamiltonianSpec, p, lam: float = 1e-3, *, grid: Grid | None = None,
                       h: float | None = None) -> PeriodicCorrector:
    """Mean-zero corrector ``chi = w_lam - <w_lam>`` with its discrete cell residual."""
    spec = spec_per.to_control_form()
    g = _grid_for(spec, grid, h)
    p = np.asarray(p, dtype=float).reshape(spec.dim)
    w, _ = solve_discounted_periodic(spec, p, lam, g)
    hbar = -lam * w.mean()
    chi = w.values - w.mean()
    full = chi.reshape(g.shape)
    grads = [(np.roll(full, -1, axis=ax) - np.roll(full, 1, axis=ax)) / (2 * g.h) for ax in range(g.dim)]
    dchi = np.stack([gr.reshape(-1) for gr in grads], axis=1)
    ham = eval_hamiltonian(spec.without_defect(), g.coords, p[None, :] + dchi)
    field_ = GridField(g, chi, {**w.meta, "normalization": "mean zero", "hbar": hbar})
    return PeriodicCorrector(field_, hbar, np.asarray(ham) - hbar)
