"""Ergodic constant of a localized defect.

``E^R`` is the vanishing-discount limit of ``-lam w^{lam,R}`` for the problem
constrained to the ball ``B_R``; ``E`` is its limit as ``R`` grows.  The value
is read as an average over the nodes of the defect ball, which has the same
limit as the value at the origin but less scheme noise.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from hjdefect.effective_ham import DEFAULT_LAMBDAS, check_schedule, extrapolate, monotone_defect
from hjdefect.hj_core import GridField, ball_grid, solve_discounted_constrained
from hjdefect.scalar_fields import DefectCost, HamiltonianSpec, PeriodicCost, composite_inf, is_downward

DEFAULT_H = {1: 1 / 200, 2: 0.05}
SPREAD_TOL = 5e-2
R_CONVERGENCE_TOL = 1e-2


@dataclass
class TruncatedEstimate:
    R: float
    lambdas: tuple[float, ...]
    sequence: list[float]
    value: float
    spread: float
    warning: str | None = None
    field: GridField | None = field(default=None, repr=False)

    def __float__(self) -> float:
        return self.value


def _core_mask(coords: np.ndarray, r0: float, h: float) -> np.ndarray:
    r = np.linalg.norm(coords, axis=1)
    mask = r <= r0 + 1e-12
    if not np.any(mask):
        mask = r <= np.min(r) + 0.5 * h
    return mask


def ergodic_constant_truncated(spec: HamiltonianSpec, R: float, lambdas=DEFAULT_LAMBDAS, *,
                               h: float | None = None, keep_field: bool = False) -> TruncatedEstimate:
    """``E^R`` by extrapolating ``-lam <w^{lam,R}>_{B_R0}`` to ``lam = 0``."""
    lam = check_schedule(lambdas)
    spec = spec.to_control_form()
    r0 = spec.defect.radius if spec.defect is not None else 0.0
    if R <= r0:
        raise ValueError(f"radius {R} must exceed the defect radius {r0}")
    grid = ball_grid(R, h if h is not None else DEFAULT_H[spec.dim], spec.dim)
    mask = _core_mask(grid.coords, r0, grid.h)
    seq = []
    last = None
    for l in lam:
        w, _ = solve_discounted_constrained(spec, l, R, grid)
        seq.append(float(np.mean(-l * w.values[mask])))
        last = w
    value = extrapolate(lam, seq)
    spread = abs(value - seq[-1])
    warning = None
    if spread > SPREAD_TOL:
        warning = f"extrapolation spread {spread:.3e} exceeds {SPREAD_TOL}"
    elif monotone_defect(seq) > 1e-3:
        warning = "-lam w^{lam,R} not monotone in lam"
    return TruncatedEstimate(R, lam, seq, value, spread, warning, last if keep_field else None)


@dataclass
class ErgodicEstimate:
    R_sweep: list[float]
    truncated: list[TruncatedEstimate]
    E_R: list[float]
    E: float
    converged: bool
    monotonicity_violation: float
    warnings: list[str] = field(default_factory=list)

    def __float__(self) -> float:
        return self.E

    def as_dict(self) -> dict:
        return {
            "R_sweep": self.R_sweep,
            "E_R": self.E_R,
            "E": self.E,
            "converged": self.converged,
            "monotonicity_violation": self.monotonicity_violation,
            "sequences": {str(t.R): t.sequence for t in self.truncated},
            "lambdas": list(self.truncated[0].lambdas),
            "warnings": self.warnings,
        }


def monotonicity_violation(E_R) -> float:
    """``max_{R1 > R2} (E^{R2} - E^{R1})^+`` over an increasing radius sweep."""
    e = np.asarray(E_R, dtype=float)
    worst = 0.0
    for i in range(len(e)):
        worst = max(worst, float(np.max(e[:i] - e[i], initial=0.0)))
    return worst


def ergodic_constant(spec: HamiltonianSpec, R_sweep=(2.0, 4.0, 8.0), lambdas=DEFAULT_LAMBDAS, *,
                     h: float | None = None, jobs: int = 1) -> ErgodicEstimate:
    radii = [float(r) for r in R_sweep]
    if len(radii) < 3 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radius sweep must be increasing with at least 3 entries")
    spec = spec.to_control_form()
    run = lambda R: ergodic_constant_truncated(spec, R, lambdas, h=h)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            trunc = list(ex.map(run, radii))
    else:
        trunc = [run(R) for R in radii]
    E_R = [t.value for t in trunc]
    diffs = np.abs(np.diff(E_R))
    converged = bool(diffs[-1] <= R_CONVERGENCE_TOL)
    warns = [f"R={t.R}: {t.warning}" for t in trunc if t.warning]
    if not converged:
        warns.append(f"E^R not converged in R: last change {diffs[-1]:.3e}")
    return ErgodicEstimate(radii, trunc, E_R, E_R[-1], converged, monotonicity_violation(E_R), warns)


def analytic_E_1d(per: PeriodicCost, defect: DefectCost) -> float:
    """``E = -inf (l_per + l_0)`` for a downward defect in 1D with ``H = |p| - l``."""
    if per.dim != 1:
        raise ValueError("closed form is one-dimensional")
    if not is_downward(per, defect):
        raise ValueError("closed form holds only for a downward defect: inf(l_per + l_0) < inf l_per")
    return -composite_inf(per, defect)


def analytic_E_radial(hbar0: float, defect: DefectCost) -> float:
    """``E = Hbar(0) - l_0(0)`` in the radially symmetric setting."""
    if defect is None or defect.is_zero:
        return float(hbar0)
    return float(hbar0) - defect.value_at_origin
