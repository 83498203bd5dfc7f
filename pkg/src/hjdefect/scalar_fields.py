"""Running costs, kinetic parts, control sets and Hamiltonians.

A Hamiltonian is held either in separable form ``H(x, p) = K(p) - l(x)`` or in
control form ``H(x, p) = max_a (-p . f(x, a) - l(x, a))`` over a finite control
list.  Solvers only consume the control form; :meth:`HamiltonianSpec.to_control_form`
builds it from the separable data through a numerical Legendre transform.

Costs are plain vectorized callables on point arrays of shape ``(n, d)``.
Bounds, means and infima are obtained by dense sampling with local refinement;
they are the independent oracle used by the closed-form formulas elsewhere.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import optimize

Evaluator = Callable[[np.ndarray], np.ndarray]

SAMPLES_PER_PERIOD = 10_000
SAMPLES_PER_PERIOD_2D = 200


class DomainError(ValueError):
    """Non-finite or out-of-domain input to an evaluator."""


def as_points(x, dim: int) -> np.ndarray:
    """Coerce scalars, 1D arrays or ``(n, d)`` arrays to shape ``(n, d)``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1) if dim == 1 else None
        if arr is None:
            raise DomainError("scalar point given for a multi-dimensional field")
        return arr
    if arr.ndim == 1:
        if dim == 1:
            return arr.reshape(-1, 1)
        if arr.shape[0] == dim:
            return arr.reshape(1, dim)
        raise DomainError(f"cannot read shape {arr.shape} as points in dimension {dim}")
    if arr.shape[-1] != dim:
        raise DomainError(f"last axis {arr.shape[-1]} does not match dimension {dim}")
    return arr.reshape(-1, dim)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite input")


def _refine_min_1d(func: Callable[[float], float], y0: float, dy: float) -> tuple[float, float]:
    res = optimize.minimize_scalar(
        func, bounds=(y0 - dy, y0 + dy), method="bounded", options={"xatol": 1e-12}
    )
    if res.fun < func(y0):
        return float(res.x), float(res.fun)
    return y0, float(func(y0))


def _refine_min_2d(func: Callable[[np.ndarray], float], y0: np.ndarray) -> tuple[np.ndarray, float]:
    res = optimize.minimize(
        func, y0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000}
    )
    if res.fun < func(y0):
        return np.asarray(res.x), float(res.fun)
    return y0, float(func(y0))


def _sample_extremum(evaluate: Evaluator, dim: int, lo: float, hi: float, n: int, sign: float):
    """Dense-sampled minimum of ``sign * evaluate`` on ``[lo, hi]^dim`` with refinement."""
    if dim == 1:
        ys = np.linspace(lo, hi, n + 1)
        vals = sign * evaluate(ys.reshape(-1, 1))
        i = int(np.argmin(vals))
        f = lambda t: float(sign * evaluate(np.array([[t]]))[0])
        y, v = _refine_min_1d(f, ys[i], (hi - lo) / n)
        y = min(max(y, lo), hi)
        return np.array([y]), sign * min(v, vals[i])
    g = np.linspace(lo, hi, n + 1)
    yy = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    vals = sign * evaluate(yy)
    i = int(np.argmin(vals))
    f = lambda t: float(sign * evaluate(np.asarray(t).reshape(1, 2))[0])
    y, v = _refine_min_2d(f, yy[i])
    return y, sign * min(v, vals[i])


# --------------------------------------------------------------------------
# periodic and defect costs


@dataclass(frozen=True, eq=False)
class PeriodicCost:
    """1-periodic running cost ``l_per`` on R^d, d in {1, 2}."""

    dim: int
    func: Evaluator = field(repr=False)
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only d = 1 or d = 2 is supported")

    def __call__(self, y) -> np.ndarray:
        pts = as_points(y, self.dim)
        _check_finite(pts)
        return np.asarray(self.func(pts), dtype=float).reshape(-1)

    @cached_property
    def _grid_values(self) -> np.ndarray:
        if self.dim == 1:
            ys = np.arange(SAMPLES_PER_PERIOD) / SAMPLES_PER_PERIOD
            return self(ys)
        g = np.arange(SAMPLES_PER_PERIOD_2D) / SAMPLES_PER_PERIOD_2D
        yy = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
        return self(yy)

    @cached_property
    def mean(self) -> float:
        # uniform samples over a period: trapezoid rule, spectrally accurate for smooth data
        return float(np.mean(self._grid_values))

    @cached_property
    def argmin(self) -> np.ndarray:
        n = SAMPLES_PER_PERIOD if self.dim == 1 else SAMPLES_PER_PERIOD_2D
        y, _ = _sample_extremum(self, self.dim, 0.0, 1.0, n, 1.0)
        return y

    @cached_property
    def inf(self) -> float:
        n = SAMPLES_PER_PERIOD if self.dim == 1 else SAMPLES_PER_PERIOD_2D
        _, v = _sample_extremum(self, self.dim, 0.0, 1.0, n, 1.0)
        return float(v)

    @cached_property
    def sup(self) -> float:
        n = SAMPLES_PER_PERIOD if self.dim == 1 else SAMPLES_PER_PERIOD_2D
        _, v = _sample_extremum(self, self.dim, 0.0, 1.0, n, -1.0)
        return float(v)

    @property
    def bound(self) -> float:
        """``M_lper = sup |l_per|``."""
        return max(abs(self.inf), abs(self.sup))

    @cached_property
    def lipschitz(self) -> float:
        vals = self._grid_values
        if self.dim == 1:
            n = SAMPLES_PER_PERIOD
            return float(np.max(np.abs(np.diff(np.append(vals, vals[0])))) * n)
        n = SAMPLES_PER_PERIOD_2D
        v = vals.reshape(n, n)
        gx = np.abs(np.roll(v, -1, axis=0) - v)
        gy = np.abs(np.roll(v, -1, axis=1) - v)
        return float(max(gx.max(), gy.max()) * n)

    @property
    def is_constant(self) -> bool:
        return self.sup - self.inf < 1e-12


@dataclass(frozen=True, eq=False)
class DefectCost:
    """Compactly supported perturbation ``l_0``, vanishing for ``|y| > radius``."""

    dim: int
    func: Evaluator = field(repr=False)
    radius: float = 0.5
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, y) -> np.ndarray:
        pts = as_points(y, self.dim)
        _check_finite(pts)
        out = np.asarray(self.func(pts), dtype=float).reshape(-1)
        r = np.linalg.norm(pts, axis=1)
        return np.where(r > self.radius, 0.0, out)

    def _radial_samples(self, n: int = 4001) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.linspace(0.0, self.radius, n)
        if self.dim == 1:
            plus = self(r)
            minus = self(-r)
        else:
            plus = self(np.stack([r, np.zeros_like(r)], axis=1))
            minus = self(np.stack([-r, np.zeros_like(r)], axis=1))
        return r, plus, minus

    @cached_property
    def value_at_origin(self) -> float:
        return float(self(np.zeros(self.dim))[0])

    @cached_property
    def inf(self) -> float:
        n = 4 * SAMPLES_PER_PERIOD if self.dim == 1 else SAMPLES_PER_PERIOD_2D
        _, v = _sample_extremum(self, self.dim, -self.radius, self.radius, n, 1.0)
        return float(min(v, 0.0))

    @cached_property
    def sup(self) -> float:
        n = 4 * SAMPLES_PER_PERIOD if self.dim == 1 else SAMPLES_PER_PERIOD_2D
        _, v = _sample_extremum(self, self.dim, -self.radius, self.radius, n, -1.0)
        return float(max(v, 0.0))

    @property
    def is_zero(self) -> bool:
        return self.inf > -1e-14 and self.sup < 1e-14

    @cached_property
    def nonpositive(self) -> bool:
        return self.sup <= 1e-14

    @cached_property
    def nonnegative(self) -> bool:
        return self.inf >= -1e-14

    @cached_property
    def even(self) -> bool:
        _, plus, minus = self._radial_samples()
        if self.dim == 2:
            r = np.linspace(0.0, self.radius, 401)
            th = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
            pts = (r[:, None, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)[None]).reshape(-1, 2)
            return bool(np.max(np.abs(self(pts) - self(-pts))) < 1e-12)
        return bool(np.max(np.abs(plus - minus)) < 1e-12)

    @cached_property
    def radial(self) -> bool:
        if self.dim == 1:
            return self.even
        r = np.linspace(0.0, self.radius, 401)
        th = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
        pts = r[:, None, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)[None]
        vals = self(pts.reshape(-1, 2)).reshape(len(r), len(th))
        return bool(np.max(np.ptp(vals, axis=1)) < 1e-12)

    def _monotone_from_origin(self, increasing: bool) -> bool:
        _, plus, minus = self._radial_samples()
        tol = 1e-13
        for branch in (plus, minus):
            d = np.diff(branch)
            if increasing and np.any(d < -tol):
                return False
            if not increasing and np.any(d > tol):
                return False
        return True

    @cached_property
    def single_min_at_origin(self) -> bool:
        """``l_0(0) = inf l_0`` with ``l_0`` monotone on each side of the origin."""
        return (
            self.value_at_origin < 0
            and abs(self.value_at_origin - self.inf) < 1e-9
            and self._monotone_from_origin(increasing=True)
        )

    @cached_property
    def single_max_at_origin(self) -> bool:
        return (
            self.value_at_origin > 0
            and abs(self.value_at_origin - self.sup) < 1e-9
            and self._monotone_from_origin(increasing=False)
        )


# --------------------------------------------------------------------------
# builders


def zero_cost(dim: int = 1) -> PeriodicCost:
    return PeriodicCost(dim, lambda y: np.zeros(len(y)), name="zero")


def constant_cost(c: float, dim: int = 1) -> PeriodicCost:
    return PeriodicCost(dim, lambda y: np.full(len(y), float(c)), name="const", params={"value": c})


def sin_cost(amplitude: float = 1.0, dim: int = 1) -> PeriodicCost:
    """``amplitude * sum_i sin(2 pi y_i)``."""
    return PeriodicCost(
        dim,
        lambda y: amplitude * np.sum(np.sin(2 * np.pi * y), axis=1),
        name="sin",
        params={"amplitude": amplitude},
    )


def table_periodic(ys, values) -> PeriodicCost:
    """Periodic linear interpolant of samples ``(y, value)`` on one period."""
    ys = np.asarray(ys, dtype=float)
    vals = np.asarray(values, dtype=float)
    order = np.argsort(np.mod(ys, 1.0))
    yp, vp = np.mod(ys, 1.0)[order], vals[order]
    return PeriodicCost(
        1, lambda y: np.interp(np.mod(y[:, 0], 1.0), yp, vp, period=1.0), name="table"
    )


def zero_defect(dim: int = 1) -> DefectCost:
    return DefectCost(dim, lambda y: np.zeros(len(y)), radius=0.5, name="zero")


def cos2_bump(depth: float = 1.0, radius: float = 0.5, dim: int = 1) -> DefectCost:
    """``-depth * cos^2(pi |y| / (2 radius))`` on ``|y| <= radius``.

    With ``radius = 1/2`` this is ``-depth * cos^2(pi y)``: C^1, even, with a single
    minimum ``-depth`` at the origin.  A negative depth gives an upward bump.
    """

    def f(y):
        r = np.linalg.norm(y, axis=1)
        return -depth * np.cos(np.pi * r / (2 * radius)) ** 2

    return DefectCost(dim, f, radius=radius, name="cos2bump", params={"depth": depth, "radius": radius})


def table_defect(ys, values) -> DefectCost:
    ys = np.asarray(ys, dtype=float)
    vals = np.asarray(values, dtype=float)
    order = np.argsort(ys)
    yp, vp = ys[order], vals[order]
    radius = float(np.max(np.abs(yp[np.abs(vp) > 0]))) if np.any(vp != 0) else 0.5
    return DefectCost(1, lambda y: np.interp(y[:, 0], yp, vp, left=0.0, right=0.0), radius=radius, name="table")


def read_table_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column CSV with header ``y,value``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"y", "value"}:
        raise ValueError(f"{path}: expected columns 'y,value'")
    return np.array([float(r["y"]) for r in rows]), np.array([float(r["value"]) for r in rows])


PERIODIC_KINDS = {"zero", "const", "sin", "table"}
DEFECT_KINDS = {"zero", "cos2bump", "table"}


def periodic_from_config(cfg: dict, dim: int = 1) -> PeriodicCost:
    kind = cfg.get("kind")
    if kind == "zero":
        return zero_cost(dim)
    if kind == "const":
        return constant_cost(float(cfg.get("value", 0.0)), dim)
    if kind == "sin":
        return sin_cost(float(cfg.get("amplitude", 1.0)), dim)
    if kind == "table":
        if dim != 1:
            raise ValueError("tabulated costs are one-dimensional")
        return table_periodic(*read_table_csv(cfg["path"]))
    raise ValueError(f"unknown periodic cost kind {kind!r}")


def defect_from_config(cfg: dict, dim: int = 1) -> DefectCost:
    kind = cfg.get("kind")
    if kind == "zero":
        return zero_defect(dim)
    if kind == "cos2bump":
        return cos2_bump(float(cfg.get("depth", 1.0)), float(cfg.get("radius", 0.5)), dim)
    if kind == "table":
        if dim != 1:
            raise ValueError("tabulated costs are one-dimensional")
        return table_defect(*read_table_csv(cfg["path"]))
    raise ValueError(f"unknown defect kind {kind!r}")


def composite_inf(per: PeriodicCost, defect: DefectCost | None) -> float:
    """``inf (l_per + l_0)`` by dense sampling; only the defect support can lower it."""
    if defect is None or defect.is_zero:
        return per.inf
    f = lambda y: per(y) + defect(y)
    if per.dim == 1:
        n = int(2 * defect.radius * SAMPLES_PER_PERIOD) + 1
    else:
        n = int(2 * defect.radius * SAMPLES_PER_PERIOD_2D) * 2 + 1
    _, v = _sample_extremum(f, per.dim, -defect.radius, defect.radius, n, 1.0)
    return float(min(per.inf, v))


def is_downward(per: PeriodicCost, defect: DefectCost | None, tol: float = 1e-6) -> bool:
    """``inf (l_per + l_0) < inf l_per`` (the defect lowers the environment)."""
    return composite_inf(per, defect) < per.inf - tol


# --------------------------------------------------------------------------
# kinetic parts and control sets


@dataclass(frozen=True, eq=False)
class Kinetic:
    """Convex kinetic part ``K(p)`` with Lipschitz constant ``lipschitz``."""

    dim: int
    func: Evaluator = field(repr=False)
    lipschitz: float = 1.0
    name: str = "custom"
    radial: bool = True

    def __call__(self, p) -> np.ndarray:
        pts = as_points(p, self.dim)
        _check_finite(pts)
        return np.asarray(self.func(pts), dtype=float).reshape(-1)


def norm_kinetic(dim: int = 1) -> Kinetic:
    return Kinetic(dim, lambda p: np.linalg.norm(p, axis=1), lipschitz=1.0, name="norm")


def relativistic_kinetic(dim: int = 1) -> Kinetic:
    """``sqrt(1 + |p|^2) - 1``: C^2, convex, radial, 1-Lipschitz, minimum 0 at p = 0."""
    return Kinetic(
        dim, lambda p: np.sqrt(1.0 + np.sum(p * p, axis=1)) - 1.0, lipschitz=1.0, name="relativistic"
    )


def table_kinetic(ps, values, dim: int = 1) -> Kinetic:
    """Piecewise-linear interpolant of a tabulated convex function.

    In 1D the table is read along the line and extended affinely with the end
    slopes.  For ``dim > 1`` the table is read as a function of ``|p|``.
    """
    ps = np.asarray(ps, dtype=float)
    vals = np.asarray(values, dtype=float)
    slope_lo = (vals[1] - vals[0]) / (ps[1] - ps[0])
    slope_hi = (vals[-1] - vals[-2]) / (ps[-1] - ps[-2])

    def interp(t):
        out = np.interp(t, ps, vals)
        out = np.where(t < ps[0], vals[0] + slope_lo * (t - ps[0]), out)
        return np.where(t > ps[-1], vals[-1] + slope_hi * (t - ps[-1]), out)

    lip = float(np.max(np.abs(np.diff(vals) / np.diff(ps))))
    if dim == 1:
        return Kinetic(1, lambda p: interp(p[:, 0]), lipschitz=lip, name="table", radial=False)
    return Kinetic(dim, lambda p: interp(np.linalg.norm(p, axis=1)), lipschitz=lip, name="table-radial")


KINETIC_KINDS = {"norm": norm_kinetic, "relativistic": relativistic_kinetic}


@dataclass(frozen=True, eq=False)
class ControlSet:
    """Finite control list ``a_j`` in the ball of radius ``max_speed``; contains 0."""

    dim: int
    vectors: np.ndarray = field(repr=False)
    max_speed: float = 1.0
    n_directions: int = 2
    n_speeds: int = 21

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float).reshape(-1, self.dim)
        object.__setattr__(self, "vectors", v)
        if not np.any(np.all(np.abs(v) < 1e-15, axis=1)):
            raise ValueError("control set must contain a = 0")
        if np.max(np.linalg.norm(v, axis=1)) > self.max_speed * (1 + 1e-12):
            raise ValueError("control outside the ball of radius max_speed")

    def __len__(self):
        return len(self.vectors)

    @cached_property
    def inner_radius(self) -> float:
        """Radius ``r_f`` of the largest centered ball inside the convex hull."""
        if self.dim == 1:
            return float(min(self.vectors.max(), -self.vectors.min()))
        th = np.linspace(0.0, 2 * np.pi, 720, endpoint=False)
        e = np.stack([np.cos(th), np.sin(th)], axis=1)
        return float(np.min(np.max(e @ self.vectors.T, axis=1)))


def control_set(dim: int = 1, n_speeds: int | None = None, n_directions: int = 32,
                max_speed: float = 1.0) -> ControlSet:
    """Discretize ``|a| <= max_speed``: 21 signed speeds in 1D, 32 x 11 in 2D."""
    if dim == 1:
        n = 21 if n_speeds is None else n_speeds
        if n % 2 == 0:
            n += 1
        return ControlSet(1, np.linspace(-max_speed, max_speed, n), max_speed, 2, n)
    n = 11 if n_speeds is None else n_speeds
    speeds = np.linspace(0.0, max_speed, n)[1:]
    th = 2 * np.pi * np.arange(n_directions) / n_directions
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    vecs = (speeds[:, None, None] * dirs[None]).reshape(-1, 2)
    vecs = np.vstack([np.zeros((1, 2)), vecs])
    return ControlSet(2, vecs, max_speed, n_directions, n)


def legendre_cost(kinetic: Kinetic, controls: ControlSet, p_max: float = 20.0,
                  n_p: int = 40_001) -> np.ndarray:
    """Control cost ``lbar(a) = sup_p (-p . a - K(p))`` sampled on a p-grid.

    In 1D the sup runs over the grid ``linspace(-p_max, p_max, n_p)``; for
    ``dim > 1`` the kinetic part must be radial and the sup is taken along the
    ray ``p = -s a/|a|``, ``s in linspace(0, p_max, n_p)``.  With this cost,
    ``max_a (-p . a - lbar(a))`` reproduces ``K(p)`` up to grid error.
    """
    if controls.dim != kinetic.dim:
        raise ValueError("kinetic part and controls differ in dimension")
    a = controls.vectors
    if kinetic.dim == 1:
        p = np.linspace(-p_max, p_max, n_p)
        k = kinetic(p)
        if not np.all(np.isfinite(k)):
            raise DomainError("kinetic part is not finite on the p-grid")
        imin = int(np.argmin(k))
        if imin in (0, n_p - 1):
            raise ValueError("kinetic part is not bounded below on the p-grid")
        out = np.empty(len(a))
        for j, aj in enumerate(a[:, 0]):
            out[j] = np.max(-p * aj - k)
        return out
    if not kinetic.radial:
        raise ValueError("multi-dimensional Legendre transform needs a radial kinetic part")
    s = np.linspace(0.0, p_max, n_p)
    e1 = np.zeros((n_p, kinetic.dim))
    e1[:, 0] = s
    k = kinetic(e1)
    if int(np.argmin(k)) == n_p - 1:
        raise ValueError("kinetic part is not bounded below on the p-grid")
    speed = np.linalg.norm(a, axis=1)
    return np.array([np.max(s * sp - k) for sp in speed])


# --------------------------------------------------------------------------
# Hamiltonians


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """Problem data: environment ``l_per``, optional defect ``l_0`` and the p-part.

    ``variant == "separable"``: ``H(x, p) = K(p) - l_per(x) - l_0(x)``.
    ``variant == "control"``: ``H(x, p) = max_j (-p . f(x, a_j) - l(x, a_j))`` with
    ``l(x, a) = l_per(x) + l_0(x) + control_cost(a) + shift . f(x, a)`` and
    ``f(x, a) = a`` unless ``dynamics`` is given.
    """

    periodic: PeriodicCost
    defect: DefectCost | None = None
    kinetic: Kinetic | None = None
    controls: ControlSet | None = None
    control_cost: np.ndarray | None = field(default=None, repr=False)
    dynamics: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    shift: np.ndarray | None = None

    def __post_init__(self):
        if self.control_cost is None and self.kinetic is None:
            raise ValueError("need a kinetic part or a control-form cost")
        if self.control_cost is not None:
            if self.controls is None:
                raise ValueError("control-form cost without a control set")
            cc = np.asarray(self.control_cost, dtype=float).reshape(-1)
            if len(cc) != len(self.controls):
                raise ValueError("control cost length differs from the control set")
            object.__setattr__(self, "control_cost", cc)
        if self.defect is not None and self.defect.dim != self.periodic.dim:
            raise ValueError("defect and environment differ in dimension")
        if self.shift is not None:
            object.__setattr__(self, "shift", np.asarray(self.shift, dtype=float).reshape(self.dim))

    @property
    def dim(self) -> int:
        return self.periodic.dim

    @property
    def variant(self) -> str:
        return "control" if self.control_cost is not None else "separable"

    @property
    def max_speed(self) -> float:
        if self.controls is not None:
            return self.controls.max_speed
        return self.kinetic.lipschitz

    def spatial_cost(self, x) -> np.ndarray:
        """``l_per(x) + l_0(x)``."""
        pts = as_points(x, self.dim)
        out = self.periodic(pts)
        if self.defect is not None:
            out = out + self.defect(pts)
        return out

    def velocity(self, x: np.ndarray, j: int) -> np.ndarray:
        """``f(x, a_j)`` for points ``x`` of shape ``(n, d)``."""
        a = self.controls.vectors[j]
        if self.dynamics is None:
            return np.broadcast_to(a, x.shape)
        return np.asarray(self.dynamics(x, a), dtype=float).reshape(x.shape)

    def control_part(self, x: np.ndarray, j: int) -> np.ndarray:
        """``control_cost(a_j) + shift . f(x, a_j)``: the cost excluding ``l_per + l_0``."""
        out = np.full(len(x), self.control_cost[j])
        if self.shift is not None:
            out = out + self.velocity(x, j) @ self.shift
        return out

    def running_cost(self, x: np.ndarray, j: int) -> np.ndarray:
        return self.spatial_cost(x) + self.control_part(x, j)

    def to_control_form(self, controls: ControlSet | None = None) -> "HamiltonianSpec":
        if self.variant == "control":
            return self
        if controls is None:
            controls = control_set(self.dim, max_speed=self.kinetic.lipschitz)
        return replace(self, controls=controls, control_cost=legendre_cost(self.kinetic, controls))

    def without_defect(self) -> "HamiltonianSpec":
        return replace(self, defect=None)

    def with_costs(self, periodic: PeriodicCost | None = None, defect: DefectCost | None = None) -> "HamiltonianSpec":
        return replace(self, periodic=periodic or self.periodic, defect=defect)

    @cached_property
    def cost_range(self) -> tuple[float, float]:
        """``(min l, max l)`` over sampled space and all controls."""
        lo = self.periodic.inf + (self.defect.inf if self.defect is not None else 0.0)
        lo = min(composite_inf(self.periodic, self.defect), lo) if self.defect is not None else lo
        hi = self.periodic.sup + (self.defect.sup if self.defect is not None else 0.0)
        if self.variant == "control":
            x = _witness_points(self.dim, 256, np.random.default_rng(0), self.defect)
            extra = np.stack([self.control_part(x, j) for j in range(len(self.controls))], axis=1)
            lo += float(extra.min())
            hi += float(extra.max())
        return float(lo), float(hi)

    @property
    def cost_bound(self) -> float:
        """``M_l = sup |l(x, a)|``."""
        lo, hi = self.cost_range
        return max(abs(lo), abs(hi))


def eval_hamiltonian(spec: HamiltonianSpec, x, p) -> np.ndarray | float:
    """``H(x, p)``; vectorized over matching point/covector arrays."""
    scalar = np.ndim(p) == 0 or (np.ndim(p) == 1 and spec.dim > 1)
    xs = as_points(x, spec.dim)
    ps = as_points(p, spec.dim)
    _check_finite(xs, ps)
    if len(xs) == 1 and len(ps) > 1:
        xs = np.repeat(xs, len(ps), axis=0)
    if len(ps) == 1 and len(xs) > 1:
        ps = np.repeat(ps, len(xs), axis=0)
    if spec.variant == "separable":
        out = spec.kinetic(ps) - spec.spatial_cost(xs)
    else:
        base = spec.spatial_cost(xs)
        out = np.full(len(xs), -np.inf)
        for j in range(len(spec.controls)):
            v = spec.velocity(xs, j)
            val = -np.sum(ps * v, axis=1) - base - spec.control_part(xs, j)
            out = np.maximum(out, val)
    return float(out[0]) if scalar and len(out) == 1 else out


def shift_hamiltonian(spec: HamiltonianSpec, p0) -> HamiltonianSpec:
    """``H~(x, p) = H(x, p + p0)`` through the cost ``l + p0 . f``."""
    if spec.variant != "control":
        raise ValueError("shift_hamiltonian needs the control form")
    p0 = np.asarray(p0, dtype=float).reshape(spec.dim)
    _check_finite(p0)
    total = p0 if spec.shift is None else spec.shift + p0
    return replace(spec, shift=total)


def _witness_points(dim, n, rng, defect):
    r = 0.5 if defect is None else defect.radius
    pts = rng.uniform(-2.0, 2.0, size=(n, dim))
    pts[: n // 2] *= r  # half inside the defect support
    return pts


def structure_witness(spec: HamiltonianSpec, n: int = 200, seed: int = 0) -> dict:
    """Sampled checks of coercivity, p-Lipschitz bound and convexity in p.

    Returns the constants used (``r_f``, ``M_l``, ``M_f``) and the largest
    violation of each inequality (``<= 0`` means satisfied on the sample).
    """
    spec_c = spec.to_control_form()
    rng = np.random.default_rng(seed)
    x = _witness_points(spec.dim, n, rng, spec.defect)
    p = rng.uniform(-4.0, 4.0, size=(n, spec.dim))
    q = rng.uniform(-4.0, 4.0, size=(n, spec.dim))
    hp = eval_hamiltonian(spec_c, x, p)
    hq = eval_hamiltonian(spec_c, x, q)
    hm = eval_hamiltonian(spec_c, x, 0.5 * (p + q))
    r_f = spec_c.controls.inner_radius
    m_f = spec_c.controls.max_speed
    m_l = spec_c.cost_bound
    return {
        "r_f": r_f,
        "M_l": m_l,
        "M_f": m_f,
        "coercivity_violation": float(np.max(r_f * np.linalg.norm(p, axis=1) - m_l - hp)),
        "lipschitz_violation": float(np.max(np.abs(hp - hq) - m_f * np.linalg.norm(p - q, axis=1))),
        "convexity_violation": float(np.max(hm - 0.5 * (hp + hq))),
    }
