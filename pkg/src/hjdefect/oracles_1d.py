"""Closed-form one-dimensional solutions used as ground truth.

Setting: ``d = 1``, ``H(y, p) = |p| - l(y)``, discount ``alpha = 1`` unless
stated.  Every evaluator integrates the explicit trajectory representation
with adaptive quadrature; integrals of compactly supported defects saturate
outside the support, so far-field values are cached constants.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from hjdefect.scalar_fields import DefectCost, PeriodicCost

QUAD_TOL = 1e-10


def _quad(f: Callable[[float], float], a: float, b: float, points=None) -> float:
    if a == b:
        return 0.0
    pts = None
    if points is not None:
        lo, hi = min(a, b), max(a, b)
        pts = [p for p in points if lo < p < hi] or None
    val, _ = integrate.quad(f, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200, points=pts)
    return float(val)


@dataclass
class ClosedForm1D:
    """A closed-form evaluator with its derivative and parameter record."""

    value: Callable[[float], float] = field(repr=False)
    slope: Callable[[float], float] = field(repr=False)
    params: dict = field(default_factory=dict)
    tol: float = QUAD_TOL
    vector: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        flat = arr.reshape(-1)
        if self.vector is not None:
            out = self.vector(flat)
        else:
            out = np.array([self.value(float(t)) for t in flat])
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def derivative(self, x):
        arr = np.asarray(x, dtype=float)
        out = np.array([self.slope(float(t)) for t in arr.reshape(-1)])
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def _l0(defect: DefectCost) -> Callable[[float], float]:
    return lambda y: float(defect(np.array([[y]]))[0])


def _require(flag: bool, what: str):
    if not flag:
        raise ValueError(f"closed form requires {what}")


def flat_solution(defect: DefectCost, eps: float) -> ClosedForm1D:
    """``u_eps`` for ``u + |u'| = l0(x / eps)`` on the line, downward single-minimum defect.

    ``u(x) = e^{-|x|} (l0(0) + int_0^{|x|} e^t l0(+-t/eps) dt)``: move to the
    origin at unit speed and stay.
    """
    _require(defect.dim == 1, "a one-dimensional defect")
    _require(defect.single_min_at_origin, "a defect with a single minimum at the origin")
    if eps <= 0:
        raise ValueError("eps must be positive")
    l0 = _l0(defect)
    a0 = defect.value_at_origin
    edge = eps * defect.radius

    def integral(x: float) -> float:
        s = math.copysign(1.0, x) if x != 0 else 1.0
        top = min(abs(x), edge)
        return _quad(lambda t: math.exp(t) * l0(s * t / eps), 0.0, top)

    sat = {1.0: integral(edge), -1.0: integral(-edge)}

    def value(x: float) -> float:
        r = abs(x)
        inner = sat[math.copysign(1.0, x)] if r >= edge else integral(x)
        return math.exp(-r) * (a0 + inner)

    def slope(x: float) -> float:
        # u' = sign(x) (l0(x/eps) - u)
        if x == 0:
            return 0.0
        return math.copysign(1.0, x) * (l0(x / eps) - value(x))

    def vector(xs: np.ndarray) -> np.ndarray:
        # outside the support the integral has saturated
        out = np.empty(len(xs))
        far = np.abs(xs) >= edge
        sides = np.where(xs[far] >= 0, sat[1.0], sat[-1.0])
        out[far] = np.exp(-np.abs(xs[far])) * (a0 + sides)
        for i in np.flatnonzero(~far):
            out[i] = value(float(xs[i]))
        return out

    return ClosedForm1D(value, slope, {"eps": eps, "defect": defect.name, "alpha": 1.0}, vector=vector)


def u_eps_flat(defect: DefectCost, eps: float, x):
    """Flat-environment single-defect solution at ``x`` (scalar or array)."""
    return flat_solution(defect, eps)(x)


def upward_solution(defect: DefectCost, eps: float) -> ClosedForm1D:
    """``u_eps`` for a nonnegative even bump with a single maximum: run away from it.

    ``u(x) = int_0^inf e^{-s} l0((x + sign(x) s) / eps) ds``, identically 0 outside the support.
    """
    _require(defect.dim == 1, "a one-dimensional defect")
    _require(defect.nonnegative and defect.even, "a nonnegative even defect")
    _require(defect.single_max_at_origin or defect.is_zero, "a defect with a single maximum at the origin")
    l0 = _l0(defect)
    edge = eps * defect.radius

    def value(x: float) -> float:
        r = abs(x)
        if r >= edge or defect.is_zero:
            return 0.0
        return _quad(lambda s: math.exp(-s) * l0((r + s) / eps), 0.0, edge - r)

    def slope(x: float) -> float:
        if x == 0 or abs(x) >= edge:
            return 0.0
        return math.copysign(1.0, x) * (value(x) - l0(x / eps))

    return ClosedForm1D(value, slope, {"eps": eps, "defect": defect.name, "alpha": 1.0})


def u_eps_flat_upward(defect: DefectCost, eps: float, x):
    return upward_solution(defect, eps)(x)


class WLambda(NamedTuple):
    value: float
    normalized: float
    limit: float


def w_lambda_flat(defect: DefectCost, lam: float, x: float) -> WLambda:
    """Discounted cell solution ``lam w + |w'| = l0(y)`` for the flat environment.

    Returns ``w_lam(x)``, ``w_lam(x) - w_lam(0)`` and the vanishing-discount limit
    ``-l0(0) |x| + int_0^x l0``.
    """
    _require(defect.dim == 1, "a one-dimensional defect")
    if defect.is_zero:
        return WLambda(0.0, 0.0, 0.0)
    _require(defect.single_min_at_origin, "a defect with a single minimum at the origin")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    l0 = _l0(defect)
    a0 = defect.value_at_origin
    s = math.copysign(1.0, x) if x != 0 else 1.0
    r = abs(x)
    top = min(r, defect.radius)
    # e^{-lam r} (a0/lam + int_0^r e^{lam t} l0(s t) dt), rewritten to avoid e^{-lam r}/lam cancellation
    inner = _quad(lambda t: math.exp(-lam * (r - t)) * l0(s * t), 0.0, top, points=[0.0])
    value = math.exp(-lam * r) * a0 / lam + inner
    normalized = a0 * math.expm1(-lam * r) / lam + inner
    limit = -a0 * r + _quad(lambda t: l0(s * t), 0.0, top)
    return WLambda(value, normalized, limit)


def g_h_periodic(per: PeriodicCost, eps: float) -> tuple[ClosedForm1D, ClosedForm1D]:
    """The eps-periodic solutions ``g + g' = l_per(x/eps)`` and ``h - h' = l_per(x/eps)``.

    ``g(x) = int_0^inf e^{-s} l_per((x - s)/eps) ds``; the infinite tail is the
    geometric series of one-period integrals, summed in closed form.
    """
    _require(per.dim == 1, "a one-dimensional environment")
    if eps <= 0:
        raise ValueError("eps must be positive")
    lp = lambda y: float(per(np.array([[y]]))[0])
    norm = 1.0 / (-math.expm1(-eps))

    def g(x: float) -> float:
        return norm * _quad(lambda s: math.exp(-s) * lp((x - s) / eps), 0.0, eps)

    def hh(x: float) -> float:
        return norm * _quad(lambda s: math.exp(-s) * lp((x + s) / eps), 0.0, eps)

    gform = ClosedForm1D(g, lambda x: lp(x / eps) - g(x), {"eps": eps, "side": "g"})
    hform = ClosedForm1D(hh, lambda x: hh(x) - lp(x / eps), {"eps": eps, "side": "h"})
    # the mean over one period must reproduce <l_per>; uniform samples are
    # spectrally accurate for a smooth periodic function
    xs = eps * np.arange(64) / 64
    drift = abs(float(np.mean(gform(xs))) - per.mean)
    if drift > 1e-6 * (1.0 + per.bound):
        warnings.warn(f"mean of g departs from <l_per> by {drift:.2e}", RuntimeWarning, stacklevel=2)
    return gform, hform


def two_defect_min(defect: DefectCost, eps: float, x):
    """``min(u_eps(x), u_eps(x - eps))`` for defects centered at 0 and eps."""
    if not defect.even:
        warnings.warn("two-defect min-formula assumes an even defect; separation may be needed",
                      RuntimeWarning, stacklevel=2)
    u = flat_solution(defect, eps)
    x = np.asarray(x, dtype=float)
    return np.minimum(u(x), u(x - eps))


def two_defect_cost(defect: DefectCost, eps: float, x) -> np.ndarray:
    """Right-hand side ``l0(x/eps) + l0((x - eps)/eps)`` of the two-defect equation."""
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    return defect(x / eps) + defect((x - eps) / eps)


def dump_csv(evaluator: ClosedForm1D, xs, path):
    """Write ``x,value`` rows of an evaluator to CSV."""
    from hjdefect.artifacts import write_csv

    xs = np.asarray(xs, dtype=float)
    write_csv(path, ["x", "value"], np.column_stack([xs, evaluator(xs)]))
