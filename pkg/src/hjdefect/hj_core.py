"""Monotone semi-Lagrangian solvers for stationary discounted HJ equations.

All solvers discretize the control representation

    w(x) = min_a [ tau * l(x, a) + gamma * w(x + dt f(x, a)) ],

with ``dt = h / M_f``, ``gamma = exp(-lam dt)`` and ``tau = (1 - gamma) / lam``
(the exact discounted weight of a unit cost held over one step), and
multilinear interpolation at the foot point.  The fixed point is found by
policy iteration: each policy is evaluated by a sparse linear solve, then
improved by a sweep over the control list.  Plain value iteration is kept for
contraction diagnostics and as a fallback for undiscounted problems.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from hjdefect.scalar_fields import HamiltonianSpec, as_points

STENCIL_CACHE_ENTRIES = 10_000_000
SNAP = 1e-9
WEIGHT_EPS = 1e-12


class ConvergenceError(RuntimeError):
    """Raised when a fixed-point iteration stops before meeting its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last update {residual:.3e})")
        self.residual = residual


# --------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform lattice: ``torus`` (period ``extent``), ``ball`` (radius) or ``box`` (half-width)."""

    geometry: str
    dim: int
    h: float
    extent: float
    axis: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        if self.geometry not in ("torus", "ball", "box"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        flat = np.full(self.mask.size, -1, dtype=np.int64)
        flat[self.mask.reshape(-1)] = np.arange(int(self.mask.sum()))
        object.__setattr__(self, "_lookup", flat)
        if self.dim == 1:
            coords = self.axis[self.mask].reshape(-1, 1)
        else:
            xx = np.stack(np.meshgrid(*([self.axis] * self.dim), indexing="ij"), axis=-1)
            coords = xx[self.mask]
        object.__setattr__(self, "_coords", coords)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mask.shape

    @property
    def coords(self) -> np.ndarray:
        """Active node coordinates, shape ``(n, d)``."""
        return self._coords

    @property
    def size(self) -> int:
        return len(self._coords)

    @property
    def lookup(self) -> np.ndarray:
        """Flat lattice index -> active index (``-1`` when inactive)."""
        return self._lookup

    @property
    def tag(self) -> str:
        if self.geometry == "torus":
            return "torus"
        return f"{self.geometry}({self.extent:g})"

    def contains(self, y: np.ndarray) -> np.ndarray:
        if self.geometry == "torus":
            return np.ones(len(y), dtype=bool)
        if self.geometry == "ball":
            return np.linalg.norm(y, axis=1) <= self.extent * (1 + 1e-12) + 1e-14
        return np.max(np.abs(y), axis=1) <= self.extent * (1 + 1e-12) + 1e-14

    def node_index(self, x) -> np.ndarray:
        """Active index of the nearest node to each point (``-1`` if inactive)."""
        pts = as_points(x, self.dim)
        k = np.rint((pts - self.axis[0]) / self.h).astype(np.int64)
        n = len(self.axis)
        if self.geometry == "torus":
            k %= n
        bad = np.any((k < 0) | (k >= n), axis=1)
        k = np.clip(k, 0, n - 1)
        out = self.lookup[np.ravel_multi_index(tuple(k.T), self.shape)]
        out[bad] = -1
        return out


def torus_grid(h: float, dim: int = 1, period: float = 1.0) -> Grid:
    n = max(int(round(period / h)), 2)
    h = period / n
    axis = h * np.arange(n)
    return Grid("torus", dim, h, period, axis, np.ones((n,) * dim, dtype=bool))


def box_grid(L: float, h: float, dim: int = 1) -> Grid:
    n = int(round(L / h))
    h = L / n
    axis = h * np.arange(-n, n + 1)
    return Grid("box", dim, h, L, axis, np.ones((2 * n + 1,) * dim, dtype=bool))


def ball_grid(R: float, h: float, dim: int = 1) -> Grid:
    n = int(np.floor(R / h + 1e-9))
    axis = h * np.arange(-n, n + 1)
    if dim == 1:
        mask = np.abs(axis) <= R + 1e-12
    else:
        xx = np.meshgrid(*([axis] * dim), indexing="ij")
        mask = np.sqrt(sum(x * x for x in xx)) <= R + 1e-12
    return Grid("ball", dim, h, R, axis, mask)


@dataclass(eq=False)
class GridField:
    """Values on the active nodes of a grid, plus solve metadata."""

    grid: Grid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(self.values) != self.grid.size:
            raise ValueError("value count differs from active node count")

    @property
    def geometry(self) -> str:
        return self.grid.tag

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def coords(self) -> np.ndarray:
        return self.grid.coords

    def full(self) -> np.ndarray:
        """Values on the full lattice, NaN at inactive nodes."""
        arr = np.full(self.grid.mask.size, np.nan)
        arr[self.grid.mask.reshape(-1)] = self.values
        return arr.reshape(self.grid.shape)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def at(self, x) -> np.ndarray:
        """Multilinear interpolation (periodic on the torus)."""
        pts = as_points(x, self.dim)
        if self.grid.geometry == "torus":
            axis = np.append(self.grid.axis, self.grid.extent)
            arr = self.full()
            arr = np.pad(arr, [(0, 1)] * self.dim, mode="wrap")
            interp = RegularGridInterpolator((axis,) * self.dim, arr)
            return interp(np.mod(pts, self.grid.extent))
        # corners outside the domain may carry zero weight (e.g. at a node on
        # the ball boundary); only corners with positive weight must be active
        arr = self.full()
        missing = np.isnan(arr)
        axes = (self.grid.axis,) * self.dim
        vals = RegularGridInterpolator(axes, np.where(missing, 0.0, arr), bounds_error=False,
                                       fill_value=np.nan)(pts)
        lost = RegularGridInterpolator(axes, missing.astype(float), bounds_error=False,
                                       fill_value=1.0)(pts)
        return np.where(lost > 1e-12, np.nan, vals)

    def gradient_norm(self) -> np.ndarray:
        """Largest one-sided difference quotient per lattice edge (full lattice array)."""
        arr = self.full()
        out = np.zeros_like(arr)
        for ax in range(self.dim):
            if self.grid.geometry == "torus":
                d = np.abs(np.roll(arr, -1, axis=ax) - arr) / self.h
            else:
                d = np.abs(np.diff(arr, axis=ax)) / self.h
                pad = [(0, 0)] * self.dim
                pad[ax] = (0, 1)
                d = np.pad(d, pad, constant_values=np.nan)
            out = np.fmax(out, d)
        return out

    def lipschitz(self) -> float:
        return float(np.nanmax(self.gradient_norm()))


@dataclass
class SolveReport:
    iterations: int
    final_update: float
    contraction: float
    wall_time: float
    method: str = "policy"
    tolerance: float = 0.0
    history: list[float] = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_update": self.final_update,
            "contraction": self.contraction,
            "method": self.method,
            "tolerance": self.tolerance,
        }


# --------------------------------------------------------------------------
# the generic fixed-point engine


@dataclass
class _Stencil:
    idx: np.ndarray  # (n, 2^d) active indices
    wt: np.ndarray  # (n, 2^d)
    ok: np.ndarray  # (n,) admissibility


def _stencil(grid: Grid, feet: np.ndarray) -> _Stencil:
    d = grid.dim
    n_axis = len(grid.axis)
    u = (feet - grid.axis[0]) / grid.h
    near = np.rint(u)
    u = np.where(np.abs(u - near) < SNAP, near, u)
    i0 = np.floor(u).astype(np.int64)
    frac = u - i0
    ok = grid.contains(feet)
    corners = 1 << d
    idx = np.zeros((len(feet), corners), dtype=np.int64)
    wt = np.ones((len(feet), corners))
    for c in range(corners):
        k = i0.copy()
        for ax in range(d):
            if (c >> ax) & 1:
                k[:, ax] += 1
                wt[:, c] *= frac[:, ax]
            else:
                wt[:, c] *= 1.0 - frac[:, ax]
        if grid.geometry == "torus":
            k %= n_axis
            outside = np.zeros(len(feet), dtype=bool)
        else:
            outside = np.any((k < 0) | (k >= n_axis), axis=1)
            k = np.clip(k, 0, n_axis - 1)
        flat = np.ravel_multi_index(tuple(k.T), grid.shape)
        act = grid.lookup[flat]
        used = wt[:, c] > WEIGHT_EPS
        ok &= ~(used & (outside | (act < 0)))
        idx[:, c] = np.where(act < 0, 0, act)
    wt[~ok] = 0.0
    return _Stencil(idx, wt, ok)


PinFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass
class _Shift:
    offsets: np.ndarray  # (c, d) lattice offsets of the corners in use
    weights: np.ndarray  # (c,)
    ok: np.ndarray  # (n,) admissibility


class _Problem:
    """Discrete Bellman operator ``T w = min_j [tau c_j + gamma P_j w]`` on a grid.

    Costs, velocities and pins are functions of node coordinates so that the
    same problem can be rebuilt on a coarser lattice.
    """

    def __init__(self, grid: Grid, n_controls: int, velocity, base, extra, speed: float,
                 lam: float, pinned: PinFn | None = None, uniform: bool = False,
                 start: Callable[["_Problem"], np.ndarray] | None = None):
        self.grid = grid
        self.uniform = uniform
        self.start = start
        self.m = n_controls
        self.velocity = velocity
        self.base_fn = base
        self.extra_fn = extra
        self.speed = speed
        self.lam = lam
        self.pinned_fn = pinned
        self.dt = grid.h / speed
        if lam > 0:
            self.gamma = float(np.exp(-lam * self.dt))
            self.tau = float(-np.expm1(-lam * self.dt) / lam)
        else:
            self.gamma, self.tau = 1.0, self.dt
        n = grid.size
        self.base = np.asarray(base(grid.coords), dtype=float)
        self.pin_mask = np.zeros(n, dtype=bool)
        self.pin_vals = np.zeros(n)
        if pinned is not None:
            pm, pv = pinned(grid.coords)
            self.pin_mask = np.asarray(pm, dtype=bool)
            self.pin_vals = np.where(self.pin_mask, pv, 0.0)
        self._shifts: dict[int, _Shift] = {}
        self._active = np.flatnonzero(grid.mask.reshape(-1))
        self._multi = np.stack(np.unravel_index(self._active, grid.shape), axis=1)
        self._cache = {} if n * n_controls * (1 << grid.dim) <= STENCIL_CACHE_ENTRIES else None
        self._cost_cache = {} if n * n_controls <= STENCIL_CACHE_ENTRIES else None

    def on(self, grid: Grid) -> "_Problem":
        return _Problem(grid, self.m, self.velocity, self.base_fn, self.extra_fn, self.speed,
                        self.lam, self.pinned_fn, self.uniform, self.start)

    def shift(self, j: int) -> _Shift:
        if j in self._shifts:
            return self._shifts[j]
        g = self.grid
        x = g.coords
        step = self.dt * np.asarray(self.velocity(x[:1], j), dtype=float)[0]
        u = step / g.h
        near = np.rint(u)
        u = np.where(np.abs(u - near) < SNAP, near, u)
        i0 = np.floor(u).astype(np.int64)
        frac = u - i0
        offs, wts = [], []
        for c in range(1 << g.dim):
            bits = np.array([(c >> ax) & 1 for ax in range(g.dim)])
            wt = float(np.prod(np.where(bits == 1, frac, 1.0 - frac)))
            if wt > WEIGHT_EPS:
                offs.append(i0 + bits)
                wts.append(wt)
        offs = np.array(offs, dtype=np.int64)
        ok = g.contains(x + step)
        if g.geometry != "torus":
            n_axis = len(g.axis)
            for o in offs:
                k = self._multi + o
                inside = np.all((k >= 0) & (k < n_axis), axis=1)
                flat = np.ravel_multi_index(tuple(np.clip(k, 0, n_axis - 1).T), g.shape)
                ok &= inside & (g.lookup[flat] >= 0)
        sh = _Shift(offs, np.array(wts), ok)
        self._shifts[j] = sh
        return sh

    def _indices(self, rows: np.ndarray, off: np.ndarray) -> np.ndarray:
        g = self.grid
        n_axis = len(g.axis)
        k = self._multi[rows] + off
        if g.geometry == "torus":
            k %= n_axis
        else:
            k = np.clip(k, 0, n_axis - 1)
        act = g.lookup[np.ravel_multi_index(tuple(k.T), g.shape)]
        return np.where(act < 0, 0, act)

    def _padded(self, w: np.ndarray) -> np.ndarray:
        g = self.grid
        full = np.zeros(g.mask.size)
        full[self._active] = w
        full = full.reshape(g.shape)
        return np.pad(full, 1, mode="wrap" if g.geometry == "torus" else "constant")

    def stencil(self, j: int) -> _Stencil:
        if self._cache is not None and j in self._cache:
            return self._cache[j]
        x = self.grid.coords
        feet = x + self.dt * self.velocity(x, j)
        if self.grid.geometry == "torus":
            feet = np.mod(feet - self.grid.axis[0], self.grid.extent) + self.grid.axis[0]
        st = _stencil(self.grid, feet)
        if self._cache is not None:
            self._cache[j] = st
        return st

    def c(self, j: int) -> np.ndarray:
        if self._cost_cache is not None and j in self._cost_cache:
            return self._cost_cache[j]
        out = self.base + np.asarray(self.extra_fn(self.grid.coords, j), dtype=float)
        if self._cost_cache is not None:
            self._cost_cache[j] = out
        return out

    def q(self, j: int, w: np.ndarray, padded: np.ndarray | None = None) -> np.ndarray:
        if self.uniform:
            sh = self.shift(j)
            wp = self._padded(w) if padded is None else padded
            acc = np.zeros(self.grid.shape)
            for o, wt in zip(sh.offsets, sh.weights):
                sl = tuple(slice(1 + oi, 1 + oi + s) for oi, s in zip(o, self.grid.shape))
                acc += wt * wp[sl]
            out = self.tau * self.c(j) + self.gamma * acc.reshape(-1)[self._active]
            out[~sh.ok] = np.inf
            return out
        st = self.stencil(j)
        out = self.tau * self.c(j) + self.gamma * np.sum(st.wt * w[st.idx], axis=1)
        out[~st.ok] = np.inf
        return out

    def rows(self, j: int, sel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and weights of ``P_j`` restricted to rows ``sel``."""
        if self.uniform:
            sh = self.shift(j)
            idx = np.stack([self._indices(sel, o) for o in sh.offsets], axis=1)
            return idx, np.broadcast_to(sh.weights, idx.shape)
        st = self.stencil(j)
        return st.idx[sel], st.wt[sel]

    def bellman(self, w: np.ndarray, policy: np.ndarray | None = None, tie: float = 0.0):
        best = np.full(len(w), np.inf)
        arg = np.zeros(len(w), dtype=np.int64)
        wp = self._padded(w) if self.uniform else None
        for j in range(self.m):
            qj = self.q(j, w, wp)
            better = qj < best
            best[better] = qj[better]
            arg[better] = j
        if not np.all(np.isfinite(best[~self.pin_mask])):
            raise ValueError("empty admissible control set at some node")
        if policy is not None:
            # keep the incumbent control unless the improvement is real
            cur = np.empty(len(w))
            for j in np.unique(policy):
                rows = policy == j
                cur[rows] = self.q(j, w, wp)[rows]
            keep = cur <= best + tie
            arg[keep] = policy[keep]
            best[keep] = np.minimum(cur[keep], best[keep])
        best[self.pin_mask] = self.pin_vals[self.pin_mask]
        return best, arg

    def evaluate(self, policy: np.ndarray) -> np.ndarray:
        n = self.grid.size
        rows, cols, vals = [], [], []
        rhs = np.empty(n)
        for j in np.unique(policy):
            sel = np.flatnonzero((policy == j) & ~self.pin_mask)
            if len(sel) == 0:
                continue
            idx, wt = self.rows(j, sel)
            rhs[sel] = self.tau * self.c(j)[sel]
            rows.append(np.repeat(sel, idx.shape[1]))
            cols.append(idx.reshape(-1))
            vals.append(-self.gamma * wt.reshape(-1))
        pins = np.flatnonzero(self.pin_mask)
        rhs[pins] = self.pin_vals[pins]
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(np.ones(n))
        A = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MatrixRankWarning)
            w = spsolve(A.tocsc(), rhs)
        if not np.all(np.isfinite(w)):
            raise ConvergenceError("policy evaluation is singular (improper policy)", np.inf)
        return w

    def zero_control(self) -> int:
        x = self.grid.coords[:1]
        speeds = [np.linalg.norm(self.velocity(x, j)) for j in range(self.m)]
        return int(np.argmin(speeds))


COARSEST_AXIS = 41


def _coarsen(grid: Grid) -> Grid | None:
    n = len(grid.axis)
    if n <= COARSEST_AXIS:
        return None
    if grid.geometry == "torus":
        return torus_grid(grid.extent / (n // 2), grid.dim, grid.extent) if n % 2 == 0 else None
    if grid.geometry == "box":
        return box_grid(grid.extent, 2 * grid.h, grid.dim) if (n - 1) % 4 == 0 else None
    return ball_grid(grid.extent, 2 * grid.h, grid.dim)


def _prolong(coarse: Grid, w: np.ndarray, fine: Grid) -> np.ndarray:
    field_c = GridField(coarse, w)
    out = field_c.at(fine.coords)
    bad = ~np.isfinite(out)
    if np.any(bad):
        near = coarse.node_index(np.clip(fine.coords[bad], -coarse.extent, coarse.extent))
        # ball rims: fall back to the closest active coarse node
        miss = near < 0
        if np.any(miss):
            d = np.linalg.norm(fine.coords[bad][miss][:, None, :] - coarse.coords[None], axis=2)
            near[miss] = np.argmin(d, axis=1)
        out[bad] = w[near]
    return out


def _policy_iteration(problem: _Problem, tol: float, max_iter: int, policy: np.ndarray,
                      history: list[float] | None) -> tuple[np.ndarray, int]:
    w = problem.evaluate(policy)
    it = 0
    while it < max_iter:
        it += 1
        scale = 1.0 + np.max(np.abs(w))
        tw, new = problem.bellman(w, policy, tie=1e-13 * scale)
        update = float(np.max(np.abs(tw - w)))
        if history is not None:
            history.append(update)
        if np.array_equal(new, policy) or update <= 1e-3 * tol * scale:
            break
        policy = new
        w = problem.evaluate(policy)
    return w, it


def _run(problem: _Problem, *, method: str = "policy", tol: float = 1e-9, max_iter: int | None = None,
         w0: np.ndarray | None = None, policy0: np.ndarray | None = None,
         keep_history: bool = False, multilevel: bool = True) -> tuple[np.ndarray, SolveReport]:
    start = time.perf_counter()
    n = problem.grid.size
    history: list[float] = []
    if method == "policy":
        max_iter = 5000 if max_iter is None else max_iter
        if policy0 is None and w0 is None and multilevel:
            # a coarse solution gives a starting policy that is already right
            # away from fine-scale features, so few fine iterations are needed
            coarse = _coarsen(problem.grid)
            if coarse is not None:
                wc, _ = _run(problem.on(coarse), tol=tol, max_iter=max_iter)
                w0 = _prolong(coarse, wc, problem.grid)
        if policy0 is not None:
            policy = np.asarray(policy0, dtype=np.int64).copy()
        elif w0 is not None:
            _, policy = problem.bellman(np.asarray(w0, dtype=float))
        elif problem.start is not None:
            policy = np.asarray(problem.start(problem), dtype=np.int64)
        else:
            policy = np.full(n, problem.zero_control(), dtype=np.int64)
        w, it = _policy_iteration(problem, tol, max_iter, policy, history if keep_history else None)
        tw, _ = problem.bellman(w)
        update = float(np.max(np.abs(tw - w)))
        if not np.all(np.isfinite(w)) or update > tol * (1.0 + np.max(np.abs(w))):
            raise ConvergenceError("policy iteration did not converge", update)
        report = SolveReport(it, update, problem.gamma, time.perf_counter() - start, "policy", tol, history)
        return w, report
    if method != "value":
        raise ValueError(f"unknown method {method!r}")
    max_iter = 1_000_000 if max_iter is None else max_iter
    w = np.zeros(n) if w0 is None else np.asarray(w0, dtype=float).copy()
    w[problem.pin_mask] = problem.pin_vals[problem.pin_mask]
    update = np.inf
    for it in range(1, max_iter + 1):
        tw, _ = problem.bellman(w)
        update = float(np.max(np.abs(tw - w)))
        w = tw
        if keep_history:
            history.append(update)
        if update <= tol * (1.0 + np.max(np.abs(w))):
            return w, SolveReport(it, update, problem.gamma, time.perf_counter() - start, "value", tol, history)
    raise ConvergenceError(f"value iteration hit {max_iter} iterations", update)


# --------------------------------------------------------------------------
# public solvers


def _finish(grid: Grid, w: np.ndarray, rep: SolveReport, **meta) -> tuple[GridField, SolveReport]:
    info = {"geometry": grid.tag, "h": grid.h, **meta, **rep.as_dict()}
    return GridField(grid, w, info), rep


def solve_discounted_periodic(spec: HamiltonianSpec, p, lam: float, grid: Grid, *,
                              method: str = "policy", tol: float = 1e-9,
                              keep_history: bool = False) -> tuple[GridField, SolveReport]:
    """Discounted cell problem ``lam w + H_per(y, p + Dw) = 0`` on the unit torus.

    The defect (if any) is ignored: only the periodic environment enters.
    """
    if lam <= 0:
        raise ValueError("discount must be positive")
    if grid.geometry != "torus":
        raise ValueError("periodic solve needs a torus grid")
    spec = spec.to_control_form().without_defect()
    p = np.asarray(p, dtype=float).reshape(spec.dim)
    extra = lambda x, j: spec.control_part(x, j) + spec.velocity(x, j) @ p
    prob = _Problem(grid, len(spec.controls), spec.velocity, spec.periodic, extra, spec.max_speed, lam,
                    uniform=spec.dynamics is None)
    w, rep = _run(prob, method=method, tol=tol, keep_history=keep_history)
    return _finish(grid, w, rep, **{"lambda": lam, "p": p.tolist()})


def solve_discounted_constrained(spec: HamiltonianSpec, lam: float, R: float, grid: Grid | None = None, *,
                                 h: float | None = None, method: str = "policy", tol: float = 1e-9,
                                 keep_history: bool = False) -> tuple[GridField, SolveReport]:
    """State-constrained discounted problem on the closed ball of radius ``R``.

    At each node only controls whose foot point stays in the ball (and whose
    interpolation stencil uses active nodes only) are admissible.
    """
    if lam <= 0:
        raise ValueError("discount must be positive")
    spec = spec.to_control_form()
    r0 = spec.defect.radius if spec.defect is not None else 0.0
    if R <= r0:
        raise ValueError(f"ball radius {R} must exceed the defect radius {r0}")
    if grid is None:
        grid = ball_grid(R, h if h is not None else 0.01, spec.dim)
    if grid.geometry != "ball" or abs(grid.extent - R) > 1e-12:
        raise ValueError("constrained solve needs a ball grid of radius R")
    prob = _Problem(grid, len(spec.controls), spec.velocity, spec.spatial_cost, spec.control_part,
                    spec.max_speed, lam, uniform=spec.dynamics is None)
    w, rep = _run(prob, method=method, tol=tol, keep_history=keep_history)
    return _finish(grid, w, rep, **{"lambda": lam, "R": R})


def solve_eps_problem(spec: HamiltonianSpec, alpha: float, eps: float, domain: Grid, *,
                      method: str = "policy", tol: float = 1e-9,
                      keep_history: bool = False) -> tuple[GridField, SolveReport]:
    """``alpha u + H(x / eps, Du) = 0`` on a box, boundary as a state constraint.

    The oscillatory cost is evaluated at ``x / eps`` node by node.
    """
    if eps <= 0 or alpha <= 0:
        raise ValueError("alpha and eps must be positive")
    if domain.h > eps / 4:
        raise ValueError(f"grid spacing h={domain.h:g} too coarse for eps={eps:g}; need h <= eps/4")
    if domain.geometry == "torus":
        raise ValueError("the eps-problem lives on a box or ball")
    spec = spec.to_control_form()
    r0 = spec.defect.radius if spec.defect is not None else 0.0
    if domain.extent <= eps * r0:
        raise ValueError("domain does not contain the rescaled defect support")
    prob = _Problem(domain, len(spec.controls),
                    lambda x, j: spec.velocity(x / eps, j),
                    lambda x: spec.spatial_cost(x / eps),
                    lambda x, j: spec.control_part(x / eps, j),
                    spec.max_speed, alpha, uniform=spec.dynamics is None)
    w, rep = _run(prob, method=method, tol=tol, keep_history=keep_history)
    return _finish(domain, w, rep, alpha=alpha, eps=eps)


def solve_control_problem(spec: HamiltonianSpec, grid: Grid, cost: Callable[[np.ndarray], np.ndarray],
                          lam: float, pinned: PinFn | None = None, *, method: str = "policy",
                          tol: float = 1e-9, policy0: np.ndarray | None = None, w0: np.ndarray | None = None,
                          max_iter: int | None = None, multilevel: bool = True,
                          keep_history: bool = False,
                          start: Callable[["_Problem"], np.ndarray] | None = None) -> tuple[np.ndarray, SolveReport]:
    """Control problem with a caller-supplied spatial cost and optional Dirichlet pins.

    The running cost is ``cost(x) + control_part(x, a)`` from ``spec``; ``lam = 0``
    gives the undiscounted exit-time problem, which is well posed only when
    the pinned nodes can be reached.
    """
    spec = spec.to_control_form()
    prob = _Problem(grid, len(spec.controls), spec.velocity, cost, spec.control_part,
                    spec.max_speed, lam, pinned, uniform=spec.dynamics is None, start=start)
    return _run(prob, method=method, tol=tol, policy0=policy0, w0=w0, max_iter=max_iter,
                multilevel=multilevel, keep_history=keep_history)


def outward_policy(problem: "_Problem") -> np.ndarray:
    """Fastest control pointing away from the origin: a proper policy for exit problems."""
    x = problem.grid.coords
    r = np.linalg.norm(x, axis=1, keepdims=True)
    e = np.where(r > 0, x / np.where(r > 0, r, 1.0), np.eye(x.shape[1])[0])
    best = np.full(len(x), -np.inf)
    arg = np.zeros(len(x), dtype=np.int64)
    for j in range(problem.m):
        s = np.sum(problem.velocity(x, j) * e, axis=1)
        better = s > best + 1e-12
        best[better] = s[better]
        arg[better] = j
    return arg


def solve_with_cost(spec: HamiltonianSpec, grid: Grid, lam: float, *, method: str = "policy",
                    tol: float = 1e-9) -> tuple[GridField, SolveReport]:
    """Discounted problem with the spec's own spatial cost on any grid."""
    w, rep = solve_control_problem(spec, grid, spec.spatial_cost, lam, method=method, tol=tol)
    return _finish(grid, w, rep, **{"lambda": lam})
