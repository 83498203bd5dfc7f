"""Bernoulli lattices of defects.

Indicators ``X_k`` come from a counter-based generator keyed by the seed and
indexed by the lattice site, so enlarging a window never changes the
indicators already drawn.  The multi-defect solution is the min-formula over
shifted single-defect solutions, checked against a direct solve of the
superposed cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from hjdefect.hj_core import Grid, GridField, box_grid, solve_control_problem, solve_eps_problem
from hjdefect.scalar_fields import HamiltonianSpec

EDGE_TOL = 1e-3
DKW_ALPHA = 0.01


# --------------------------------------------------------------------------
# counter-based indicators


def zigzag(k: np.ndarray) -> np.ndarray:
    """``0, -1, 1, -2, 2, ... -> 0, 1, 2, 3, 4, ...``"""
    k = np.asarray(k, dtype=np.int64)
    return np.where(k >= 0, 2 * k, -2 * k - 1)


def site_counter(k: np.ndarray) -> np.ndarray:
    """A bijection from lattice sites of Z^d (d <= 2) to stream positions."""
    k = np.atleast_2d(np.asarray(k, dtype=np.int64))
    if k.shape[1] == 1:
        return zigzag(k[:, 0])
    a, b = zigzag(k[:, 0]), zigzag(k[:, 1])
    return (a + b) * (a + b + 1) // 2 + b  # Cantor pairing


def site_uniforms(seed: int, k: np.ndarray, stream: int = 0) -> np.ndarray:
    """Uniforms in [0, 1) attached to lattice sites, reproducible from ``(seed, stream, k)``."""
    pos = site_counter(k)
    n = int(pos.max()) + 1 if len(pos) else 0
    bg = np.random.Philox(key=[int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)])
    raw = bg.random_raw(n)
    return (raw[pos] >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass
class LatticeRealization:
    dim: int
    window: tuple[tuple[int, int], ...]
    q: int
    eps: float
    mode: str
    parameter: float
    seed: int
    sites: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    stream: int = 0

    @property
    def eta(self) -> float:
        return self.parameter * self.eps if self.mode == "scaled" else self.parameter

    @property
    def active(self) -> np.ndarray:
        return self.sites[self.X == 1]

    def centers(self) -> np.ndarray:
        """Physical positions ``eps q k`` of the active defects."""
        return self.eps * self.q * self.active.astype(float)

    def frequency_band(self) -> tuple[float, float, float]:
        """Empirical frequency and its 3-sigma binomial band around ``eta``."""
        n = len(self.X)
        sd = math.sqrt(self.eta * (1 - self.eta) / n)
        return float(np.mean(self.X)), self.eta - 3 * sd, self.eta + 3 * sd

    def rows(self):
        return [tuple(int(v) for v in s) + (int(x),) for s, x in zip(self.sites, self.X)]


def _window_sites(window) -> np.ndarray:
    axes = [np.arange(lo, hi + 1) for lo, hi in window]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def sample_lattice(mode: str, eps: float, window, q: int = 1, seed: int = 0, *,
                   eta: float | None = None, eta_bar: float | None = None, stream: int = 0) -> LatticeRealization:
    """Bernoulli indicators on a window of ``Z^d``.

    ``mode == "fixed"`` uses ``eta``; ``mode == "scaled"`` uses ``eta = eta_bar * eps``.
    ``window`` is ``(lo, hi)`` in 1D or a tuple of such pairs.
    """
    if mode not in ("fixed", "scaled"):
        raise ValueError(f"unknown mode {mode!r}")
    param = eta if mode == "fixed" else eta_bar
    if param is None:
        raise ValueError(f"{mode} mode needs {'eta' if mode == 'fixed' else 'eta_bar'}")
    p = param if mode == "fixed" else param * eps
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Bernoulli parameter {p} outside [0, 1]")
    if q < 1 or int(q) != q:
        raise ValueError("spacing multiplier q must be a positive integer")
    if np.ndim(window[0]) == 0:
        window = (tuple(window),)
    window = tuple((int(lo), int(hi)) for lo, hi in window)
    sites = _window_sites(window)
    u = site_uniforms(seed, sites, stream)
    X = (u < p).astype(np.int8)
    return LatticeRealization(len(window), window, int(q), float(eps), mode, float(param), int(seed),
                              sites, X, stream)


# --------------------------------------------------------------------------
# min-formula


def required_reach(u_eps: Callable, ubar: float, dim: int = 1, tol: float = EDGE_TOL,
                   step: float = 0.01, limit: float = 1e3) -> float:
    """Smallest distance beyond which ``|u_eps - ubar| <= tol`` along the axes."""
    d = step
    while d < limit:
        pts = [d, -d] if dim == 1 else [[d, 0.0], [-d, 0.0], [0.0, d], [0.0, -d]]
        vals = np.asarray(u_eps(np.asarray(pts)), dtype=float)
        if np.all(np.abs(vals - ubar) <= tol):
            return d
        d *= 1.1
    raise ValueError("single-defect solution never approaches ubar")


def check_window(realization: LatticeRealization, x: np.ndarray, u_eps: Callable, ubar: float) -> None:
    """Refuse when some evaluation point is closer than the decay distance to a window edge."""
    reach = required_reach(u_eps, ubar, realization.dim)
    span = realization.eps * realization.q
    x = np.atleast_2d(np.asarray(x, dtype=float).reshape(len(x), -1))
    for ax, (lo, hi) in enumerate(realization.window):
        need_hi = math.ceil((x[:, ax].max() + reach) / span)
        need_lo = math.floor((x[:, ax].min() - reach) / span)
        if hi < need_hi or lo > need_lo:
            raise ValueError(
                f"window too small on axis {ax}: have [{lo}, {hi}], need at least [{need_lo}, {need_hi}]"
            )


def u_random_min(x, realization: LatticeRealization, u_eps: Callable, ubar: float, *,
                 check: bool = True) -> np.ndarray:
    """``min_k [X_k u_eps(x - eps q k) + (1 - X_k) ubar]`` over the window."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0 or (x.ndim == 1 and realization.dim > 1 and x.shape[0] == realization.dim)
    pts = x.reshape(-1, realization.dim)
    if check:
        check_window(realization, pts, u_eps, ubar)
    out = np.full(len(pts), float(ubar))
    for c in realization.centers():
        shifted = pts - c
        vals = u_eps(shifted[:, 0] if realization.dim == 1 else shifted)
        out = np.minimum(out, np.asarray(vals, dtype=float).reshape(-1))
    return float(out[0]) if scalar else out


def random_cost(realization: LatticeRealization, spec: HamiltonianSpec) -> Callable[[np.ndarray], np.ndarray]:
    """``l_per(x/eps) + sum_k X_k l_0((x - eps q k)/eps)`` as a function of physical points."""
    eps = realization.eps
    centers = realization.centers()
    defect = spec.defect
    reach = eps * (defect.radius if defect is not None else 0.0)

    def cost(x: np.ndarray) -> np.ndarray:
        out = spec.periodic(x / eps)
        if defect is None:
            return out
        for c in centers:
            near = np.max(np.abs(x - c), axis=1) <= reach + 1e-12
            if np.any(near):
                out[near] += defect((x[near] - c) / eps)
        return out

    return cost


def direct_random_solve(realization: LatticeRealization, spec: HamiltonianSpec, alpha: float,
                        domain: Grid) -> GridField:
    """Solve ``alpha u + H(x/eps, Du) = 0`` with every active defect in the cost."""
    eps = realization.eps
    if domain.h > eps / 4:
        raise ValueError(f"grid spacing h={domain.h:g} too coarse for eps={eps:g}; need h <= eps/4")
    span = eps * realization.q
    for ax, (lo, hi) in enumerate(realization.window):
        if lo * span > -domain.extent or hi * span < domain.extent:
            raise ValueError("realization window does not cover the domain")
    spec = spec.to_control_form()
    vals, rep = solve_control_problem(spec, domain, random_cost(realization, spec), alpha)
    meta = {"geometry": domain.tag, "h": domain.h, "alpha": alpha, "eps": eps, "seed": realization.seed,
            "eta": realization.eta, **rep.as_dict()}
    return GridField(domain, vals, meta)


# --------------------------------------------------------------------------
# limit law of the scaled regime


@dataclass
class LimitLaw:
    t: np.ndarray
    empirical: np.ndarray
    limit: np.ndarray
    exact: np.ndarray
    dkw_distance: float
    dkw_band: float
    samples: np.ndarray = field(repr=False)

    def rows(self):
        return list(zip(self.t, self.empirical, self.limit, self.exact))


def z_cdf_exact(t, eps: float, eta: float, two_sided: bool = False) -> np.ndarray:
    """``P(Z <= t)`` for ``Z = exp(-k eps)``, ``k`` the first success index (from 0)."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        m = np.ceil(-np.log(np.clip(t, 1e-300, None)) / eps - 1e-12)
    m = np.maximum(m, 0.0)
    one = np.where(t >= 1.0, 1.0, (1.0 - eta) ** m)
    return one**2 if two_sided else one


def limit_law_mc(mode: str, eps: float, param: float, N: int = 100_000, seed: int = 0, *,
                 t=(0.25, 0.5, 0.75), two_sided: bool = False) -> LimitLaw:
    """Empirical CDF of ``Z`` against ``t^eta_bar`` (``t^{2 eta_bar}`` two-sided) and the finite-eps law."""
    if N < 10_000:
        raise ValueError("need at least 1e4 samples")
    eta = param * eps if mode == "scaled" else param
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"Bernoulli parameter {eta} outside (0, 1]")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    k = rng.geometric(eta, size=N) - 1
    if two_sided:
        k = np.minimum(k, rng.geometric(eta, size=N) - 1)
    z = np.exp(-k * eps)
    t = np.asarray(t, dtype=float)
    zs = np.sort(z)
    emp = np.searchsorted(zs, t, side="right") / N
    eta_bar = eta / eps
    power = 2 * eta_bar if two_sided else eta_bar
    limit = t**power
    exact = z_cdf_exact(t, eps, eta, two_sided)
    # sup distance between the empirical and exact CDFs over all jump points
    uniq, counts = np.unique(zs, return_counts=True)
    emp_at = np.cumsum(counts) / N
    ex_at = z_cdf_exact(uniq, eps, eta, two_sided)
    dist = float(np.max(np.abs(emp_at - ex_at)))
    band = math.sqrt(math.log(2 / DKW_ALPHA) / (2 * N))
    return LimitLaw(t, emp, limit, exact, dist, band, z)


# --------------------------------------------------------------------------
# regimes of the flat environment


@dataclass
class RegimeResult:
    regime: str
    eps: float
    eta: float
    values: np.ndarray = field(repr=False)
    fraction_near_l0: float = float("nan")
    fraction_near_zero: float = float("nan")
    spread: tuple[float, float] = (float("nan"), float("nan"))
    coverage: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "regime": self.regime,
            "eps": self.eps,
            "eta": self.eta,
            "n": int(len(self.values)),
            "fraction_near_l0": self.fraction_near_l0,
            "fraction_near_zero": self.fraction_near_zero,
            "spread": list(self.spread),
            "coverage": self.coverage,
        }


def regime_sample(u_eps: Callable, l00: float, eps: float, eta: float, n: int, seed: int,
                  ubar: float = 0.0, tol: float = 0.05, regime: str = "") -> RegimeResult:
    """``u(0)`` over ``n`` independent realizations (stream ``r`` for realization ``r``)."""
    reach = required_reach(u_eps, ubar)
    K = math.ceil(reach / eps) + 1
    vals = np.empty(n)
    for r in range(n):
        real = sample_lattice("fixed", eps, (-K, K), 1, seed, eta=eta, stream=r)
        vals[r] = u_random_min(0.0, real, u_eps, ubar, check=False)
    lo, hi = float(vals.min()), float(vals.max())
    cover = (min(hi, 0.0) - max(lo, l00)) / (0.0 - l00) if l00 < 0 else float("nan")
    return RegimeResult(regime, eps, eta, vals,
                        float(np.mean(np.abs(vals - l00) <= tol)),
                        float(np.mean(np.abs(vals - ubar) <= tol)),
                        (lo, hi), float(cover))


def regime_summary(u_eps_factory: Callable[[float], Callable], l00: float, sweeps: list[dict], seed: int = 0,
                   tol: float = 0.05) -> list[RegimeResult]:
    """Run each sweep ``{"regime", "eps", "eta" | "eta_bar", "n"}`` on the flat environment."""
    out = []
    for sw in sweeps:
        eps = float(sw["eps"])
        eta = float(sw["eta"]) if "eta" in sw else float(sw["eta_bar"]) * eps
        out.append(regime_sample(u_eps_factory(eps), l00, eps, eta, int(sw.get("n", 200)), seed,
                                 tol=tol, regime=sw.get("regime", "")))
    return out


# --------------------------------------------------------------------------
# separation rule in 2D


@dataclass
class SeparationEvidence:
    chosen_q: int | None
    M: float
    delta: float
    q_lower: float
    checked: dict
    min_on_defect: float
    origin_value: float
    symmetry_deviation: float
    h: float
    field: GridField = field(repr=False)

    def as_dict(self) -> dict:
        return {
            "chosen_q": self.chosen_q,
            "M": self.M,
            "delta": self.delta,
            "q_lower": self.q_lower,
            "checked": {str(k): v for k, v in self.checked.items()},
            "min_on_defect": self.min_on_defect,
            "origin_value": self.origin_value,
            "symmetry_deviation": self.symmetry_deviation,
            "h": self.h,
        }


def verify_separation_2d(spec: HamiltonianSpec, eps: float = 0.25, q_candidates=range(1, 21), *,
                         alpha: float = 1.0, L: float = 4.0, n: int = 201, E: float | None = None,
                         hbar0: float | None = None) -> SeparationEvidence:
    """Pick the lattice spacing ``q`` that keeps each defect dominant on its own support.

    Measures ``M = max |Du_eps|`` and ``delta = min d u_eps / dr`` on the ring
    ``eps <= |x|`` where ``u_eps`` is still clearly below ``ubar``, then returns
    the smallest candidate ``q > 3 + M/delta`` with ``u_eps(x) <= u_eps(x - eps q k)``
    on the defect support for the 8 neighbours ``|k|_inf = 1``.
    """
    spec = spec.to_control_form()
    if spec.dim != 2:
        raise ValueError("separation rule is checked in 2D")
    if spec.defect is None:
        raise ValueError("needs a defect")
    h = 2 * L / (n - 1)
    grid = box_grid(L, h, 2)
    u, _ = solve_eps_problem(spec, alpha, eps, grid)
    if hbar0 is None:
        hbar0 = -float(np.max(u.values)) * alpha
    ubar = -hbar0 / alpha
    if E is None:
        E = -float(np.min(u.values)) * alpha
    if E <= hbar0:
        raise ValueError("separation rule needs E > Hbar(0)")
    beta = (E - hbar0) / (4 * alpha)
    coords = u.coords
    r = np.linalg.norm(coords, axis=1)
    full = u.full()
    gx = np.gradient(full, h, axis=0)[grid.mask]
    gy = np.gradient(full, h, axis=1)[grid.mask]
    gnorm = np.hypot(gx, gy)
    interior = np.max(np.abs(coords), axis=1) <= L - 2 * h
    M = float(np.max(gnorm[interior]))
    ring = interior & (r >= eps) & (u.values < ubar - beta)
    radial = (gx * coords[:, 0] + gy * coords[:, 1]) / np.where(r > 0, r, 1.0)
    delta = float(np.min(radial[ring])) if np.any(ring) else 0.0
    q_lower = 3 + M / delta if delta > 0 else math.inf
    support = r <= eps * spec.defect.radius + 1e-12
    xs = coords[support]
    ux = u.values[support]
    neighbours = [np.array([i, j]) for i in (-1, 0, 1) for j in (-1, 0, 1) if (i, j) != (0, 0)]
    checked = {}
    chosen = None
    for q in q_candidates:
        if q <= q_lower:
            continue
        worst = -math.inf
        for k in neighbours:
            shifted = xs - eps * q * k
            inside = np.max(np.abs(shifted), axis=1) <= L
            vals = np.where(inside, u.at(np.clip(shifted, -L, L)), ubar)
            worst = max(worst, float(np.max(ux - vals)))
        checked[int(q)] = worst
        if worst <= 0.0:
            chosen = int(q)
            break
    origin = float(u.values[int(grid.node_index(np.zeros(2))[0])])
    rot = np.array([[math.cos(math.pi / 4), -math.sin(math.pi / 4)],
                    [math.sin(math.pi / 4), math.cos(math.pi / 4)]])
    turned = coords @ rot.T
    ok = np.max(np.abs(turned), axis=1) <= L
    sym = float(np.max(np.abs(u.values[ok] - u.at(turned[ok]))))
    return SeparationEvidence(chosen, M, delta, q_lower, checked, float(np.min(ux)), origin, sym, h, u)
