"""Acceptance criteria 1-10; a PASS/FAIL line per criterion is printed in the terminal summary."""

import math
import time

import numpy as np
import pytest

from hjdefect.correctors import check_growth, corrector_piecewise, corrector_w, find_ptilde
from hjdefect.defect_ergodic import analytic_E_radial, ergodic_constant, ergodic_constant_truncated
from hjdefect.effective_ham import effective_hamiltonian_at, periodic_corrector, tabulate
from hjdefect.experiments import convergence_study, get_preset, study_invariants
from hjdefect.hj_core import box_grid, solve_control_problem, solve_eps_problem
from hjdefect.homogenized import analytic_homogenized_1d, solve_homogenized
from hjdefect.oracles_1d import flat_solution
from hjdefect.random_defects import (
    direct_random_solve,
    limit_law_mc,
    regime_sample,
    sample_lattice,
    u_random_min,
    verify_separation_2d,
)
from hjdefect.scalar_fields import cos2_bump, relativistic_kinetic, sin_cost, zero_cost, zero_defect

from conftest import separable

BUMP = cos2_bump()
GOLDEN = (1 + math.sqrt(5)) / 2


def _dense_oracle_E():
    y = np.linspace(-1.0, 1.0, 2_000_001)
    return -float(np.min(np.sin(2 * np.pi * y) - np.where(np.abs(y) <= 0.5, np.cos(np.pi * y) ** 2, 0.0)))


@pytest.mark.criterion(1, "effective Hamiltonian, sin environment")
def test_criterion_1_effective_hamiltonian():
    t0 = time.perf_counter()
    spec = separable(sin_cost())
    ps = [0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0]
    expected = [1, 1, 1, 1, 1, 2, 2]
    got = [effective_hamiltonian_at(spec, p, h=1 / 400).value for p in ps]
    assert np.max(np.abs(np.array(got) - expected)) <= 2e-2
    assert time.perf_counter() - t0 <= 30


@pytest.mark.criterion(2, "ergodic constant, flat environment")
def test_criterion_2_flat_ergodic(flat_spec):
    t0 = time.perf_counter()
    est = ergodic_constant(flat_spec)
    assert est.E == pytest.approx(1.0, abs=2e-2)
    assert time.perf_counter() - t0 <= 30


@pytest.mark.criterion(3, "ergodic constant, periodic environment")
def test_criterion_3_periodic_ergodic(sin_spec, sin_table):
    t0 = time.perf_counter()
    oracle = _dense_oracle_E()
    assert oracle == pytest.approx(GOLDEN, abs=1e-6)
    est = ergodic_constant(sin_spec, (2.0, 4.0, 8.0))
    assert abs(est.E - oracle) <= 3e-2
    assert np.all(np.diff(est.E_R) >= -1e-2)
    assert est.E >= sin_table.min_value - 1e-2
    assert time.perf_counter() - t0 <= 120


@pytest.mark.parametrize("name", ["flat", "sin"])
@pytest.mark.criterion(4, "homogenized limit, 1D")
def test_criterion_4_homogenized(name, flat_spec, sin_spec, flat_table, sin_table):
    spec, table = (flat_spec, flat_table) if name == "flat" else (sin_spec, sin_table)
    E = ergodic_constant(spec).E
    sol = solve_homogenized(table, E, 1.0, L=4.0, h=0.01)
    an = analytic_homogenized_1d(spec.periodic, spec.defect)
    xs = np.linspace(-3, 3, 601)
    assert np.max(np.abs(sol.at(xs) - an(xs))) <= 2e-2
    r = np.abs(sol.field.coords[:, 0])
    diff = np.abs(sol.field.values - sol.u_per)
    h = sol.field.h
    if name == "sin":
        assert an.mu == pytest.approx(0.48121, abs=1e-4)
        mu_num = float(np.max(r[diff > 1e-9]))
        assert abs(mu_num - an.mu) <= 2e-2
        assert np.all(diff[r > an.mu + 2 * h] <= 1e-12)
    else:
        assert math.isinf(an.mu)
        assert np.all(diff > 0)


@pytest.mark.parametrize("preset", ["flat-down", "sin-down", "flat-up"])
@pytest.mark.criterion(5, "eps-convergence to the homogenized limit")
def test_criterion_5_convergence(preset):
    t0 = time.perf_counter()
    table = convergence_study(preset)
    inv = study_invariants(get_preset(preset), table)
    assert inv["decreasing"], table.errors
    assert inv["final_within_target"], table.final
    assert time.perf_counter() - t0 <= 100


@pytest.mark.criterion(6, "oracle equivalence, single defect")
def test_criterion_6_single_defect(flat_spec):
    eps = 0.05
    grid = box_grid(3.0, eps / 20)
    u, _ = solve_eps_problem(flat_spec, 1.0, eps, grid)
    x = u.coords[:, 0]
    win = np.abs(x) <= 2.0
    err = np.max(np.abs(u.values[win] - flat_solution(BUMP, eps)(x[win])))
    assert err <= max(3 * grid.h, 3e-2)


@pytest.mark.criterion(7, "random min-formula")
def test_criterion_7_random_min_formula(flat_spec):
    eps = 0.05
    r = sample_lattice("fixed", eps, (-200, 200), eta=0.3, seed=2024)
    grid = box_grid(3.0, eps / 20)
    f = direct_random_solve(r, flat_spec, 1.0, grid)
    x = f.coords[:, 0]
    win = np.abs(x) <= 2.0
    ref = u_random_min(x[win], r, flat_solution(BUMP, eps), 0.0)
    assert np.max(np.abs(f.values[win] - ref)) <= max(3 * grid.h, 3e-2)


@pytest.mark.criterion(8, "limit law and density regimes")
def test_criterion_8_limit_law():
    t0 = time.perf_counter()
    for eta_bar in (0.5, 1.0, 2.0):
        law = limit_law_mc("scaled", 1e-3, eta_bar, 100_000, seed=1)
        assert np.max(np.abs(law.empirical - law.t**eta_bar)) <= 0.02
    eps = 0.01
    u = flat_solution(BUMP, eps)
    fixed = regime_sample(u, -1.0, eps, 0.3, 200, seed=3)
    assert fixed.fraction_near_l0 >= 0.95
    scaled = regime_sample(u, -1.0, eps, 1.0 * eps, 500, seed=3)
    assert scaled.coverage >= 0.8
    assert time.perf_counter() - t0 <= 60


@pytest.mark.criterion(9, "2D radial defect")
def test_criterion_9_radial_2d():
    t0 = time.perf_counter()
    spec = separable(zero_cost(2), cos2_bump(dim=2), relativistic_kinetic(2))
    E = ergodic_constant_truncated(spec, 4.0).value
    assert E == pytest.approx(analytic_E_radial(0.0, spec.defect), abs=5e-2)
    ev = verify_separation_2d(spec, 0.25, L=4.0, n=201, E=E, hbar0=0.0)
    assert ev.origin_value == pytest.approx(-1.0, abs=5e-2)
    assert ev.symmetry_deviation <= 2 * ev.h
    assert ev.chosen_q is not None and ev.chosen_q <= 12
    assert time.perf_counter() - t0 <= 600


def _cost(rng):
    a = rng.uniform(-1, 1, 4)
    return lambda x: a[0] * np.sin(3 * x[:, 0] + a[1]) + a[2] * np.cos(5 * x[:, 0]) + a[3]


@pytest.mark.criterion(10, "property suites")
def test_criterion_10_properties(flat_spec, sin_spec, sin_table):
    rng = np.random.default_rng(10)
    ctrl = separable(zero_cost()).to_control_form()
    g = box_grid(1.0, 0.02)
    for _ in range(20):
        low, extra = _cost(rng), _cost(rng)
        high = lambda x, low=low, extra=extra: low(x) + np.abs(extra(x))
        w1, _ = solve_control_problem(ctrl, g, low, 1.0)
        w2, _ = solve_control_problem(ctrl, g, high, 1.0)
        assert np.all(w2 >= w1 - 1e-10)

    assert check_growth(flat_spec, 0.0)[0].verdict == "increasing"
    assert check_growth(sin_spec, sin_table.p0)[0].verdict == "increasing"
    assert check_growth(separable(sin_cost(), zero_defect()), 0.0)[0].verdict != "increasing"

    pair = find_ptilde(sin_table, 2.0)
    pc = corrector_piecewise(sin_spec, 2.0, pair.ptilde, 8.0, periodic_corrector(sin_spec, 2.0),
                             periodic_corrector(sin_spec, pair.ptilde), GOLDEN, w=corrector_w(sin_spec, 8.0))
    assert np.all(np.diff(pc.sublinearity([2.0, 4.0, 6.0])) < 0)

    for level in rng.uniform(1.2, 2.9, 10) * rng.choice([-1, 1], 10):
        pair = find_ptilde(sin_table, level)
        d, dt = pair.p - sin_table.p0, pair.ptilde - sin_table.p0
        assert float(d @ pair.e) < 0 < float(dt @ pair.e)
        assert abs(sin_table(pair.ptilde[0]) - sin_table(level)) <= 1e-3

    a = sample_lattice("scaled", 0.01, (-300, 300), eta_bar=1.0, seed=42)
    b = sample_lattice("scaled", 0.01, (-300, 300), eta_bar=1.0, seed=42)
    assert np.array_equal(a.X, b.X)
    la, lb = (limit_law_mc("scaled", 1e-3, 1.0, 10_000, seed=42) for _ in range(2))
    assert np.array_equal(la.samples, lb.samples)
    u = flat_solution(BUMP, 0.01)
    ra, rb = (regime_sample(u, -1.0, 0.01, 0.3, 50, seed=42) for _ in range(2))
    assert np.array_equal(ra.values, rb.values)
