import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjdefect.hj_core import (
    ConvergenceError,
    GridField,
    ball_grid,
    box_grid,
    solve_control_problem,
    solve_discounted_constrained,
    solve_discounted_periodic,
    solve_eps_problem,
    torus_grid,
)
from hjdefect.scalar_fields import (
    PeriodicCost,
    constant_cost,
    cos2_bump,
    eval_hamiltonian,
    relativistic_kinetic,
    sin_cost,
    zero_cost,
    zero_defect,
)

from conftest import separable


def test_grids():
    t = torus_grid(1 / 10)
    assert t.size == 10 and t.geometry == "torus"
    b = ball_grid(2.0, 0.1, 2)
    assert np.all(np.linalg.norm(b.coords, axis=1) <= 2.0 + 1e-12)
    x = box_grid(1.0, 0.25)
    assert x.size == 9 and x.node_index(np.zeros(1))[0] == 4
    with pytest.raises(ValueError):
        box_grid(1.0, -0.1)


def test_grid_field_interpolation_and_serialization(tmp_path):
    from hjdefect.artifacts import write_field

    g = torus_grid(1 / 16)
    f = GridField(g, np.sin(2 * np.pi * g.coords[:, 0]), {"kind": "test"})
    assert f.at(np.array([1.0 / 16 + 3.0]))[0] == pytest.approx(np.sin(2 * np.pi / 16))
    assert f.mean() == pytest.approx(0.0, abs=1e-12)
    csv_path, json_path = write_field(tmp_path / "f", f)
    assert csv_path.read_text().splitlines()[0] == "x,value"
    assert '"geometry": "torus"' in json_path.read_text()
    bf = GridField(box_grid(1.0, 0.5), np.zeros(5))
    assert np.isnan(bf.at(np.array([2.0]))[0])


def test_constant_cost_periodic():
    c = 0.7
    for lam in (0.1, 1.0):
        w, rep = solve_discounted_periodic(separable(constant_cost(c)), 0.0, lam, torus_grid(1 / 50))
        assert np.max(np.abs(w.values - c / lam)) <= 1e-10
        assert rep.final_update <= rep.tolerance * (1 + w.sup_norm())


def test_constant_cost_constrained():
    w, _ = solve_discounted_constrained(separable(constant_cost(-0.4), zero_defect()), 0.5, 2.0, h=0.05)
    assert np.max(np.abs(w.values - (-0.4 / 0.5))) <= 1e-10


def test_sin_cell_problem_mean():
    lam = 1e-2
    w, _ = solve_discounted_periodic(separable(sin_cost()), 0.0, lam, torus_grid(1 / 400))
    assert 0.95 <= -lam * w.mean() <= 1.05


def test_translation_equivariance():
    h = 1 / 200
    g = torus_grid(h)
    half = PeriodicCost(1, lambda y: np.sin(2 * np.pi * (y[:, 0] + 0.5)), name="shifted")
    w1, _ = solve_discounted_periodic(separable(sin_cost()), 0.3, 0.1, g)
    w2, _ = solve_discounted_periodic(separable(half), 0.3, 0.1, g)
    assert np.max(np.abs(w2.values - w1.at(g.coords[:, 0] + 0.5))) <= h


def test_constrained_bounds(flat_spec, sin_spec):
    for spec in (flat_spec, sin_spec):
        lo, hi = spec.to_control_form().cost_range
        for lam in (1.0, 0.1):
            w, _ = solve_discounted_constrained(spec, lam, 2.0, h=0.01)
            assert np.all(lam * w.values >= lo - 1e-9)
            assert np.all(lam * w.values <= hi + 1e-9)


def test_flat_constrained_tends_to_one(flat_spec):
    vals = []
    for lam in (1e-1, 1e-2, 1e-3):
        w, _ = solve_discounted_constrained(flat_spec, lam, 4.0, h=0.01)
        vals.append(-lam * w.values[w.grid.node_index(np.zeros(1))[0]])
    assert np.max(np.abs(np.array(vals) - 1.0)) <= 2e-2


def test_eps_problem_zero_data():
    spec = separable(zero_cost(), zero_defect())
    u, _ = solve_eps_problem(spec, 1.0, 0.1, box_grid(1.0, 0.005))
    assert np.max(np.abs(u.values)) <= 1e-12


def test_eps_problem_origin_value(flat_spec):
    eps = 0.05
    g = box_grid(2.0, eps / 20)
    u, _ = solve_eps_problem(flat_spec, 1.0, eps, g)
    assert abs(u.values[g.node_index(np.zeros(1))[0]] + 1.0) <= 0.05


def test_eps_problem_comparison_bound(sin_spec):
    eps = 0.1
    u, _ = solve_eps_problem(sin_spec, 1.0, eps, box_grid(2.0, eps / 20))
    y = np.linspace(-3, 3, 20001)
    h0 = eval_hamiltonian(sin_spec, y, np.zeros_like(y))
    assert np.all(u.values >= -np.max(h0) - 1e-9)
    assert np.all(u.values <= -np.min(h0) + 1e-9)


def test_eps_problem_guards(flat_spec):
    with pytest.raises(ValueError, match="too coarse"):
        solve_eps_problem(flat_spec, 1.0, 0.1, box_grid(1.0, 0.05))
    with pytest.raises(ValueError):
        solve_eps_problem(flat_spec, 1.0, 0.1, torus_grid(0.01))
    with pytest.raises(ValueError):
        solve_eps_problem(flat_spec, 1.0, 1.0, box_grid(0.25, 0.01))


def test_policy_and_value_iteration_agree(sin_spec):
    g = box_grid(1.0, 0.01)
    u1, _ = solve_eps_problem(sin_spec, 1.0, 0.2, g)
    u2, rep = solve_eps_problem(sin_spec, 1.0, 0.2, g, method="value", tol=1e-11)
    assert rep.method == "value"
    assert np.max(np.abs(u1.values - u2.values)) <= 1e-8


def test_value_iteration_contracts(sin_spec):
    g = box_grid(1.0, 0.02)
    _, rep = solve_eps_problem(sin_spec, 1.0, 0.2, g, method="value", keep_history=True)
    hist = np.array(rep.history)
    gamma = rep.contraction
    assert 0 < gamma < 1
    ratio = hist[11:] / hist[10:-1]
    assert np.all(ratio <= gamma * (1 + 1e-6))


def test_non_convergence_is_reported(sin_spec):
    with pytest.raises(ConvergenceError) as info:
        solve_control_problem(sin_spec, box_grid(1.0, 0.02), sin_spec.spatial_cost, 1.0,
                              method="value", max_iter=5)
    assert info.value.residual > 0


def _smooth_cost(coeffs):
    a, b, c, d = coeffs
    return lambda x: a * np.sin(3 * x[:, 0] + b) + c * np.cos(5 * x[:, 0]) + d


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4),
       st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_scheme_monotone_in_cost(base, bump):
    """Raising the running cost never lowers the solution."""
    spec = separable(zero_cost()).to_control_form()
    g = box_grid(1.0, 0.02)
    low = _smooth_cost(base)
    extra = _smooth_cost(bump)
    high = lambda x: low(x) + np.abs(extra(x))
    w1, _ = solve_control_problem(spec, g, low, 1.0)
    w2, _ = solve_control_problem(spec, g, high, 1.0)
    assert np.all(w2 >= w1 - 1e-10)


@pytest.mark.parametrize("lam", [1e-1, 1e-2])
def test_lipschitz_bound_uniform(sin_spec, lam):
    ctrl = sin_spec.to_control_form()
    bound = 2 * ctrl.cost_bound / ctrl.controls.inner_radius
    w, _ = solve_discounted_periodic(sin_spec, 0.0, lam, torus_grid(1 / 200))
    assert w.lipschitz() <= bound + 0.1
    for R in (2.0, 4.0):
        w, _ = solve_discounted_constrained(sin_spec, lam, R, h=0.01)
        assert w.lipschitz() <= bound + 0.1


def test_two_dimensional_constant_and_symmetry():
    spec = separable(zero_cost(2), cos2_bump(dim=2), relativistic_kinetic(2))
    w, _ = solve_discounted_constrained(spec, 0.5, 2.0, h=0.1)
    assert np.all(np.isfinite(w.values))
    x = w.coords
    # mirror symmetry of the data survives the scheme
    assert np.max(np.abs(w.values - w.at(x * np.array([-1.0, 1.0])))) <= 1e-9
    c, _ = solve_discounted_constrained(separable(constant_cost(1.0, 2), None, relativistic_kinetic(2)),
                                        0.5, 2.0, h=0.1)
    assert np.max(np.abs(c.values - 2.0)) <= 1e-10


def test_determinism(sin_spec):
    g = box_grid(2.0, 0.005)
    u1, _ = solve_eps_problem(sin_spec, 1.0, 0.1, g)
    u2, _ = solve_eps_problem(sin_spec, 1.0, 0.1, g)
    assert np.array_equal(u1.values, u2.values)
