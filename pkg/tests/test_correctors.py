import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjdefect.correctors import (
    check_growth,
    check_growth_shifted,
    corrector_piecewise,
    corrector_w,
    find_ptilde,
)
from hjdefect.effective_ham import periodic_corrector
from hjdefect.oracles_1d import w_lambda_flat
from hjdefect.scalar_fields import cos2_bump, sin_cost, zero_cost, zero_defect

from conftest import separable


def test_zero_cost_corrector_vanishes():
    w = corrector_w(separable(zero_cost(), zero_defect()), 2.0)
    assert np.max(np.abs(w.field.values)) <= 1e-9


def test_normalization_and_flat_profile(flat_spec):
    R = 6.0
    w = corrector_w(flat_spec, R)
    i0 = w.field.grid.node_index(np.zeros(1))[0]
    assert w.field.values[i0] == 0.0
    xs = np.linspace(0.0, R - 1.0, 51)
    exact = np.array([w_lambda_flat(cos2_bump(), 1e-3, x).limit for x in xs])
    assert np.max(np.abs(w.at(xs) - exact)) <= 3e-2


def test_lipschitz_independent_of_R(flat_spec):
    lips = [corrector_w(flat_spec, R).field.lipschitz() for R in (2.0, 4.0, 8.0)]
    assert max(lips) / min(lips) <= 1.1


def test_successive_R_agree_locally(flat_spec):
    a = corrector_w(flat_spec, 4.0)
    b = corrector_w(flat_spec, 8.0)
    xs = np.linspace(-3.0, 3.0, 61)
    assert np.max(np.abs(a.at(xs) - b.at(xs))) <= 2 * 5e-2


def test_growth_flat_increasing(flat_spec):
    rep = check_growth(flat_spec, 0.0, (6.0,))[0]
    assert rep.radii == [1.0, 2.0, 3.0, 4.0]
    assert rep.verdict == "increasing"


def test_growth_no_defect_bounded():
    spec = separable(sin_cost(), zero_defect())
    rep = check_growth(spec, 0.0, (6.0,))[0]
    assert rep.bounded_below and not rep.increasing


def test_growth_shifted_same_verdict(flat_spec):
    assert check_growth_shifted(flat_spec, 0.0)[0].verdict == check_growth(flat_spec, 0.0)[0].verdict


def test_ptilde_symmetric_table(flat_table):
    pair = find_ptilde(flat_table, 2.0)
    assert pair.ptilde[0] == pytest.approx(-2.0, abs=1e-3)
    assert not pair.degenerate


def test_ptilde_sin_table(sin_table):
    pair = find_ptilde(sin_table, 2.0)
    assert pair.ptilde[0] == pytest.approx(-2.0, abs=5e-2)
    level = sin_table(pair.ptilde[0])
    assert abs(level - pair.level) <= 1e-3 * (1 + abs(pair.level))


def test_ptilde_plateau_is_degenerate(sin_table):
    pair = find_ptilde(sin_table, 0.5)
    assert pair.degenerate
    assert pair.ptilde[0] == pytest.approx(sin_table.plateau[0])


class _Raised:
    """A table whose minimum is reported above every tabulated level."""

    def __init__(self, table):
        self._t = table
        self.dim, self.p0, self.plateau = table.dim, table.p0, table.plateau
        self.min_value = table.min_value + 10.0

    def __call__(self, p):
        return self._t(p)


def test_ptilde_level_below_minimum(sin_table):
    with pytest.raises(ValueError):
        find_ptilde(_Raised(sin_table), 2.0)


@settings(max_examples=10, deadline=None)
@given(st.floats(1.2, 2.9), st.booleans())
def test_ptilde_invariants_random_levels(sin_table_cached, magnitude, negative):
    table = sin_table_cached
    p = -magnitude if negative else magnitude
    pair = find_ptilde(table, p)
    d, dt = pair.p - table.p0, pair.ptilde - table.p0
    # colinear, on opposite sides of p0, same level
    assert np.allclose(np.outer(d, dt), np.outer(dt, d))
    assert float(d @ pair.e) < 0 < float(dt @ pair.e)
    assert abs(table(pair.ptilde[0]) - table(p)) <= 1e-3


@pytest.fixture(scope="module")
def sin_table_cached(sin_table):
    return sin_table


@pytest.fixture(scope="module")
def sin_piecewise(sin_spec, sin_table):
    pair = find_ptilde(sin_table, 2.0)
    cp = periodic_corrector(sin_spec, 2.0)
    cpt = periodic_corrector(sin_spec, pair.ptilde)
    w = corrector_w(sin_spec, 8.0)
    out = {R: corrector_piecewise(sin_spec, 2.0, pair.ptilde, R, cp, cpt, 1.618, w=w) for R in (4.0, 8.0)}
    return out


def test_piecewise_trivial():
    spec = separable(zero_cost(), zero_defect())
    c1 = periodic_corrector(spec, 1.0)
    c2 = periodic_corrector(spec, -1.0)
    pc = corrector_piecewise(spec, 1.0, -1.0, 4.0, c1, c2, 0.0)
    assert np.max(np.abs(pc.field.values + np.abs(pc.field.coords[:, 0]))) <= pc.field.h


def test_piecewise_sandwich(sin_piecewise):
    for R, pc in sin_piecewise.items():
        assert np.isfinite(pc.upper_constant) and np.isfinite(pc.lower_constant)
        assert pc.sandwich_violation <= pc.field.h
        assert np.all(pc.field.values <= pc.boundary + pc.upper_constant + 1e-12)


def test_piecewise_sublinearity(sin_piecewise):
    ratios = sin_piecewise[8.0].sublinearity([2.0, 4.0, 6.0])
    assert np.all(np.diff(ratios) < 0)


def test_piecewise_needs_level_above_E(sin_spec):
    cp = periodic_corrector(sin_spec, 1.2)
    with pytest.raises(ValueError):
        corrector_piecewise(sin_spec, 1.2, -1.2, 4.0, cp, cp, 1.618)
