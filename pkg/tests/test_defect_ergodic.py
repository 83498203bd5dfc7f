import numpy as np
import pytest

from hjdefect.defect_ergodic import (
    analytic_E_1d,
    analytic_E_radial,
    ergodic_constant,
    ergodic_constant_truncated,
    monotonicity_violation,
)
from hjdefect.scalar_fields import constant_cost, cos2_bump, relativistic_kinetic, sin_cost, zero_cost, zero_defect

from conftest import separable


def test_zero_cost_gives_zero():
    est = ergodic_constant_truncated(separable(zero_cost(), zero_defect()), 2.0)
    assert est.value == pytest.approx(0.0, abs=1e-6)


def test_flat_R4(flat_spec):
    est = ergodic_constant_truncated(flat_spec, 4.0)
    assert est.value == pytest.approx(1.0, abs=2e-2)
    assert est.warning is None


def test_sin_R6(sin_spec):
    est = ergodic_constant_truncated(sin_spec, 6.0)
    assert est.value == pytest.approx(1.618, abs=3e-2)


def test_flat_sweep(flat_spec):
    est = ergodic_constant(flat_spec, (2.0, 4.0, 8.0))
    assert est.E == pytest.approx(1.0, abs=2e-2)
    assert est.converged and est.monotonicity_violation <= 1e-2
    assert set(est.as_dict()) >= {"E", "E_R", "sequences", "lambdas"}


def test_no_defect_matches_periodic_minimum(sin_table):
    est = ergodic_constant(separable(sin_cost(), zero_defect()), (2.0, 4.0, 8.0), jobs=2)
    assert est.E == pytest.approx(1.0, abs=3e-2)
    assert abs(est.E - sin_table.min_value) <= 3e-2
    assert est.monotonicity_violation <= 1e-2


def test_sweep_validation(flat_spec):
    with pytest.raises(ValueError):
        ergodic_constant(flat_spec, (2.0, 4.0))
    with pytest.raises(ValueError):
        ergodic_constant(flat_spec, (4.0, 2.0, 8.0))
    with pytest.raises(ValueError):
        ergodic_constant_truncated(flat_spec, 0.4)


def test_monotonicity_violation():
    assert monotonicity_violation([1.0, 1.1, 1.2]) == 0.0
    assert monotonicity_violation([1.0, 0.9, 1.2]) == pytest.approx(0.1)


def test_analytic_oracles():
    assert analytic_E_1d(zero_cost(), cos2_bump()) == pytest.approx(1.0)
    assert analytic_E_1d(sin_cost(), cos2_bump()) == pytest.approx(1.6180, abs=1e-4)
    assert analytic_E_1d(zero_cost(), cos2_bump(2.0)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        analytic_E_1d(zero_cost(), cos2_bump(-1.0))
    assert analytic_E_radial(0.0, cos2_bump(dim=2)) == 1.0
    assert analytic_E_radial(0.7, zero_defect()) == 0.7


def test_upward_defect_is_invisible(sin_table):
    est = ergodic_constant(separable(sin_cost(), cos2_bump(-1.0)), (2.0, 4.0, 8.0))
    assert est.E == pytest.approx(sin_table.min_value, abs=2e-2)


def test_downward_strictly_above_periodic_minimum(flat_spec, sin_spec, sin_table, flat_table):
    assert ergodic_constant(flat_spec).E > flat_table.min_value + 0.5
    assert ergodic_constant(sin_spec).E > sin_table.min_value + 0.5


def test_constant_shift():
    base = ergodic_constant_truncated(separable(sin_cost(), zero_defect()), 2.0).value
    per = sin_cost()
    from hjdefect.scalar_fields import PeriodicCost

    lifted = PeriodicCost(1, lambda y: per(y) + 0.3, name="lifted")
    moved = ergodic_constant_truncated(separable(lifted, zero_defect()), 2.0).value
    # H = |p| - l, so adding c to the cost lowers E by c
    assert moved == pytest.approx(base - 0.3, abs=1e-6)
    const = ergodic_constant_truncated(separable(constant_cost(0.25), zero_defect()), 2.0).value
    assert const == pytest.approx(-0.25, abs=1e-6)


def test_deeper_defect_raises_E():
    vals = [ergodic_constant_truncated(separable(zero_cost(), cos2_bump(d)), 2.0).value for d in (0.5, 1.0, 1.5)]
    assert np.all(np.diff(vals) > 0)


def test_radial_2d():
    spec = separable(zero_cost(2), cos2_bump(dim=2), relativistic_kinetic(2))
    est = ergodic_constant_truncated(spec, 4.0)
    assert est.value == pytest.approx(analytic_E_radial(0.0, spec.defect), abs=5e-2)
