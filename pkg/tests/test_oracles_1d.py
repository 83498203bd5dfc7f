import math
import warnings

import numpy as np
import pytest

from hjdefect.oracles_1d import (
    dump_csv,
    flat_solution,
    g_h_periodic,
    two_defect_cost,
    two_defect_min,
    u_eps_flat,
    u_eps_flat_upward,
    upward_solution,
    w_lambda_flat,
)
from hjdefect.scalar_fields import constant_cost, cos2_bump, sin_cost, table_defect, zero_defect

EPS = 0.05


def test_origin_and_limit():
    d = cos2_bump()
    assert u_eps_flat(d, EPS, 0.0) == pytest.approx(-1.0, abs=1e-12)
    assert u_eps_flat(d, EPS, 1.0) == pytest.approx(-math.exp(-1.0), abs=1e-2)


def test_flat_residual():
    d = cos2_bump()
    u = flat_solution(d, EPS)
    xs = np.random.default_rng(0).uniform(-0.5, 0.5, 100)
    xs = xs[np.abs(xs) > 1e-6]
    res = u(xs) + np.abs(u.derivative(xs)) - d(xs[:, None] / EPS)
    assert np.max(np.abs(res)) <= 1e-6


def test_flat_even_and_vectorized():
    u = flat_solution(cos2_bump(), EPS)
    xs = np.linspace(-1, 1, 201)
    assert np.max(np.abs(u(xs) - u(-xs))) <= 1e-12
    assert np.max(np.abs(u(xs) - np.array([u.value(x) for x in xs]))) <= 1e-14


def test_flat_requires_flags():
    with pytest.raises(ValueError):
        flat_solution(cos2_bump(-1.0), EPS)


def test_upward():
    assert u_eps_flat_upward(zero_defect(), EPS, 0.3) == 0.0
    up = cos2_bump(-1.0)
    assert abs(u_eps_flat_upward(up, EPS, 0.0)) <= 0.05
    u = upward_solution(up, EPS)
    xs = np.linspace(-0.1, 0.1, 201)
    assert np.all(u(xs) >= 0.0)
    ys = xs[(np.abs(xs) > 1e-6) & (np.abs(xs) < EPS / 2)]
    res = u(ys) + np.abs(u.derivative(ys)) - up(ys[:, None] / EPS)
    assert np.max(np.abs(res)) <= 1e-6
    with pytest.raises(ValueError):
        upward_solution(cos2_bump(), EPS)


def test_w_lambda():
    d = cos2_bump()
    lam = 1e-3
    assert -lam * w_lambda_flat(d, lam, 0.0).value == pytest.approx(1.0, abs=1e-3)
    # 3 * 1 + int_0^3 l0 = 3 - 1/4
    assert w_lambda_flat(d, lam, 3.0).limit == pytest.approx(2.75, abs=1e-8)
    assert w_lambda_flat(d, lam, 3.0).normalized == pytest.approx(2.75, abs=1e-2)
    assert w_lambda_flat(zero_defect(), lam, 1.0) == (0.0, 0.0, 0.0)


def test_g_h_periodic():
    g, h = g_h_periodic(constant_cost(0.4), 0.1)
    assert g(0.37) == pytest.approx(0.4, abs=1e-12) and h(0.37) == pytest.approx(0.4, abs=1e-12)
    per = sin_cost()
    g, h = g_h_periodic(per, 0.1)
    xs = 0.1 * np.arange(200) / 200
    assert abs(np.mean(g(xs)) - per.mean) <= 1e-8
    ys = np.linspace(0, 0.3, 50)
    lp = per(ys[:, None] / 0.1)
    assert np.max(np.abs(g(ys) + g.derivative(ys) - lp)) <= 1e-6
    assert np.max(np.abs(h(ys) - h.derivative(ys) - lp)) <= 1e-6


def test_two_defects():
    d = cos2_bump()
    u = flat_solution(d, EPS)
    assert two_defect_min(d, EPS, EPS / 2) == pytest.approx(u(EPS / 2))
    left = np.linspace(-EPS / 2, 0.0, 30)
    assert np.allclose(two_defect_min(d, EPS, left), u(left))
    # residual of z + |z'| = l0(x/eps) + l0((x - eps)/eps) away from the kinks 0, eps/2, eps
    xs = np.random.default_rng(1).uniform(-0.3, 0.3, 100)
    xs = xs[np.min(np.abs(xs[:, None] - np.array([0.0, EPS / 2, EPS])), axis=1) > 1e-4]
    z = two_defect_min(d, EPS, xs)
    dz = np.where(u(xs) <= u(xs - EPS), u.derivative(xs), u.derivative(xs - EPS))
    res = z + np.abs(dz) - two_defect_cost(d, EPS, xs)
    assert np.max(np.abs(res)) <= 1e-5


def test_two_defects_warns_if_not_even():
    ys = np.linspace(-0.5, 0.5, 101)
    skew = table_defect(ys, -np.cos(np.pi * ys) ** 2 * (1 + 0.3 * (ys < 0)) * (ys != 0.5))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            two_defect_min(skew, EPS, 0.0)
        except ValueError:
            pass
    assert any("even" in str(w.message) for w in caught)


def test_dump_csv(tmp_path):
    path = tmp_path / "u.csv"
    dump_csv(flat_solution(cos2_bump(), EPS), np.linspace(-1, 1, 5), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,value" and len(lines) == 6
