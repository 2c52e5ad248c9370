import csv
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockopt.equilibrium import (NoConvergence, ZeroMass, comparability_check, count_extrema,
                                  critical_points, march, polish, residual, solve, total_population)
from blockopt.model import BangBangResource, ConstantResource, Domain, GridFunction, Params
from blockopt.verify import energy_variation

DATA = Path(__file__).parent / "data"

# F for m = chi_(0, 0.5), mu = 1 on (0, 1) from scipy's collocation solver
# (solve_bvp at tol 1e-12 on the two-cell system), independent of this package
F_HALF_LEFT_BVP = 0.5188001842296576


def test_constant_resource_is_exact(unit):
    sol = solve(ConstantResource(unit, 0.3), Params())
    assert np.all(sol.theta.values == 0.3)
    assert sol.residual_norm == 0.0
    assert total_population(sol) == pytest.approx(0.3, abs=1e-15)


def test_full_resource(unit):
    sol = solve(ConstantResource(unit, 1.0), Params())
    assert np.all(sol.theta.values == 1.0)
    assert total_population(solve(ConstantResource(Domain(0.0, 2.5), 1.0), Params())) == pytest.approx(2.5)


def test_zero_mass_rejected(unit):
    with pytest.raises(ZeroMass):
        solve(BangBangResource(unit, ()), Params())


def test_half_left_matches_march(half_left, default_params):
    sol = solve(half_left, default_params)
    ref = march(half_left, default_params, np.full(default_params.grid_n + 1, 0.5))
    assert np.max(np.abs(sol.theta.values - ref.theta.values)) <= 1e-6
    assert sol.residual_norm <= default_params.tol_residual


def test_march_fixed_point_immediately(unit):
    m = ConstantResource(unit, 0.2)
    sol = march(m, Params(), np.full(513, 0.2))
    assert sol.iterations == 1
    # one banded solve with condition ~dt mu / h^2; only rounding moves it
    np.testing.assert_allclose(sol.theta.values, 0.2, rtol=0, atol=1e-12)


def test_march_forgets_initial_condition(half_left, default_params):
    n1 = default_params.grid_n + 1
    a = march(half_left, default_params, np.full(n1, 0.05))
    b = march(half_left, default_params, GridFunction(half_left.domain, np.linspace(0.1, 0.9, n1)))
    assert np.max(np.abs(a.theta.values - b.theta.values)) <= 1e-6


def test_march_rejects_zero_start(half_left):
    with pytest.raises(ValueError):
        march(half_left, Params(), np.zeros(513))


def test_march_reports_best_iterate(half_left):
    with pytest.raises(NoConvergence) as info:
        march(half_left, Params(), np.full(513, 0.5), max_steps=3)
    assert info.value.best is not None and info.value.residual > 0


def test_half_left_population_against_bvp_oracle(half_left, default_params):
    sol = solve(half_left, default_params)
    F = total_population(sol)
    assert 0.5 <= F <= 1.5
    # O(h^2) discretization error at n = 512
    assert abs(F - F_HALF_LEFT_BVP) <= 2e-7
    assert abs(polish(half_left, default_params).population - F_HALF_LEFT_BVP) <= 1e-10


def test_half_left_golden_csv(half_left, default_params):
    sol = solve(half_left, default_params)
    with open(DATA / "half_left_mu1.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "theta", "dtheta", "m"]
    gold = np.array(rows[1:], dtype=float)
    assert gold.shape == (513, 4)
    np.testing.assert_allclose(gold[:, 0], sol.x, rtol=0, atol=1e-15)
    np.testing.assert_allclose(gold[:, 1], sol.theta.values, rtol=0, atol=1e-12)
    np.testing.assert_allclose(gold[:, 2], sol.dtheta.values, rtol=0, atol=1e-10)
    np.testing.assert_array_equal(gold[:, 3], sol.coeff)


def test_lower_bound_attained_by_constant(unit):
    sol = solve(ConstantResource(unit, 0.1), Params())
    assert total_population(sol) == pytest.approx(0.1, abs=1e-15)


def test_comparability_constant(unit):
    tmin, tmax, ratio = comparability_check(solve(ConstantResource(unit, 0.4), Params()))
    assert ratio == 1.0 and tmin == tmax == 0.4


def test_comparability_small_m0(unit):
    ratios = []
    for m0 in (0.02, 0.01, 0.005):
        m = BangBangResource(unit, ((0.0, m0),))
        tmin, tmax, ratio = comparability_check(solve(m, Params(mu=1.0, grid_n=1024)), m0)
        assert tmin <= 3 * m0
        assert tmax >= m0
        ratios.append(ratio)
    # observed: 1.0099, 1.0050, 1.0025
    assert max(ratios) < 1.02
    assert ratios[0] > ratios[1] > ratios[2] > 1.0


def test_second_order_convergence_aligned(unit):
    m = BangBangResource(unit, ((0.125, 0.375), (0.5, 0.5625)))
    a, b, c = (solve(m, Params(mu=0.3, grid_n=n)).theta.values for n in (256, 512, 1024))
    ratio = np.max(np.abs(a - b[::2])) / np.max(np.abs(b - c[::2]))
    assert 3.5 <= ratio <= 4.5


def test_symmetric_interior_has_one_maximum(unit):
    m = BangBangResource(unit, ((0.35, 0.65),))
    sol = solve(m, Params(mu=0.05))
    crit = critical_points(sol)
    assert crit == pytest.approx([0.5], abs=1e-9)
    assert count_extrema(sol) == 1
    assert polish(m, Params(mu=0.05)).critical == pytest.approx((0.5,), abs=1e-9)


def test_discrete_residual_and_neumann(half_left, default_params):
    sol = solve(half_left, default_params)
    r = residual(sol.theta.values, sol.coeff, sol.mu, sol.h)
    assert np.max(np.abs(r)) <= default_params.tol_residual
    t = sol.theta.values
    # ghost-node Neumann: the one-sided second-order differences vanish
    h = sol.h
    assert abs(-3 * t[0] + 4 * t[1] - t[2]) / (2 * h) <= 1e-5
    assert abs(3 * t[-1] - 4 * t[-2] + t[-3]) / (2 * h) <= 1e-5


def test_polished_energy_constant_per_cell(unit):
    m = BangBangResource(unit, ((0.1, 0.3), (0.6, 0.7)))
    ps = polish(m, Params(mu=0.2))
    for i, c in enumerate(ps.cells):
        right = ps.mu * c.dtheta_right**2 - (2 / 3) * c.theta_right**3 + c.value * c.theta_right**2
        assert right == pytest.approx(ps.energy(i), abs=1e-12)
    assert ps.shoot_residual < 1e-10


interval_sets = st.lists(st.floats(0.0, 1.0, allow_nan=False, allow_infinity=False),
                         min_size=2, max_size=8, unique=True).map(sorted).filter(
    lambda p: all(b - a > 1e-3 for a, b in zip(p, p[1:])))


def _resource(pts):
    pts = pts[: len(pts) // 2 * 2]
    return BangBangResource(Domain(0.0, 1.0), tuple(zip(pts[::2], pts[1::2])))


@given(interval_sets, st.floats(math.log(0.1), math.log(10.0)))
def test_solution_properties(pts, log_mu):
    m = _resource(pts)
    p = Params(mu=math.exp(log_mu), grid_n=256)
    sol = solve(m, p)
    t = sol.theta.values
    assert np.all((t > 1e-12) & (t < 1 - 1e-12))
    F = total_population(sol)
    assert m.m0 - 1e-8 <= F <= 3 * m.m0 + 1e-8
    assert count_extrema(sol) <= 2 * len(m.intervals) + 1
    assert energy_variation(sol, m) <= max(1e-8, 20 * sol.h**2)
