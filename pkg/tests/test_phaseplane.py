import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockopt import phaseplane as pp
from blockopt.blocks import block_resource
from blockopt.equilibrium import polish
from blockopt.model import BangBangResource, Domain, Params
from blockopt.phaseplane import OFF, ON, PhaseCurve
from blockopt.verify import surgery_instances


@pytest.fixture(scope="module")
def instances():
    found = surgery_instances()
    assert len(found) >= 5
    return found


@pytest.fixture(scope="module")
def case(instances):
    return instances[1]


def test_curve_relations():
    off, on = PhaseCurve(OFF, 0.1), PhaseCurve(ON, 1 / 3)
    th = np.linspace(0.05, 0.9, 7)
    np.testing.assert_allclose(off.slope_squared(th), (2 / 3) * th**3 + 0.1)
    # the E = 1/3 on-curve factors as (1/3)(theta - 1)^2 (2 theta + 1)
    np.testing.assert_allclose(on.slope_squared(th), (th - 1) ** 2 * (2 * th + 1) / 3, atol=1e-15)
    c = PhaseCurve.through_state(ON, 0.4, -0.2)
    assert c.branch == -1 and c.slope(0.4) == pytest.approx(-0.2)


def test_x_advance_zero_length():
    assert pp.x_advance(PhaseCurve(OFF, 0.2), 0.3, 0.3) == 0.0


def test_x_advance_diverges_into_zero():
    # off-curve through the origin: reaching theta = 0 takes infinite length
    dist = pp.x_advance(PhaseCurve(OFF, 0.0), 0.5, 0.0)
    assert math.isinf(dist)


def test_x_advance_errors():
    # admissible at both ends, with the gap between two turning points inside
    on = PhaseCurve(ON, 0.2)
    with pytest.raises(pp.TurningPointInsideRange):
        pp.x_advance(on, 0.05, 1.5)
    with pytest.raises(pp.NonAdmissibleRange):
        pp.x_advance(PhaseCurve(ON, 0.0), 0.5, 0.6)


def test_x_advance_closed_form():
    # (theta')^2 = (2/3) theta^3 + E with E = 0 is theta' = sqrt(2/3) theta^{3/2},
    # so x = sqrt(6) (theta_a^{-1/2} - theta_b^{-1/2})
    exact = math.sqrt(6) * (0.2**-0.5 - 0.7**-0.5)
    assert pp.x_advance(PhaseCurve(OFF, 0.0), 0.2, 0.7) == pytest.approx(exact, rel=1e-12)
    assert pp.x_advance(PhaseCurve(OFF, 0.0, -1), 0.7, 0.2) == pytest.approx(exact, rel=1e-12)


def test_on_branch_spans_block_resource():
    l, b = 3.0, 0.6
    ps = polish(block_resource(l, b), Params(mu=1.0))
    th0, _ = ps.state(0.0)
    thb, dthb = ps.state(b)
    curve = PhaseCurve.through_state(ON, thb, dthb)
    assert pp.x_advance(curve, th0, thb) == pytest.approx(b, abs=1e-6)


def test_intersect_closed_form():
    th, d = pp.intersect(PhaseCurve(OFF, 0.0), PhaseCurve(ON, 1 / 3))
    assert th == pytest.approx(1 / math.sqrt(3), rel=1e-15)
    assert d == pytest.approx(math.sqrt(2 / 3) * 3 ** -0.75, rel=1e-15)


def test_intersect_identical_curves():
    with pytest.raises(pp.IdenticalCurves):
        pp.intersect(PhaseCurve(ON, 0.2), PhaseCurve(ON, 0.2))
    assert pp.intersect(PhaseCurve(ON, 0.2), PhaseCurve(ON, 0.3)) is None


def test_point_d_from_curves_one_and_four(instances):
    for *_, inst in instances:
        c1, _, _, c4 = inst.curves
        th, _ = pp.intersect(c1, c4)
        assert th == pytest.approx(inst.theta_d, rel=1e-14)
        assert pp.zeta(inst, inst.T) < 0


def test_instance_structure(instances):
    for m, p, sol, inst in instances:
        c = inst.cuts
        assert all(a < b for a, b in zip(c, c[1:]))
        assert inst.T >= 0
        assert inst.theta_start < inst.theta_a < inst.theta_b < inst.theta_c < inst.theta_end


def test_functionals_vanish_at_zero(case):
    inst = case[3]
    assert pp.zeta(inst, 0.0) == 0.0
    assert pp.xi(inst, 0.0) == 0.0
    assert pp.eta_fn(inst, 0.0) == 0.0


def test_zeta_prime_negative_and_matches_fd(instances):
    for *_, inst in instances:
        T = inst.T
        for t in np.linspace(0, T, 10)[1:-1]:
            zp = pp.zeta_prime(inst, t)
            assert zp < 0
            h = 1e-6 * T
            fd = (pp.zeta(inst, t + h) - pp.zeta(inst, t - h)) / (2 * h)
            assert fd == pytest.approx(zp, rel=1e-6)


def test_zeta_at_T_two_ways(instances):
    for *_, inst in instances:
        z_direct, xi_direct = pp.direct_functionals(inst)
        assert pp.zeta(inst, inst.T) == pytest.approx(z_direct, abs=1e-8)
        assert pp.xi(inst, inst.T) == pytest.approx(xi_direct, abs=1e-7)


def test_xi_prime_sandwich(instances):
    for *_, inst in instances:
        for t in np.linspace(0, inst.T, 12)[1:-1]:
            zp, xp = pp.zeta_prime(inst, t), pp.xi_prime(inst, t)
            assert inst.theta_end * zp <= xp <= inst.theta_start * zp


def test_eta_below_xi(instances):
    for *_, inst in instances:
        assert pp.eta_fn(inst, inst.T) - pp.xi(inst, inst.T) < 0


def test_eta_prime_two_quadratures(instances):
    for *_, inst in instances:
        for t in (0.2 * inst.T, 0.6 * inst.T, 0.95 * inst.T):
            assert pp.eta_prime(inst, t) == pytest.approx(pp.eta_prime_boundary(inst, t), rel=1e-6)


def test_t_outside_range(case):
    inst = case[3]
    with pytest.raises(ValueError):
        pp.zeta(inst, 2 * inst.T)


def test_improve_rejects_block():
    m = BangBangResource(Domain(0.0, 1.0), ((0.0, 0.3),))
    with pytest.raises(pp.AlreadyDecomposable):
        pp.improve_resource(m, Params())


def test_improve_conserves_population(instances):
    for m, p, sol, _ in instances:
        m_hat, rep = pp.improve_resource(m, p, sol)
        assert rep.mass_after - rep.mass_before < -1e-8
        assert m_hat.mass == pytest.approx(rep.mass_after, abs=1e-15)
        assert abs(rep.pop_after - rep.pop_before) <= 1e-6
        assert len(rep.x_hat) == 3


def test_improve_shrinks_level_sets(instances):
    # small-m0 cases: both {m = 1} and {m = 0} lose measure to the plateaus
    for m, p, sol, _ in instances:
        m_hat, _ = pp.improve_resource(m, p, sol)
        assert m_hat.level_set_measure(1.0) < m.level_set_measure(1.0)
        assert m_hat.level_set_measure(0.0) < m.level_set_measure(0.0)


def test_block_refine_identity_on_block():
    m = BangBangResource(Domain(0.0, 1.0), ((0.0, 0.3),))
    out = pp.block_refine(m, Params())
    assert out.surgeries == 0
    assert out.resource == m
    assert out.partition == (0.0, 1.0)
    assert out.kinds == ("characteristic",)


def test_block_refine_on_instance(case):
    m, p, sol, _ = case
    out = pp.block_refine(m, p)
    assert out.surgeries >= 1
    assert out.mass_after < out.mass_before
    assert abs(out.pop_after - out.pop_before) <= 1e-6
    assert "monotone" not in out.kinds
    for x in sol.critical:
        assert min(abs(x - y) for y in out.partition) <= 1e-9
    # each characteristic span now holds a single off/on switch
    for (lo, hi), kind in zip(zip(out.partition, out.partition[1:]), out.kinds):
        pieces = [v for l, r, v in out.resource.cells() if min(r, hi) - max(l, lo) > 1e-10]
        assert len(pieces) <= 2 if kind == "characteristic" else len(pieces) == 1


@given(st.floats(1e-3, 1.0), st.floats(0.05, 0.95))
def test_x_advance_is_additive(energy, frac):
    c = PhaseCurve(OFF, energy)
    a, b = 0.1, 0.8
    mid = a + frac * (b - a)
    whole = pp.x_advance(c, a, b)
    assert pp.x_advance(c, a, mid) + pp.x_advance(c, mid, b) == pytest.approx(whole, rel=1e-9)
    assert pp.x_advance(c, b, a) == pytest.approx(-whole, rel=1e-12)
