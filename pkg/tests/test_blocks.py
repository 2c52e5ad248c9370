import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockopt import blocks
from blockopt.blocks import (LEFT, RIGHT, Block, BlockConfig, NotDecomposable, RegimeViolation,
                             StepUnderflow, advantage, advantage_partials, advantage_surface,
                             advantage_via_rescaling, block_decompose, block_resource,
                             optimize_small_resource, superlinearity_check, surface_csv)
from blockopt.model import BangBangResource, Domain, Params
from blockopt.verify import SURGERY_CASES

P = Params()


def test_block_validation():
    with pytest.raises(ValueError):
        Block(1.0, 1.5)
    with pytest.raises(ValueError):
        Block(0.0, 0.0)
    cfg = BlockConfig((Block(1.0, 0.1), Block(2.0, 0.2, RIGHT)), 3.0, 1.0)
    assert cfg.total_length == 3.0 and cfg.total_resource == pytest.approx(0.3) and cfg.l_max == 2.0
    assert block_resource(2.0, 0.5, RIGHT).intervals == ((1.5, 2.0),)


def test_decompose_boundary_block():
    mu = 4.0
    cfg = block_decompose(BangBangResource(Domain(0.0, 1.0), ((0.0, 0.3),)), Params(mu=mu))
    assert isinstance(cfg, BlockConfig)
    (blk,) = cfg.blocks
    assert blk.l == pytest.approx(1 / math.sqrt(mu))
    assert blk.b == pytest.approx(0.3 / math.sqrt(mu))
    assert blk.orientation == LEFT


def test_decompose_symmetric_interior():
    p = Params(mu=0.05)
    cfg = block_decompose(BangBangResource(Domain(0.0, 1.0), ((0.35, 0.65),)), p)
    assert len(cfg.blocks) == 2
    left, right = cfg.blocks
    rs = math.sqrt(p.mu)
    assert left.l == pytest.approx(0.5 / rs, rel=1e-9) and right.l == pytest.approx(0.5 / rs, rel=1e-9)
    assert (left.orientation, right.orientation) == (RIGHT, LEFT)
    # population splits into the block advantages
    total = 0.3 + rs * (advantage(left.l, left.b, P, method="shoot") + advantage(right.l, right.b, P, method="shoot"))
    from blockopt.equilibrium import polish
    pop = polish(BangBangResource(Domain(0.0, 1.0), ((0.35, 0.65),)), p).population
    assert total == pytest.approx(pop, abs=1e-9)


def test_decompose_surgery_case():
    ivs, mu = SURGERY_CASES[1]
    out = block_decompose(BangBangResource(Domain(0.0, 1.0), ivs), Params(mu=mu))
    assert isinstance(out, NotDecomposable)
    lo, hi = out.span
    assert 0.0 <= lo < hi <= 1.0
    assert out.pattern.count(1.0) >= 2


@pytest.mark.parametrize("l", [0.3, 1.0, 4.0, 9.0])
def test_advantage_edges(l):
    assert advantage(l, 0.0, P) == 0.0
    assert advantage(l, l, P) == 0.0


@given(st.floats(0.2, 8.0), st.floats(0.02, 0.98))
def test_advantage_band(l, r):
    b = l * r
    h = advantage(l, b, Params(grid_n=256))
    assert -1e-12 <= h <= 2 * b + 1e-12


def test_rescaling_identity():
    for l, b in [(0.5, 0.1), (2.0, 0.5), (6.0, 0.3)]:
        assert advantage(l, b, P) == pytest.approx(advantage_via_rescaling(l, b, P), abs=1e-12)


def test_mirror_symmetry():
    for l, b in [(1.0, 0.2), (3.0, 0.06)]:
        assert advantage(l, b, P, RIGHT) == pytest.approx(advantage(l, b, P, LEFT), abs=1e-14)


def test_surface_edges_and_order():
    rows = advantage_surface((0.5, 4.0), (0.0, 1.0), 5, P)
    assert [r[:2] for r in rows[:5]] == [(0.5, 0.0), (0.5, 0.25), (0.5, 0.5), (0.5, 0.75), (0.5, 1.0)]
    for l, r, h in rows:
        if r in (0.0, 1.0):
            assert h == 0.0
    text = surface_csv(rows)
    assert text.splitlines()[0] == "l,b_over_l,H"
    assert text == surface_csv(advantage_surface((0.5, 4.0), (0.0, 1.0), 5, P))


@pytest.mark.parametrize("l", [1.0, 2.0, 4.0])
def test_small_b_law(l):
    b = 0.01 * l
    assert advantage(l, b, P) / (l * b * b) == pytest.approx(1 / 3, rel=0.05)


@pytest.mark.xfail(strict=True, reason="H has a positive Hessian eigenvalue for l below ~3.5 "
                                       "(NSD fraction about 0.79 on this box)")
def test_hessian_mostly_negative_semidefinite():
    pts = [(l, r * l) for l in np.linspace(2.0, 10.0, 6) for r in np.linspace(0.2, 0.8, 5)]
    assert blocks.hessian_nsd_fraction(pts, P) >= 0.95


def test_hessian_nsd_for_long_blocks():
    pts = [(l, r * l) for l in (5.0, 10.0) for r in (0.2, 0.8)]
    assert blocks.hessian_nsd_fraction(pts, P) == 1.0


def test_partial_in_l_small_b():
    dl, _ = advantage_partials(2.0, 0.02, P)
    assert dl == pytest.approx(0.02**2 / 3, rel=0.2)


@pytest.mark.parametrize("l,b", [(1.0, 0.01), (2.0, 0.02), (4.0, 0.04), (3.0, 0.06), (1.5, 0.03)])
def test_partial_in_b(l, b):
    _, db = advantage_partials(l, b, P)
    # oracle: centered differences of the shooting-refined advantage
    s = 1e-4 * b
    oracle = (advantage(l, b + s, P, method="shoot") - advantage(l, b - s, P, method="shoot")) / (2 * s)
    assert db == pytest.approx(oracle, rel=1e-4)
    # d(int theta)/db = 1 + (2/3) l b + O(b^2), minus the resource itself
    assert db == pytest.approx(2 * l * b / 3, rel=0.1)


def test_partials_mirror():
    a = advantage_partials(2.0, 0.3, P)
    lr = lambda l, b: advantage(l, b, P, RIGHT)
    s = 1e-4 * 0.3
    db_r = (lr(2.0, 0.3 + s) - lr(2.0, 0.3 - s)) / (2 * s)
    assert db_r == pytest.approx(a[1], rel=1e-10)


def test_partials_step_underflow():
    with pytest.raises(StepUnderflow):
        advantage_partials(1.0, 1e-14, P)


def test_superlinearity_zero_and_positive():
    assert superlinearity_check(2.0, 0.0, 2.0, 0.0, P) == 0.0
    assert superlinearity_check(2.0, 0.04, 2.0, 0.04, P) > 0


def test_superlinearity_sweep_small():
    sweep = blocks.superlinearity_sweep([1.0, 2.0, 4.0], [0.01, 0.03, 0.05], P)
    assert len(sweep.samples) == 81
    assert sweep.min_margin > 0 and sweep.positive_fraction == 1.0
    assert sweep.fitted_c > 0


def test_optimize_single_orientation_tie():
    res = optimize_small_resource(1.0, 0.05, 1.0, r_max=1, grid=10)
    assert len(res.configs) == 2
    assert res.populations[0] == res.populations[1]
    assert {c.blocks[0].orientation for c in res.best} == {LEFT, RIGHT}


@pytest.fixture(scope="module")
def optimum():
    return optimize_small_resource(1.0, 0.05, 1.0, r_max=2, grid=20)


def test_optimize_concentrated_block_wins(optimum):
    assert optimum.single_block_wins
    assert len(optimum.best) == 2
    for c in optimum.best:
        (blk,) = c.blocks
        assert blk.l == pytest.approx(1.0) and blk.b == pytest.approx(0.05)
    assert min(optimum.gaps) >= -1e-12


def test_optimize_gap_slope_positive(optimum):
    assert optimum.fitted_C3 > 0
    other = optimize_small_resource(1.0, 0.02, 1.0, r_max=2, grid=20)
    assert other.single_block_wins and other.fitted_C3 > 0
    assert optimum.gap_correlation_comparable > 0 and other.gap_correlation_comparable > 0


def test_optimize_regime_warning():
    with pytest.warns(RegimeViolation):
        optimize_small_resource(1.0, 0.3, 1.0, r_max=1, grid=4)
