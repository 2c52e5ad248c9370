"""Block decomposition, the advantage function and small-resource optimization.

Everything here is in rescaled units: a block of length ``l`` carrying a
resource of length ``b`` at one end solves the unit-diffusion equilibrium
problem on ``(0, l)``.  Physical lengths divide by ``sqrt(mu)``.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import polish, solve, total_population
from .model import BangBangResource, Domain, Params, Resource

LEFT, RIGHT = "resource-left", "resource-right"


class StepUnderflow(ValueError):
    pass


class RegimeViolation(UserWarning):
    """Total resource too large for the small-resource optimality regime."""


@dataclass(frozen=True)
class Block:
    l: float
    b: float
    orientation: str = LEFT

    def __post_init__(self):
        if not self.l > 0:
            raise ValueError("block length must be positive")
        if not -1e-12 * self.l <= self.b <= self.l * (1 + 1e-12):
            raise ValueError(f"need 0 <= b <= l, got b={self.b}, l={self.l}")
        if self.orientation not in (LEFT, RIGHT):
            raise ValueError(f"orientation must be {LEFT!r} or {RIGHT!r}")

    def to_dict(self) -> dict:
        return {"l": self.l, "b": self.b, "orientation": self.orientation}


@dataclass(frozen=True)
class BlockConfig:
    blocks: tuple[Block, ...]
    domain_length: float
    mu: float

    @property
    def total_length(self) -> float:
        return math.fsum(bl.l for bl in self.blocks)

    @property
    def total_resource(self) -> float:
        return math.fsum(bl.b for bl in self.blocks)

    @property
    def l_max(self) -> float:
        return max(bl.l for bl in self.blocks)

    def to_dict(self) -> dict:
        return {"blocks": [bl.to_dict() for bl in self.blocks],
                "domain_length": self.domain_length, "mu": self.mu}


@dataclass(frozen=True)
class NotDecomposable:
    span: tuple[float, float]
    pattern: tuple[float, ...]


def block_resource(l: float, b: float, orientation: str = LEFT) -> BangBangResource:
    dom = Domain(0.0, l)
    if b <= 0.0:
        return BangBangResource(dom, ())
    iv = (0.0, b) if orientation == LEFT else (l - b, l)
    return BangBangResource(dom, (iv,))


def advantage(l: float, b: float, p: Params, orientation: str = LEFT, method: str = "fd") -> float:
    """``H(l, b)``: population of the block equilibrium minus its resource.

    ``method="fd"`` integrates the grid solution (``p.grid_n`` cells);
    ``method="shoot"`` refines it by shooting.  ``p.mu`` is ignored: blocks
    always have unit diffusion.
    """
    if not l > 0:
        raise ValueError("l must be positive")
    if not 0.0 <= b <= l:
        raise ValueError(f"need 0 <= b <= l, got b={b}, l={l}")
    if b == 0.0 or b == l:
        return 0.0
    m = block_resource(l, b, orientation)
    q = p.with_(mu=1.0)
    sol = solve(m, q)
    if method == "shoot":
        return float(polish(m, q, sol).population - b)
    if method != "fd":
        raise ValueError(f"unknown method {method!r}")
    return float(total_population(sol) - b)


def advantage_via_rescaling(l: float, b: float, p: Params) -> float:
    """Same quantity through ``l * F_{1/l^2}(b/l) - b`` on the unit interval."""
    if b == 0.0 or b == l:
        return 0.0
    m = BangBangResource(Domain(0.0, 1.0), ((0.0, b / l),))
    sol = solve(m, p.with_(mu=1.0 / l**2))
    return l * total_population(sol) - b


def advantage_surface(l_range, b_over_l_range, grid, p: Params) -> list[tuple[float, float, float]]:
    """H on a tensor grid, rows ordered with ``l`` outer and ``b/l`` inner."""
    nl, nr = (grid, grid) if isinstance(grid, int) else grid
    ls = np.linspace(l_range[0], l_range[1], nl)
    rs = np.linspace(b_over_l_range[0], b_over_l_range[1], nr)
    rows = []
    for l in ls:
        for r in rs:
            b = float(l * r) if r < 1.0 else float(l)
            rows.append((float(l), float(r), advantage(float(l), b, p)))
    return rows


def surface_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["l", "b_over_l", "H"])
    for l, r, h in rows:
        w.writerow([repr(float(l)), repr(float(r)), repr(float(h))])
    return buf.getvalue()


def advantage_partials(l: float, b: float, p: Params, rel_step: float = 1e-4) -> tuple[float, float]:
    """Centered finite-difference ``(dH/dl, dH/db)``."""
    step = rel_step * min(l, b, l - b)
    if not step > 1e-12 * l:
        raise StepUnderflow(f"finite-difference step {step} too small at (l={l}, b={b})")
    dl = (advantage(l + step, b, p) - advantage(l - step, b, p)) / (2 * step)
    db = (advantage(l, b + step, p) - advantage(l, b - step, p)) / (2 * step)
    return dl, db


def superlinearity_check(l1: float, b1: float, l2: float, b2: float, p: Params, H=None) -> float:
    """``H(l1 + l2, b1 + b2) - H(l1, b1) - H(l2, b2)``."""
    H = H or (lambda l, b: advantage(l, b, p))
    return H(l1 + l2, b1 + b2) - H(l1, b1) - H(l2, b2)


@dataclass
class SuperlinearitySweep:
    """Margins ``H(l1+l2, b1+b2) - H(l1, b1) - H(l2, b2)`` over a product sample."""

    samples: list[tuple[float, float, float, float, float]]
    min_margin: float
    positive_fraction: float
    fitted_c: float
    region: dict

    def to_dict(self) -> dict:
        return {"min_margin": self.min_margin, "positive_fraction": self.positive_fraction,
                "fitted_c": self.fitted_c, "region": self.region, "count": len(self.samples)}


def superlinearity_sweep(l_values, ratio_values, p: Params, H=None) -> SuperlinearitySweep:
    """Evaluate the superlinearity margin on ``l_values^2 x ratio_values^2``.

    ``fitted_c`` is the smallest ``margin / ((l1 + l2)^3 r^2)`` with
    ``r = (b1 + b2) / (l1 + l2)``; ``region`` gives the bounding box of the
    sampled points with positive margin.
    """
    cache: dict[tuple[float, float], float] = {}

    def h(l, b):
        key = (l, b)
        if key not in cache:
            cache[key] = H(l, b) if H is not None else advantage(l, b, p)
        return cache[key]

    out = []
    ls = [float(v) for v in l_values]
    rs = [float(v) for v in ratio_values]
    for l1, l2, r1, r2 in itertools.product(ls, ls, rs, rs):
        b1, b2 = l1 * r1, l2 * r2
        margin = h(l1 + l2, b1 + b2) - h(l1, b1) - h(l2, b2)
        out.append((l1, b1, l2, b2, margin))
    margins = np.array([s[-1] for s in out])
    pos = [s for s in out if s[-1] > 0]
    scale = [(l1 + l2) ** 3 * ((b1 + b2) / (l1 + l2)) ** 2 for l1, b1, l2, b2, _ in out]
    fitted = float(np.min(margins / np.array(scale)))
    if pos:
        region = {"l_min": min(min(s[0], s[2]) for s in pos), "l_max": max(max(s[0], s[2]) for s in pos),
                  "ratio_min": min(min(s[1] / s[0], s[3] / s[2]) for s in pos),
                  "ratio_max": max(max(s[1] / s[0], s[3] / s[2]) for s in pos)}
    else:
        region = {}
    return SuperlinearitySweep(out, float(margins.min()), len(pos) / len(out), fitted, region)


def advantage_hessian(l: float, b: float, p: Params, rel_step: float = 1e-2,
                      method: str = "shoot") -> np.ndarray:
    """Centered finite-difference Hessian of H in ``(l, b)``.

    The shooting evaluator is the default: grid values of H carry an error
    that oscillates with the position of ``b`` inside a cell, which second
    differences amplify.
    """
    d = rel_step * min(b, l - b)

    def H(dl, db):
        return advantage(l + dl, b + db, p, method=method)

    h00 = H(0, 0)
    hll = (H(d, 0) - 2 * h00 + H(-d, 0)) / d**2
    hbb = (H(0, d) - 2 * h00 + H(0, -d)) / d**2
    hlb = (H(d, d) - H(d, -d) - H(-d, d) + H(-d, -d)) / (4 * d**2)
    return np.array([[hll, hlb], [hlb, hbb]])


def hessian_nsd_fraction(points, p: Params, rel_step: float = 1e-2, method: str = "shoot") -> float:
    """Fraction of ``(l, b)`` points where the Hessian of H is negative semidefinite."""
    ok = 0
    for l, b in points:
        hess = advantage_hessian(l, b, p, rel_step, method)
        eig = np.linalg.eigvalsh(hess)
        scale = max(np.max(np.abs(hess)), 1e-300)
        ok += bool(eig.max() <= 1e-6 * scale)
    return ok / len(points)


def block_decompose(m: Resource, p: Params, sol=None):
    """Split at the critical points of the equilibrium and read off the blocks.

    Returns a :class:`BlockConfig` in rescaled units or :class:`NotDecomposable`
    naming the first span whose resource is not one-sided characteristic.
    """
    if sol is None:
        sol = polish(m, p)
    pts = [m.domain.a, *sol.critical, m.domain.b]
    rs = math.sqrt(p.mu)
    tol = 1e-10 * m.domain.length
    blocks = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        pieces = [(max(l, lo), min(r, hi), v) for l, r, v in m.cells() if min(r, hi) - max(l, lo) > tol]
        vals = tuple(v for _, _, v in pieces)
        res = math.fsum(b - a for a, b, v in pieces if v == 1.0)
        if vals in ((1.0, 0.0), (1.0,), (0.0,)):
            orient = LEFT
        elif vals == (0.0, 1.0):
            orient = RIGHT
        else:
            return NotDecomposable((lo, hi), vals)
        blocks.append(Block((hi - lo) / rs, res / rs, orient))
    return BlockConfig(tuple(blocks), m.domain.length, p.mu)


# ---------------------------------------------------------------------------
# small-resource optimizer


@dataclass
class OptimizeResult:
    best: list[BlockConfig]
    configs: list[BlockConfig]
    populations: list[float]
    gaps: list[float]
    single_population: float
    fitted_C3: float
    gap_correlation: float
    gap_correlation_comparable: float
    single_block_wins: bool
    regime_ok: bool
    m0: float
    mu: float
    domain_length: float
    h_evaluations: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "best": [c.to_dict() for c in self.best],
            "gaps": [{"config": c.to_dict(), "F": f, "gap": g}
                     for c, f, g in zip(self.configs, self.populations, self.gaps)],
            "fitted_C3": self.fitted_C3,
            "gap_correlation": self.gap_correlation,
            "gap_correlation_comparable": self.gap_correlation_comparable,
            "single_block_wins": self.single_block_wins,
            "regime_ok": self.regime_ok,
            "m0": self.m0, "mu": self.mu, "domain_length": self.domain_length,
        }


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) < 3 or np.std(x) == 0 or np.std(y) == 0:
        return math.nan
    return float(np.corrcoef(x, y)[0, 1])


def _compositions(total: int, parts: int, minimum: int):
    """Ordered tuples of ``parts`` integers >= minimum summing to ``total``."""
    if parts == 1:
        if total >= minimum:
            yield (total,)
        return
    for first in range(minimum, total - minimum * (parts - 1) + 1):
        for rest in _compositions(total - first, parts - 1, minimum):
            yield (first,) + rest


def optimize_small_resource(domain_length: float, m0: float, mu: float, r_max: int = 2, grid: int = 20,
                            p: Params | None = None, m0_max: float = 0.1) -> OptimizeResult:
    """Exhaustive search over block configurations on a simplex grid.

    Block lengths are ``L * k / grid`` (``k >= 1``) and resources ``B * j / grid``
    (``j >= 0``) with ``L = |Omega| / sqrt(mu)`` and ``B = m0 L``; every
    orientation pattern is listed.  The population of a configuration is
    ``m0 |Omega| + sqrt(mu) * sum H(l_i, b_i)``.
    """
    p = p or Params()
    if r_max > 3 or r_max < 1:
        raise ValueError("r_max must be 1, 2 or 3")
    regime_ok = m0 <= m0_max
    if not regime_ok:
        warnings.warn(f"m0={m0} exceeds {m0_max}; optimality is not asserted", RegimeViolation, stacklevel=2)
    rs = math.sqrt(mu)
    L = domain_length / rs
    B = m0 * L
    cache: dict[tuple[int, int], float] = {}

    def H(k: int, j: int) -> float:
        key = (k, j)
        if key not in cache:
            l, b = L * k / grid, B * j / grid
            cache[key] = 0.0 if j == 0 or b >= l else advantage(l, b, p)
        return cache[key]

    configs, pops = [], []
    for r in range(1, r_max + 1):
        for ks in _compositions(grid, r, 1):
            for js in _compositions(grid, r, 0):
                if any(B * j / grid > L * k / grid * (1 + 1e-12) for k, j in zip(ks, js)):
                    continue
                total_h = math.fsum(H(k, j) for k, j in zip(ks, js))
                pop = m0 * domain_length + rs * total_h
                for orient in itertools.product((LEFT, RIGHT), repeat=r):
                    blocks = tuple(Block(L * k / grid, min(B * j / grid, L * k / grid), o)
                                   for k, j, o in zip(ks, js, orient))
                    configs.append(BlockConfig(blocks, domain_length, mu))
                    pops.append(pop)
    single = m0 * domain_length + rs * H(grid, grid)
    fmax = max(pops)
    best = [c for c, f in zip(configs, pops) if f >= fmax - 1e-12]
    gaps = [single - f for f in pops]
    xs, ys, comparable = [], [], []
    for c, g in zip(configs, gaps):
        if len(c.blocks) > 1:
            xs.append(m0**2 * (domain_length - c.l_max * rs))
            ys.append(g)
            # the lower bound on the gap presumes b_i / l_i comparable to m0
            comparable.append(all(0.5 * m0 <= bl.b / bl.l <= 2.0 * m0 for bl in c.blocks))
    fitted, corr, corr_cmp = math.nan, math.nan, math.nan
    if xs:
        xs_a, ys_a, cmp_a = np.array(xs), np.array(ys), np.array(comparable)
        pos = xs_a > 0
        if pos.any():
            fitted = float(np.min(ys_a[pos] / xs_a[pos]))
        corr = _pearson(xs_a, ys_a)
        corr_cmp = _pearson(xs_a[cmp_a], ys_a[cmp_a])
    wins = all(len(c.blocks) == 1 for c in best)
    return OptimizeResult(best, configs, pops, gaps, single, fitted, corr, corr_cmp, wins, regime_ok,
                          m0, mu, domain_length, len(cache))
