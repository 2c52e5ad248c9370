"""Property suites behind ``blockopt verify`` and the acceptance tests.

Each suite takes a seed and a tolerance scale and returns a list of
:class:`Check` records.  Suites draw random numbers from their own generator,
seeded by ``(seed, suite index)``, so running a subset reproduces the same
numbers as the full run.  Reports contain no timings, which keeps them
byte-identical across runs.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import blocks, phaseplane, series
from .equilibrium import march, polish, solve, total_population
from .model import BangBangResource, Domain, Params


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("value", "threshold"):
            v = d[key]
            d[key] = None if v is None or not math.isfinite(v) else float(v)
        return d


def _le(name, value, threshold, detail=""):
    return Check(name, bool(value <= threshold), float(value), float(threshold), detail)


def _gt(name, value, threshold, detail=""):
    return Check(name, bool(value > threshold), float(value), float(threshold), detail)


def random_resource(rng: np.random.Generator, max_intervals: int = 4, domain: Domain = Domain()) -> BangBangResource:
    """Up to ``max_intervals`` disjoint intervals from sorted uniform endpoints."""
    k = int(rng.integers(1, max_intervals + 1))
    ends = np.sort(rng.uniform(domain.a, domain.b, 2 * k))
    return BangBangResource(domain, tuple((float(ends[2 * i]), float(ends[2 * i + 1])) for i in range(k)))


def random_aligned_resource(rng: np.random.Generator, max_intervals: int = 4, cells: int = 64) -> BangBangResource:
    """Random resource on (0, 1) with endpoints on multiples of ``1 / cells``.

    Used for grid-refinement studies: with endpoints on nodes of every grid
    in the sequence the leading error constant does not depend on where an
    endpoint falls inside a cell.
    """
    k = int(rng.integers(1, max_intervals + 1))
    ends = np.sort(rng.choice(np.arange(cells + 1), 2 * k, replace=False)) / cells
    return BangBangResource(Domain(0.0, 1.0), tuple((float(ends[2 * i]), float(ends[2 * i + 1])) for i in range(k)))


def random_mu(rng: np.random.Generator, lo: float = 0.1, hi: float = 10.0) -> float:
    return float(np.exp(rng.uniform(math.log(lo), math.log(hi))))


def _random_solves(rng, count, grid_n=512):
    for _ in range(count):
        m = random_resource(rng)
        p = Params(mu=random_mu(rng), grid_n=grid_n)
        yield m, p, solve(m, p)


def energy_variation(sol, m) -> float:
    """Largest spread of the first integral over nodes interior to a resource cell.

    Only nodes whose three-point stencil stays inside the cell are used.
    """
    x, h = sol.x, sol.h
    th, d = sol.theta.values, sol.dtheta.values
    worst = 0.0
    for l, r, v in m.cells():
        idx = np.where((x - h >= l) & (x + h <= r))[0]
        if len(idx) < 2:
            continue
        e = sol.mu * d[idx] ** 2 - (2.0 / 3.0) * th[idx] ** 3 + v * th[idx] ** 2
        worst = max(worst, float(e.max() - e.min()))
    return worst


# ---------------------------------------------------------------------------
# suites


def suite_bounds(rng, scale=1.0, count=1000):
    """Population bounds ``m0 |Omega| <= F <= 3 m0 |Omega|`` on random resources."""
    tol = 1e-8 * scale
    lower, upper = math.inf, math.inf
    for m, p, sol in _random_solves(rng, count):
        F = total_population(sol)
        L, m0 = m.domain.length, m.m0
        lower = min(lower, F - m0 * L)
        upper = min(upper, 3 * m0 * L - F)
    return [Check("population_lower_bound", lower >= -tol, lower, -tol, f"min F - m0|Omega| over {count}"),
            Check("population_upper_bound", upper >= -tol, upper, -tol, f"min 3 m0|Omega| - F over {count}")]


def suite_crossval(rng, scale=1.0, count=50, refine_count=10):
    """Newton vs time marching, and second-order grid convergence."""
    worst = 0.0
    for m, p, sol in _random_solves(rng, count):
        ref = march(m, p, np.full(p.grid_n + 1, m.m0))
        worst = max(worst, float(np.max(np.abs(sol.theta.values - ref.theta.values))))
    ratios = []
    for _ in range(refine_count):
        m = random_aligned_resource(rng)
        mu = random_mu(rng)
        a, b, c = (solve(m, Params(mu=mu, grid_n=n)).theta.values for n in (256, 512, 1024))
        ratios.append(float(np.max(np.abs(a - b[::2])) / np.max(np.abs(b - c[::2]))))
    lo, hi = 4.0 - 0.5 * scale, 4.0 + 0.5 * scale
    return [_le("solve_vs_march", worst, 1e-6 * scale, f"sup-norm over {count} resources"),
            Check("grid_convergence_min_ratio", min(ratios) >= lo, min(ratios), lo, "256/512/1024"),
            Check("grid_convergence_max_ratio", max(ratios) <= hi, max(ratios), hi, "256/512/1024")]


def suite_strict(rng, scale=1.0, count=200):
    """``0 < theta < 1`` with margin at every node of every converged solve."""
    margin = 1e-12 / scale
    lo, hi = math.inf, -math.inf
    for _, _, sol in _random_solves(rng, count):
        lo = min(lo, float(sol.theta.values.min()))
        hi = max(hi, float(sol.theta.values.max()))
    return [_gt("theta_positive", lo, margin), Check("theta_below_one", hi < 1 - margin, hi, 1 - margin)]


def suite_energy(rng, scale=1.0, count=200):
    """First integral constant within each resource cell."""
    worst = 0.0
    for m, p, sol in _random_solves(rng, count):
        h = sol.h
        worst = max(worst, energy_variation(sol, m) / (max(1e-8, 20 * h * h) * scale))
    return [_le("energy_variation_relative", worst, 1.0, "spread / max(1e-8, 20 h^2)")]


SURGERY_CASES = (
    (((0.1, 0.2), (0.35, 0.45)), 0.05),
    (((0.1, 0.2), (0.35, 0.45)), 1.0),
    (((0.05, 0.12), (0.25, 0.3)), 0.2),
    (((0.0, 0.1), (0.3, 0.4), (0.6, 0.7)), 0.2),
    (((0.55, 0.65), (0.8, 0.9)), 0.05),
    (((0.55, 0.65), (0.8, 0.9)), 1.0),
)


def surgery_instances():
    out = []
    for ivs, mu in SURGERY_CASES:
        m = BangBangResource(Domain(0.0, 1.0), ivs)
        p = Params(mu=mu)
        sol = polish(m, p)
        found = phaseplane.find_surgery_instances(m, p, sol)
        if found:
            out.append((m, p, sol, found[0]))
    return out


def suite_surgery(rng, scale=1.0, samples=32):
    """Functionals at zero, monotonicity signs, derivative agreement, improvement."""
    insts = surgery_instances()
    zero = 0.0
    zmax, gap_max, rel = -math.inf, -math.inf, 0.0
    pop_err, mass_gain = 0.0, -math.inf
    for m, p, sol, inst in insts:
        T = inst.T
        zero = max(zero, abs(phaseplane.zeta(inst, 0.0)), abs(phaseplane.xi(inst, 0.0)),
                   abs(phaseplane.eta_fn(inst, 0.0)))
        for t in np.linspace(0.0, T, samples + 2)[1:-1]:
            zp = phaseplane.zeta_prime(inst, t)
            xp = phaseplane.xi_prime(inst, t)
            ep = phaseplane.eta_prime(inst, t)
            zmax = max(zmax, zp)
            gap_max = max(gap_max, ep - xp)
        for t in (0.25 * T, 0.5 * T, 0.75 * T):
            h = 1e-6 * T
            for f, fp in ((phaseplane.zeta, phaseplane.zeta_prime), (phaseplane.xi, phaseplane.xi_prime),
                          (phaseplane.eta_fn, phaseplane.eta_prime)):
                fd = (f(inst, t + h) - f(inst, t - h)) / (2 * h)
                exact = fp(inst, t)
                rel = max(rel, abs(fd - exact) / abs(exact))
        _, rep = phaseplane.improve_resource(m, p, sol)
        pop_err = max(pop_err, abs(rep.pop_after - rep.pop_before))
        mass_gain = max(mass_gain, rep.mass_after - rep.mass_before)
    return [Check("surgery_instance_count", len(insts) >= 5, len(insts), 5),
            Check("functionals_vanish_at_zero", zero == 0.0, zero, 0.0, "exact"),
            Check("zeta_prime_negative", zmax < 0, zmax, 0.0, f"{samples} samples per instance"),
            Check("eta_minus_xi_prime_negative", gap_max < 0, gap_max, 0.0, f"{samples} samples per instance"),
            _le("derivative_quadrature_vs_fd", rel, 1e-6 * scale, "relative"),
            _le("population_conserved", pop_err, 1e-6 * scale),
            Check("resource_reduced", mass_gain < -1e-8 / scale, mass_gain, -1e-8 / scale)]


def suite_advantage(rng, scale=1.0, grid=50):
    """Edges of H, the band ``0 <= H <= 2b`` and the small-b law."""
    p = Params()
    edge = max(abs(blocks.advantage(l, 0.0, p)) + abs(blocks.advantage(l, l, p)) for l in (0.5, 1.0, 3.0, 7.5))
    rows = blocks.advantage_surface((0.1, 10.0), (0.0, 1.0), grid, p)
    below = min(h for _, _, h in rows)
    above = max(h - 2 * l * r for l, r, h in rows)
    law = max(abs(blocks.advantage(l, 0.01 * l, p) / (l * (0.01 * l) ** 2) * 3 - 1) for l in (1.0, 2.0, 4.0))
    return [Check("advantage_edges_zero", edge == 0.0, edge, 0.0, "exact"),
            Check("advantage_nonnegative", below >= -1e-12 * scale, below, -1e-12 * scale, f"{grid}x{grid}"),
            _le("advantage_below_2b", above, 1e-12 * scale, f"{grid}x{grid}"),
            _le("small_b_law_relative", law, 0.05 * scale, "b = 0.01 l, l in {1, 2, 4}")]


def suite_superlinear(rng, scale=1.0, n=10):
    sweep = blocks.superlinearity_sweep(np.linspace(1.0, 4.0, n), np.linspace(0.01, 0.05, n), Params())
    region = ", ".join(f"{k}={v:.6g}" for k, v in sweep.region.items())
    return [_gt("superlinearity_margin", sweep.min_margin, 0.0,
                f"{len(sweep.samples)} samples; fitted c={sweep.fitted_c:.6g}; positive region {region}")]


def suite_optimal(rng, scale=1.0):
    res = blocks.optimize_small_resource(1.0, 0.05, 1.0, r_max=2, grid=20, p=Params())
    others = [g for c, g in zip(res.configs, res.gaps) if len(c.blocks) > 1 or c.blocks[0].b < c.blocks[0].l * 0.05]
    strict = min(others) if others else math.inf
    n_best = len(res.best)
    return [Check("single_block_argmax", res.single_block_wins and n_best == 2, n_best, 2, "mirror pair"),
            _gt("strict_gap", strict, 0.0, "smallest gap of any other configuration"),
            _gt("gap_correlation", res.gap_correlation, 0.0, "all multi-block configurations"),
            _gt("gap_correlation_comparable", res.gap_correlation_comparable, 0.0,
                "blocks with b/l in [m0/2, 2 m0]"),
            _gt("fitted_C3", res.fitted_C3, 0.0)]


def series_checks(scale=1.0):
    m0, mu = 0.05, 10.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", series.ConvergenceWarning)
        Fs = series.F_series(m0, mu, 8).value
    direct = polish(BangBangResource(Domain(0.0, 1.0), ((0.0, m0),)), Params(mu=mu)).population
    a, b = 0.02, 10.0
    d_m0, d_mu = series.F_partials_series(a, b)
    dev_m0 = abs(d_m0 - (1 + 2 * a / (3 * b))) / (1 + 2 * a / (3 * b))
    lead = -a**2 / (3 * b**2)
    dev_mu = abs(d_mu - lead) / abs(lead)
    state = series.eta_k_compute(m0, 8)
    worst_neumann = worst_mean = worst_cont = 0.0
    for z in state.zeta:
        worst_neumann = max(worst_neumann, abs(z.derivative().left[0]), abs(z.derivative().right[0]))
        worst_mean = max(worst_mean, abs(z.integral()))
        worst_cont = max(worst_cont, abs(z.left_value() - z.right_value()) / max(z.sup_norm(), 1e-300))
    return [_le("series_vs_direct", abs(Fs - direct), 1e-6 * scale, "m0=0.05, mu=10, K=8"),
            _le("dF_dm0_two_term_law", dev_m0, a * scale, "relative deviation at m0=0.02, mu=10"),
            _le("dF_dmu_leading_term", dev_mu, a * scale, "relative deviation at m0=0.02, mu=10"),
            _le("zeta_neumann", worst_neumann, 1e-12 * scale),
            _le("zeta_zero_mean", worst_mean, 1e-12 * scale),
            _le("zeta_continuity", worst_cont, 1e-12 * scale)]


def suite_series(rng, scale=1.0):
    return series_checks(scale)


SUITES = {
    "bounds": suite_bounds,
    "crossval": suite_crossval,
    "strict": suite_strict,
    "energy": suite_energy,
    "surgery": suite_surgery,
    "advantage": suite_advantage,
    "superlinear": suite_superlinear,
    "optimal": suite_optimal,
    "series": suite_series,
}


def run_suite(name: str, seed: int = 0, scale: float = 1.0) -> list[Check]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    index = list(SUITES).index(name)
    rng = np.random.default_rng([seed, index])
    return SUITES[name](rng, scale)


def run(suites=None, seed: int = 0, scale: float = 1.0) -> dict:
    """Run suites in registry order and assemble the report."""
    names = list(SUITES) if not suites else [s for s in SUITES if s in set(suites)]
    unknown = set(suites or ()) - set(SUITES)
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(sorted(unknown))}")
    report = {"seed": seed, "tolerance_scale": scale, "suites": []}
    for name in names:
        checks = run_suite(name, seed, scale)
        report["suites"].append({"suite": name, "passed": all(c.passed for c in checks),
                                 "checks": [c.to_dict() for c in checks]})
    report["passed"] = all(s["passed"] for s in report["suites"])
    report["failed"] = [f"{s['suite']}.{c['name']}" for s in report["suites"] for c in s["checks"]
                        if not c["passed"]]
    return report


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"
