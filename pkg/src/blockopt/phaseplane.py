"""Phase-plane machinery and the resource-improvement surgery.

All quantities live in rescaled units (unit diffusion).  On a region where
``m`` is constant the equilibrium conserves

    E = theta'^2 - (2/3) theta^3 + m theta^2,

so each region is a level curve of a cubic in ``theta``.  Lengths and
population along a curve are integrals in ``theta``: ``dx = dtheta / theta'``.

A surgery instance is a monotone span of the equilibrium on which, in the
direction of increasing ``theta``, four consecutive resource cells read
off/on/off/on.  The original path A -> B -> C in the phase plane (A, B, C the
states at the three inner cut points) is replaced by A -> D -> C, where D is
where the off-curve through A meets the on-curve through C.  The family of
off-curves with energy shifted by ``t`` interpolates between the two paths
and carries the length, population and resource functionals ``zeta``, ``xi``
and ``eta_fn``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp

from .equilibrium import PolishedSolution, polish
from .model import Params, PiecewiseConstantResource, Resource

OFF, ON = "off", "on"
_QUAD = dict(epsabs=1e-15, epsrel=1e-13, limit=400)


class TurningPointInsideRange(ValueError):
    pass


class NonAdmissibleRange(ValueError):
    pass


class IdenticalCurves(ValueError):
    pass


class AlreadyDecomposable(ValueError):
    pass


class SurgeryDegenerate(ValueError):
    pass


class IterationLimit(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class PhaseCurve:
    resource_tag: str
    energy: float
    branch: int = 1

    def __post_init__(self):
        if self.resource_tag not in (OFF, ON):
            raise ValueError(f"resource_tag must be '{OFF}' or '{ON}'")
        if self.branch not in (1, -1):
            raise ValueError("branch must be +1 or -1")

    @property
    def m(self) -> float:
        return 1.0 if self.resource_tag == ON else 0.0

    def slope_squared(self, theta):
        return (2.0 / 3.0) * theta**3 - self.m * theta**2 + self.energy

    def slope(self, theta):
        return self.branch * np.sqrt(np.maximum(self.slope_squared(theta), 0.0))

    def taylor(self, theta0: float) -> tuple[float, float, float, float]:
        """Coefficients of ``slope_squared(theta0 + u)`` as a cubic in ``u``."""
        return (self.slope_squared(theta0), 2.0 * theta0**2 - 2.0 * self.m * theta0,
                2.0 * theta0 - self.m, 2.0 / 3.0)

    def roots(self) -> np.ndarray:
        r = np.roots([2.0 / 3.0, -self.m, 0.0, self.energy])
        return np.sort(r[np.abs(r.imag) < 1e-12].real)

    @classmethod
    def through_state(cls, tag: str, theta: float, dtheta: float) -> "PhaseCurve":
        m = 1.0 if tag == ON else 0.0
        e = dtheta**2 - (2.0 / 3.0) * theta**3 + m * theta**2
        return cls(tag, e, 1 if dtheta >= 0 else -1)


def _scale(curve: PhaseCurve, theta: float) -> float:
    return max(abs(curve.energy), (2.0 / 3.0) * abs(theta) ** 3, curve.m * theta**2, 1e-300)


def _is_turning(curve: PhaseCurve, theta: float) -> bool:
    return abs(curve.slope_squared(theta)) <= 1e-12 * _scale(curve, theta)


def _branch_integral(curve: PhaseCurve, theta_from: float, theta_to: float, weight) -> float:
    if theta_from == theta_to:
        return 0.0
    lo, hi = sorted((theta_from, theta_to))
    for end in (lo, hi):
        if curve.slope_squared(end) < -1e-12 * _scale(curve, end):
            raise NonAdmissibleRange(f"theta={end} outside the admissible range of {curve}")
    width = hi - lo
    for r in curve.roots():
        if lo + 1e-12 * width < r < hi - 1e-12 * width:
            raise TurningPointInsideRange(f"theta' vanishes at theta={r} inside ({lo}, {hi})")
    orient = curve.branch * (1.0 if theta_to > theta_from else -1.0)

    turn_lo, turn_hi = _is_turning(curve, lo), _is_turning(curve, hi)
    split = 0.1 * width
    a, b = lo, hi
    total = 0.0
    if turn_lo:
        _, c1, c2, c3 = curve.taylor(lo)
        if c1 <= 0.0:
            return orient * math.inf
        f = lambda s: 2.0 * weight(lo + s * s) / math.sqrt(c1 + c2 * s * s + c3 * s**4)
        total += quad(f, 0.0, math.sqrt(split), **_QUAD)[0]
        a = lo + split
    if turn_hi:
        _, c1, c2, c3 = curve.taylor(hi)
        if c1 >= 0.0:
            return orient * math.inf
        f = lambda s: 2.0 * weight(hi - s * s) / math.sqrt(-c1 + c2 * s * s - c3 * s**4)
        total += quad(f, 0.0, math.sqrt(split), **_QUAD)[0]
        b = hi - split
    g = lambda th: weight(th) / math.sqrt(max(curve.slope_squared(th), 0.0))
    total += quad(g, a, b, **_QUAD)[0]
    return orient * total


def x_advance(curve: PhaseCurve, theta_from: float, theta_to: float) -> float:
    """Distance in x travelled along ``curve`` between two theta values.

    Simple turning points at either end are handled by ``theta = theta_t + s^2``;
    a degenerate turning point (``theta'`` vanishing to higher order) gives an
    infinite distance.
    """
    return _branch_integral(curve, theta_from, theta_to, lambda th: 1.0)


def population_advance(curve: PhaseCurve, theta_from: float, theta_to: float) -> float:
    """Integral of theta dx along ``curve`` between two theta values."""
    return _branch_integral(curve, theta_from, theta_to, lambda th: th)


def intersect(c1: PhaseCurve, c2: PhaseCurve):
    """Crossing of two curves in the upper half plane, or None."""
    if c1.resource_tag == c2.resource_tag:
        if c1.energy == c2.energy:
            raise IdenticalCurves("curves coincide")
        return None
    off, on = (c1, c2) if c1.resource_tag == OFF else (c2, c1)
    sq = on.energy - off.energy
    if sq <= 0.0:
        return None
    theta = math.sqrt(sq)
    p = off.slope_squared(theta)
    if p < 0.0:
        return None
    return theta, math.sqrt(p)


# ---------------------------------------------------------------------------
# surgery instances


@dataclass(frozen=True)
class SurgeryInstance:
    """A monotone span with an off/on/off/on resource pattern.

    Positions in ``cuts``, ``start`` and ``end`` are in the local coordinate
    ``s = direction * x / sqrt(mu)``, in which theta increases.
    """

    solution: PolishedSolution = field(repr=False)
    span: tuple[float, float]
    direction: int
    start: float
    end: float
    cuts: tuple[float, float, float, float, float]
    theta_start: float
    theta_end: float
    theta_a: float
    theta_b: float
    theta_c: float
    energies: tuple[float, float, float, float]

    @property
    def mu(self) -> float:
        return self.solution.mu

    @property
    def T(self) -> float:
        return self.energies[0] - self.energies[2]

    @property
    def curves(self) -> tuple[PhaseCurve, ...]:
        e1, e2, e3, e4 = self.energies
        return (PhaseCurve(OFF, e1), PhaseCurve(ON, e2), PhaseCurve(OFF, e3), PhaseCurve(ON, e4))

    def curve5(self, t: float) -> PhaseCurve:
        return PhaseCurve(OFF, self.energies[2] + t)

    def theta_e(self, t: float) -> float:
        return math.sqrt(self.theta_b**2 - t)

    def theta_f(self, t: float) -> float:
        return math.sqrt(self.theta_c**2 - t)

    @property
    def theta_d(self) -> float:
        return self.theta_f(self.T)

    def to_local(self, x: float) -> float:
        return self.direction * x / math.sqrt(self.mu)

    def to_physical(self, s: float) -> float:
        return self.direction * s * math.sqrt(self.mu)


def _check_t(inst: SurgeryInstance, t: float):
    if not -1e-14 <= t <= inst.T * (1 + 1e-12):
        raise ValueError(f"t={t} outside [0, T={inst.T}]")
    return min(max(t, 0.0), inst.T)


def _paths(inst: SurgeryInstance, t: float, advance):
    _, c2, c3, c4 = inst.curves
    te, tf = inst.theta_e(t), inst.theta_f(t)
    new = advance(inst.curve5(t), te, tf) + advance(c4, tf, inst.theta_c)
    old = advance(c2, te, inst.theta_b) + advance(c3, inst.theta_b, inst.theta_c)
    return new, old


def zeta(inst: SurgeryInstance, t: float) -> float:
    """Length change of the phase path E -> C when switched onto the t-curve."""
    t = _check_t(inst, t)
    if t == 0.0:
        return 0.0
    new, old = _paths(inst, t, x_advance)
    return new - old


def xi(inst: SurgeryInstance, t: float) -> float:
    """Population change (integral of theta dx) for the same path switch."""
    t = _check_t(inst, t)
    if t == 0.0:
        return 0.0
    new, old = _paths(inst, t, population_advance)
    return new - old


def eta_fn(inst: SurgeryInstance, t: float) -> float:
    """Change in resource length: (F -> C on the on-curve) minus (E -> B)."""
    t = _check_t(inst, t)
    if t == 0.0:
        return 0.0
    _, c2, _, c4 = inst.curves
    return x_advance(c4, inst.theta_f(t), inst.theta_c) - x_advance(c2, inst.theta_e(t), inst.theta_b)


def _t_integral(inst: SurgeryInstance, t: float, f) -> float:
    c5 = inst.curve5(t)
    g = lambda th: f(th, math.sqrt(c5.slope_squared(th)))
    return quad(g, inst.theta_e(t), inst.theta_f(t), **_QUAD)[0]


def zeta_prime(inst: SurgeryInstance, t: float) -> float:
    return -_t_integral(inst, t, lambda th, d: 1.0 / (2.0 * d**3))


def xi_prime(inst: SurgeryInstance, t: float) -> float:
    return -_t_integral(inst, t, lambda th, d: th / (2.0 * d**3))


def eta_prime(inst: SurgeryInstance, t: float) -> float:
    return xi_prime(inst, t) - _t_integral(inst, t, lambda th, d: 1.0 / (2.0 * th**2 * d))


def eta_prime_boundary(inst: SurgeryInstance, t: float) -> float:
    """``eta_fn'(t)`` as the boundary term ``[1 / (2 theta theta')]`` from E to F.

    Differentiating the two on-curve lengths in ``t`` only moves their free
    endpoints, which sit on the t-curve; this is an independent check of
    :func:`eta_prime`.
    """
    c5 = inst.curve5(t)
    te, tf = inst.theta_e(t), inst.theta_f(t)
    return 1.0 / (2 * tf * math.sqrt(c5.slope_squared(tf))) - 1.0 / (2 * te * math.sqrt(c5.slope_squared(te)))


def direct_functionals(inst: SurgeryInstance) -> tuple[float, float]:
    """(zeta(T), xi(T)) by integrating the ODE along A -> D -> C directly.

    The old path A -> B -> C is read off the polished solution's cell
    populations; the new path is integrated from A with the off dynamics until
    theta reaches theta_D, then with the on dynamics until theta_C.  None of
    the quadrature in theta used by :func:`zeta` / :func:`xi` is involved.
    """
    sol = inst.solution
    th_d = inst.theta_d
    th_a = inst.theta_a
    d_a = math.sqrt(PhaseCurve(OFF, inst.energies[0]).slope_squared(th_a))

    def leg(m, y0, target):
        def rhs(x, y):
            return [y[1], y[0] * (y[0] - m), y[0]]

        def hit(x, y):
            return y[0] - target
        hit.terminal = True
        out = solve_ivp(rhs, (0.0, 100.0), y0, method="DOP853", rtol=1e-13, atol=1e-15, events=hit)
        return out.t_events[0][0], out.y_events[0][0]

    l1, y1 = leg(0.0, [th_a, d_a, 0.0], th_d)
    l2, y2 = leg(1.0, [y1[0], y1[1], 0.0], inst.theta_c)
    new_len, new_pop = l1 + l2, y1[2] + y2[2]
    c1, c3 = inst.cuts[1], inst.cuts[3]
    old_len = c3 - c1
    x1, x3 = sorted((inst.to_physical(c1), inst.to_physical(c3)))
    old_pop = 0.0
    for c in sol.cells:
        if c.left >= x1 - 1e-12 and c.right <= x3 + 1e-12:
            old_pop += c.population
    old_pop /= math.sqrt(sol.mu)
    return new_len - old_len, new_pop - old_pop


def spans_of(sol: PolishedSolution, critical=None) -> list[tuple[float, float]]:
    pts = [sol.domain.a, *(sol.critical if critical is None else critical), sol.domain.b]
    return list(zip(pts[:-1], pts[1:]))


def _span_pieces(m: Resource, lo: float, hi: float, tol: float):
    out = []
    for l, r, v in m.cells():
        a, b = max(l, lo), min(r, hi)
        if b - a > tol:
            out.append((a, b, v))
    return out


def instance_on_span(sol: PolishedSolution, m: Resource, lo: float, hi: float):
    """First off/on/off/on pattern (in increasing-theta order) inside a span."""
    tol = 1e-10 * sol.domain.length
    pieces = _span_pieces(m, lo, hi, tol)
    th_lo, th_hi = sol.state(lo)[0], sol.state(hi)[0]
    direction = 1 if th_hi >= th_lo else -1
    if direction < 0:
        pieces = pieces[::-1]
    vals = [v for _, _, v in pieces]
    for j in range(len(vals) - 3):
        if vals[j:j + 4] == [0.0, 1.0, 0.0, 1.0]:
            break
    else:
        return None
    mu = sol.mu
    rs = math.sqrt(mu)
    loc = lambda x: direction * x / rs
    if direction > 0:
        bounds = [pieces[j][0]] + [pieces[j + k][1] for k in range(4)]
        start, end = loc(lo), loc(hi)
    else:
        bounds = [pieces[j][1]] + [pieces[j + k][0] for k in range(4)]
        start, end = loc(hi), loc(lo)
    cuts = tuple(loc(x) for x in bounds)
    energies = []
    for k in range(4):
        a, b, _ = pieces[j + k]
        energies.append(sol.energy(sol.cell_index(0.5 * (a + b))))
    th = [sol.state(x)[0] for x in bounds]
    return SurgeryInstance(sol, (lo, hi), direction, start, end, cuts,
                           min(th_lo, th_hi), max(th_lo, th_hi), th[1], th[2], th[3], tuple(energies))


def find_surgery_instances(m: Resource, p: Params, sol: PolishedSolution | None = None) -> list[SurgeryInstance]:
    """All surgery instances of ``m``, at most one per monotone span, left to right."""
    if sol is None:
        sol = polish(m, p)
    found = []
    for lo, hi in spans_of(sol):
        inst = instance_on_span(sol, m, lo, hi)
        if inst is not None:
            found.append(inst)
    return found


@dataclass(frozen=True)
class SurgeryReport:
    """Outcome of one surgery, in physical units.

    ``x_hat`` lists the three new cut points in the direction of increasing
    theta: the end of the low plateau, the end of the new off-region and the
    start of the high plateau.
    """

    zeta_T: float
    xi_T: float
    eta_T: float
    x_hat: tuple[float, float, float]
    mass_before: float
    mass_after: float
    pop_before: float
    pop_after: float
    span: tuple[float, float]
    plateaus: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {"zeta_T": self.zeta_T, "xi_T": self.xi_T, "eta_T": self.eta_T,
                "x_hat": list(self.x_hat), "mass_before": self.mass_before,
                "mass_after": self.mass_after, "pop_before": self.pop_before,
                "pop_after": self.pop_after}


def apply_surgery(m: Resource, inst: SurgeryInstance, tol_integral: float = 1e-10):
    """Build the improved resource for one instance.

    Returns ``(m_hat, values)`` with ``values`` holding the functionals and the
    new cut positions (physical coordinates) but no re-solve.
    """
    T = inst.T
    if T <= tol_integral:
        raise SurgeryDegenerate(f"T={T} below tolerance")
    gap = inst.theta_end - inst.theta_start
    if gap <= 1e-14:
        raise SurgeryDegenerate("theta is constant on the span")
    z, x_, e = zeta(inst, T), xi(inst, T), eta_fn(inst, T)
    c1_, c4_ = inst.curves[0], inst.curves[3]
    th_a, th_d, th_c = inst.theta_a, inst.theta_d, inst.theta_c
    len_ad = x_advance(c1_, th_a, th_d)
    len_dc = x_advance(c4_, th_d, th_c)
    p1 = (x_ - inst.theta_end * z) / gap
    p2 = -z - p1
    s0, s1 = inst.start, inst.end
    _, c1, c2, c3, _ = inst.cuts
    rs = math.sqrt(inst.mu)
    tol = 1e-12 * (s1 - s0)

    # local (increasing-theta) pieces of the original resource on the span
    lo, hi = inst.span
    pieces = _span_pieces(m, lo, hi, 0.0)
    local = sorted((min(inst.to_local(a), inst.to_local(b)), max(inst.to_local(a), inst.to_local(b)), v)
                   for a, b, v in pieces)
    new = [(s0, s0 + p1, inst.theta_start)]
    for a, b, v in local:
        if b <= c1 + tol:
            new.append((a + p1, b + p1, v))
    x2 = c1 + p1 + len_ad
    new.append((c1 + p1, x2, 0.0))
    new.append((x2, x2 + len_dc, 1.0))
    shift = p1 + z
    for a, b, v in local:
        if a >= c3 - tol:
            new.append((a + shift, b + shift, v))
    new.append((s1 - p2, s1, inst.theta_end))
    # close rounding gaps so the pieces tile [s0, s1]
    tiled = []
    cursor = s0
    for a, b, v in new:
        b = min(max(b, cursor), s1)
        if b - cursor > tol:
            tiled.append((cursor, b, v))
            cursor = b
    if tiled:
        a, _, v = tiled[-1]
        tiled[-1] = (a, s1, v)
    phys = [(inst.to_physical(a), inst.to_physical(b), v) for a, b, v in tiled]
    phys = [(min(a, b), max(a, b), v) for a, b, v in phys]
    phys.sort()
    phys[0] = (lo, phys[0][1], phys[0][2])
    phys[-1] = (phys[-1][0], hi, phys[-1][2])
    outside = [(l, r, v) for l, r, v in m.cells() if r <= lo or l >= hi]
    outside += [(l, min(r, lo), v) for l, r, v in m.cells() if l < lo < r]
    outside += [(max(l, hi), r, v) for l, r, v in m.cells() if l < hi < r]
    cells = sorted(outside + phys)
    m_hat = PiecewiseConstantResource.from_cells(m.domain, cells, min_width=1e-14 * m.domain.length)
    x_hat = tuple(inst.to_physical(s) for s in (s0 + p1, x2, s1 - p2))
    plateaus = tuple(sorted(tuple(sorted((inst.to_physical(a), inst.to_physical(b))))
                            for a, b in ((s0, s0 + p1), (s1 - p2, s1)) if b - a > tol))
    return m_hat, dict(zeta_T=z * rs, xi_T=x_ * rs, eta_T=e * rs, x_hat=x_hat,
                       plateaus=plateaus, p1=p1, p2=p2)


def improve_resource(m: Resource, p: Params, sol: PolishedSolution | None = None):
    """One surgery on the leftmost instance; returns ``(m_hat, report)``.

    Lengths in the report are physical; ``xi_T`` is the population change of
    the replaced path in physical units.
    """
    if sol is None:
        sol = polish(m, p)
    found = find_surgery_instances(m, p, sol)
    if not found:
        raise AlreadyDecomposable("no monotone span carries an off/on/off/on pattern")
    inst = found[0]
    m_hat, vals = apply_surgery(m, inst, p.tol_integral)
    mass_after = m_hat.mass
    if not mass_after < m.mass - 10 * p.tol_integral:
        raise SurgeryDegenerate("surgery does not reduce the resource")
    pop_after = polish(m_hat, p).population
    report = SurgeryReport(vals["zeta_T"], vals["xi_T"], vals["eta_T"], vals["x_hat"], m.mass, mass_after,
                           sol.population, pop_after, inst.span, vals["plateaus"])
    return m_hat, report


@dataclass(frozen=True)
class RefinedResource:
    resource: Resource
    partition: tuple[float, ...]
    kinds: tuple[str, ...]
    surgeries: int
    pop_before: float
    pop_after: float
    mass_before: float
    mass_after: float
    reports: tuple[SurgeryReport, ...] = ()


def _is_characteristic(m: Resource, sol: PolishedSolution, lo: float, hi: float) -> bool:
    pieces = _span_pieces(m, lo, hi, 1e-10 * sol.domain.length)
    th_lo, th_hi = sol.state(lo)[0], sol.state(hi)[0]
    vals = [v for _, _, v in pieces]
    if th_hi < th_lo:
        vals = vals[::-1]
    return vals == [0.0, 1.0]


def block_refine(m: Resource, p: Params, max_surgeries: int = 50) -> RefinedResource:
    """Apply surgeries until every span is one-sided characteristic or flat."""
    sol = polish(m, p)
    partition = [m.domain.a, *sol.critical, m.domain.b]
    kinds = ["monotone"] * (len(partition) - 1)
    current: Resource = m
    reports = []
    pop0, mass0 = sol.population, m.mass
    for _ in range(max_surgeries + 1):
        hit = None
        for k, (lo, hi) in enumerate(zip(partition[:-1], partition[1:])):
            if kinds[k] != "monotone":
                continue
            inst = instance_on_span(sol, current, lo, hi)
            if inst is not None:
                hit = (k, inst)
                break
        if hit is None:
            break
        if len(reports) == max_surgeries:
            raise IterationLimit("surgery limit reached",
                                 diagnostics=dict(partition=partition, surgeries=len(reports)))
        k, inst = hit
        m_hat, vals = apply_surgery(current, inst, p.tol_integral)
        new_sol = polish(m_hat, p)
        reports.append(SurgeryReport(vals["zeta_T"], vals["xi_T"], vals["eta_T"], vals["x_hat"],
                                     current.mass, m_hat.mass, sol.population, new_sol.population,
                                     inst.span, vals["plateaus"]))
        lo, hi = partition[k], partition[k + 1]
        pts, kd = [lo], []
        for a, b in vals["plateaus"]:
            if a > pts[-1] + 1e-14:
                pts.append(a)
                kd.append("monotone")
            pts.append(b)
            kd.append("constant")
        if hi > pts[-1] + 1e-14:
            pts.append(hi)
            kd.append("monotone")
        else:
            pts[-1] = hi
        partition = partition[:k] + pts + partition[k + 2:]
        kinds = kinds[:k] + kd + kinds[k + 1:]
        current, sol = m_hat, new_sol
    final_kinds = []
    for k, (lo, hi) in enumerate(zip(partition[:-1], partition[1:])):
        if kinds[k] == "constant":
            final_kinds.append("constant")
        elif _is_characteristic(current, sol, lo, hi):
            final_kinds.append("characteristic")
        else:
            final_kinds.append("monotone")
    return RefinedResource(current, tuple(partition), tuple(final_kinds), len(reports), pop0,
                           sol.population, mass0, current.mass, tuple(reports))
