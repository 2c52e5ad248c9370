"""Positive equilibrium of the logistic diffusion equation.

Discretization: second-order centered differences on a uniform grid with
ghost-node Neumann conditions, node coefficients from hat-weighted averages of
the (piecewise-constant) resource.  ``solve`` runs damped Newton on the
tridiagonal system; ``march`` integrates the parabolic problem with implicit
diffusion and explicit reaction and is used as an independent oracle.
``polish`` refines a grid solution by shooting on the exact ODE, cell by cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded
from scipy.optimize import brentq

from .model import (Domain, EmptyResource, GridFunction, Params,
                    Resource, node_coefficients)

EPS = np.finfo(float).eps


class ZeroMass(EmptyResource):
    """Only the trivial equilibrium exists when the resource has no mass."""


THETA_FLOOR = 1e-4
# Newton updates below this (relative to max theta) are rounding noise
STEP_FLOOR = 1e3 * EPS


class NoConvergence(RuntimeError):
    def __init__(self, message: str, best=None, residual: float = math.inf):
        super().__init__(message)
        self.best = best
        self.residual = residual


@dataclass(frozen=True)
class EquilibriumSolution:
    theta: GridFunction
    dtheta: GridFunction
    coeff: np.ndarray
    mu: float
    residual_norm: float
    iterations: int
    resource: Resource | None = None

    @property
    def x(self) -> np.ndarray:
        return self.theta.x

    @property
    def h(self) -> float:
        return self.theta.h


def _laplacian(theta: np.ndarray) -> np.ndarray:
    lap = np.empty_like(theta)
    lap[1:-1] = theta[2:] - 2.0 * theta[1:-1] + theta[:-2]
    lap[0] = 2.0 * (theta[1] - theta[0])
    lap[-1] = 2.0 * (theta[-2] - theta[-1])
    return lap


def residual(theta: np.ndarray, coeff: np.ndarray, mu: float, h: float) -> np.ndarray:
    """Discrete ``mu theta'' + theta (m - theta)`` with Neumann ghosts."""
    return mu * _laplacian(theta) / h**2 + theta * (coeff - theta)


def roundoff_floor(theta: np.ndarray, mu: float, h: float) -> float:
    """Residual level below which the second difference is pure rounding."""
    return 8.0 * EPS * (4.0 * mu / h**2 + 1.0) * float(np.max(np.abs(theta)))


def centered_derivative(values: np.ndarray, h: float) -> np.ndarray:
    d = np.zeros_like(values)
    d[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    return d


def _jacobian_banded(theta: np.ndarray, coeff: np.ndarray, mu: float, h: float) -> np.ndarray:
    n1 = len(theta)
    c = mu / h**2
    ab = np.zeros((3, n1))
    ab[1] = -2.0 * c + coeff - 2.0 * theta
    ab[0, 1:] = c
    ab[0, 1] = 2.0 * c
    ab[2, :-1] = c
    ab[2, -2] = 2.0 * c
    return ab


def _grid(m: Resource, p: Params) -> tuple[np.ndarray, float, np.ndarray]:
    x = np.linspace(m.domain.a, m.domain.b, p.grid_n + 1)
    h = m.domain.length / p.grid_n
    return x, h, node_coefficients(m.cells(), x)


def _package(m, p, theta, coeff, h, iterations, res) -> EquilibriumSolution:
    dom = m.domain
    return EquilibriumSolution(GridFunction(dom, theta), GridFunction(dom, centered_derivative(theta, h)),
                               coeff, p.mu, res, iterations, m)


def solve(m: Resource, p: Params, max_iter: int = 100, guess: np.ndarray | None = None) -> EquilibriumSolution:
    """Damped Newton solve of the discrete steady state.

    Steps are halved (at most 30 times) until the residual decreases and the
    iterate stays inside (0, 1).  Convergence is declared when the sup-norm
    residual is below ``max(p.tol_residual, roundoff_floor)``.  If Newton
    stalls (typically drifting toward the trivial state on long domains with
    little resource) the parabolic flow is run to a loose steady state and
    Newton restarts from there.
    """
    if m.mass <= 0.0:
        raise ZeroMass("resource has zero mass; only the trivial equilibrium exists")
    x, h, coeff = _grid(m, p)
    if np.all(coeff == coeff[0]):
        # constant resource: theta == m pointwise is exact
        theta = np.full_like(x, coeff[0])
        return _package(m, p, theta, coeff, h, 0, 0.0)
    if guess is None:
        theta = np.full_like(x, min(max(m.m0, THETA_FLOOR), 1.0 - THETA_FLOOR))
    else:
        theta = np.clip(np.asarray(guess, dtype=float), 1e-300, None).copy()
    try:
        return _newton(m, p, theta, coeff, h, max_iter)
    except NoConvergence as exc:
        first = exc
    start = np.full_like(x, min(max(m.m0, THETA_FLOOR), 1.0 - THETA_FLOOR))
    try:
        warm = march(m, p, start, dt=0.5, tol=1e-6)
    except NoConvergence:
        raise first from None
    sol = _newton(m, p, warm.theta.values.copy(), coeff, h, max_iter)
    return replace(sol, iterations=sol.iterations + warm.iterations)


def _newton(m, p, theta, coeff, h, max_iter):
    res = residual(theta, coeff, p.mu, h)
    rnorm = float(np.max(np.abs(res)))
    prev_step = math.inf
    for it in range(max_iter):
        if rnorm <= p.tol_residual:
            return _package(m, p, theta, coeff, h, it, rnorm)
        delta = solve_banded((1, 1), _jacobian_banded(theta, coeff, p.mu, h), -res)
        step = float(np.max(np.abs(delta)))
        if rnorm <= roundoff_floor(theta, p.mu, h):
            # The residual is at rounding level but can still hide a smooth
            # error; full steps continue while they keep shrinking (Newton
            # contraction) and stop once the update is itself rounding noise.
            trial = theta + delta
            if (step <= STEP_FLOOR * float(np.max(theta)) or step > 0.5 * prev_step
                    or not (np.all(trial > 0.0) and np.all(trial < 1.0))):
                return _package(m, p, theta, coeff, h, it, rnorm)
            theta, prev_step = trial, step
            res = residual(theta, coeff, p.mu, h)
            rnorm = float(np.max(np.abs(res)))
            continue
        lam = 1.0
        for _ in range(31):
            trial = theta + lam * delta
            if np.all(trial > 0.0) and np.all(trial < 1.0):
                tres = residual(trial, coeff, p.mu, h)
                tnorm = float(np.max(np.abs(tres)))
                if tnorm < rnorm:
                    theta, res, rnorm = trial, tres, tnorm
                    prev_step = lam * step
                    break
            lam *= 0.5
        else:
            raise NoConvergence("damped Newton stalled", best=_package(m, p, theta, coeff, h, it, rnorm),
                                residual=rnorm)
    raise NoConvergence("Newton iteration limit reached", best=_package(m, p, theta, coeff, h, max_iter, rnorm),
                        residual=rnorm)


def march(m: Resource, p: Params, theta0: GridFunction | np.ndarray, dt: float = 0.5,
          max_steps: int = 400_000, tol: float | None = None) -> EquilibriumSolution:
    """Time-march ``theta_t = mu theta'' + theta (m - theta)`` to steady state.

    Diffusion is implicit (one banded Cholesky factorization reused every
    step), reaction explicit.  Stops when ``|theta^{n+1} - theta^n|_inf / dt``
    drops below ``max(tol, roundoff_floor)``.
    """
    x, h, coeff = _grid(m, p)
    theta = np.array(theta0.values if isinstance(theta0, GridFunction) else theta0, dtype=float)
    if theta.shape != x.shape:
        raise ValueError("theta0 does not match the grid")
    if np.any(theta < 0) or not np.any(theta > 0):
        raise ValueError("theta0 must be nonnegative and not identically zero")
    tol = p.tol_residual if tol is None else tol
    n1 = len(x)
    c = dt * p.mu / h**2
    # symmetrized system: boundary rows halved
    ab = np.zeros((2, n1))
    ab[1] = 1.0 + 2.0 * c
    ab[1, 0] = ab[1, -1] = 0.5 + c
    ab[0, 1:] = -c
    chol = cholesky_banded(ab)
    scale = np.ones(n1)
    scale[0] = scale[-1] = 0.5
    for step in range(1, max_steps + 1):
        rhs = scale * (theta + dt * theta * (coeff - theta))
        new = cho_solve_banded((chol, False), rhs)
        change = float(np.max(np.abs(new - theta))) / dt
        theta = new
        if change < max(tol, roundoff_floor(theta, p.mu, h)):
            res = float(np.max(np.abs(residual(theta, coeff, p.mu, h))))
            return _package(m, p, theta, coeff, h, step, res)
    res = float(np.max(np.abs(residual(theta, coeff, p.mu, h))))
    raise NoConvergence("time marching did not reach steady state",
                        best=_package(m, p, theta, coeff, h, max_steps, res), residual=res)


def trapezoid(values: np.ndarray, h: float) -> float:
    return float(h * (math.fsum(values[1:-1]) + 0.5 * (values[0] + values[-1])))


def total_population(sol: EquilibriumSolution) -> float:
    """Trapezoid integral of theta over the domain."""
    return trapezoid(sol.theta.values, sol.h)


def comparability_check(sol: EquilibriumSolution, m0: float | None = None) -> tuple[float, float, float]:
    t = sol.theta.values
    tmin, tmax = float(t.min()), float(t.max())
    return tmin, tmax, tmax / tmin


def critical_points(sol: EquilibriumSolution, tol_crit: float = 1e-7) -> list[float]:
    """Interior local extrema of a grid solution.

    A node is critical when the one-sided slopes change sign across it or the
    centered slope is below ``tol_crit * max|theta'|``; runs of such nodes
    collapse to their midpoint.  Positions are refined by the vertex of the
    parabola through the three neighbouring nodes.
    """
    t = sol.theta.values
    h = sol.h
    x = sol.x
    slope = np.diff(t)
    d = sol.dtheta.values
    scale = float(np.max(np.abs(d)))
    if scale == 0.0:
        return []
    flat = np.abs(d) < tol_crit * scale
    flat[0] = flat[-1] = False
    sign_change = np.zeros_like(flat)
    sign_change[1:-1] = slope[:-1] * slope[1:] < 0
    mask = flat | sign_change
    out = []
    j = 1
    n = len(t) - 1
    while j < n:
        if mask[j]:
            k = j
            while k + 1 < n and mask[k + 1]:
                k += 1
            if k == j:
                denom = t[j + 1] - 2 * t[j] + t[j - 1]
                off = 0.5 * (t[j - 1] - t[j + 1]) / denom if denom != 0 else 0.0
                out.append(float(x[j] + np.clip(off, -0.5, 0.5) * h))
            else:
                out.append(float(0.5 * (x[j] + x[k])))
            j = k + 1
        else:
            j += 1
    return out


def count_extrema(sol: EquilibriumSolution) -> int:
    return len(critical_points(sol))


# ---------------------------------------------------------------------------
# shooting refinement


@dataclass(frozen=True)
class CellTrajectory:
    left: float
    right: float
    value: float
    theta_left: float
    dtheta_left: float
    theta_right: float
    dtheta_right: float
    population: float
    dense: object = field(repr=False, default=None)


@dataclass(frozen=True)
class PolishedSolution:
    """Equilibrium resolved to ODE-integrator accuracy on every resource cell."""

    domain: Domain
    mu: float
    cells: tuple[CellTrajectory, ...]
    critical: tuple[float, ...]
    population: float
    shoot_residual: float

    def cell_index(self, x: float) -> int:
        for i, c in enumerate(self.cells):
            if c.left <= x <= c.right:
                return i
        raise ValueError(f"x={x} outside domain")

    def state(self, x: float) -> tuple[float, float]:
        """(theta, theta') at ``x``."""
        c = self.cells[self.cell_index(x)]
        if x == c.left:
            return c.theta_left, c.dtheta_left
        if x == c.right:
            return c.theta_right, c.dtheta_right
        y = c.dense(x)
        return float(y[0]), float(y[1])

    def theta(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.state(float(v))[0] for v in np.atleast_1d(x)])

    def energy(self, index: int) -> float:
        """First integral ``mu theta'^2 - (2/3) theta^3 + m theta^2`` on a cell."""
        c = self.cells[index]
        return self.mu * c.dtheta_left**2 - (2.0 / 3.0) * c.theta_left**3 + c.value * c.theta_left**2


_RTOL = 1e-13
_ATOL = 1e-15


def _integrate(cells, mu, s, dense=False):
    """Shoot from the left end with theta = s, theta' = 0.

    Returns (theta'(b), trajectories); trajectories is None when the orbit
    escapes (0, 2), in which case the sign of the escape is returned instead.
    """
    state = np.array([s, 0.0, 0.0])
    out = []
    crit = []

    def escape_hi(x, y, *a):
        return y[0] - 2.0
    escape_hi.terminal = True

    def escape_lo(x, y, *a):
        return y[0]
    escape_lo.terminal = True

    def turning(x, y, *a):
        return y[1]

    a_dom, b_dom = cells[0][0], cells[-1][1]
    margin = 1e-9 * (b_dom - a_dom)
    for l, r, v in cells:
        def rhs(x, y, v=v):
            return [y[1], y[0] * (y[0] - v) / mu, y[0]]
        sol = solve_ivp(rhs, (l, r), state, method="DOP853", rtol=_RTOL, atol=_ATOL,
                        dense_output=dense, events=(escape_hi, escape_lo, turning))
        if sol.status == 1 and (len(sol.t_events[0]) or len(sol.t_events[1])):
            return (1.0e3 if len(sol.t_events[0]) else -1.0e3), None, None
        end = sol.y[:, -1]
        for xe in sol.t_events[2]:
            if a_dom + margin < xe < b_dom - margin and not (crit and xe - crit[-1] < margin):
                crit.append(float(xe))
        out.append(CellTrajectory(l, r, v, float(state[0]), float(state[1]), float(end[0]), float(end[1]),
                                  float(end[2] - state[2]), sol.sol if dense else None))
        state = end
    return float(state[1]), out, crit


def polish(m: Resource, p: Params, sol: EquilibriumSolution | None = None) -> PolishedSolution:
    """Refine the equilibrium by shooting on the left-end value.

    Within each resource cell the ODE ``mu theta'' = theta (theta - m)`` is
    integrated with DOP853 at tight tolerance; the left value is found by
    bracketing around the grid solution and Brent's method on ``theta'(b)``.
    """
    if sol is None:
        sol = solve(m, p)
    cells = [c for c in m.cells()]
    mu = p.mu
    s0 = float(sol.theta.values[0])
    if all(v == cells[0][2] for _, _, v in cells):
        v = cells[0][2]
        traj = [CellTrajectory(l, r, v, v, 0.0, v, 0.0, v * (r - l), lambda x, v=v: np.array([v, 0.0, 0.0]))
                for l, r, _ in cells]
        return PolishedSolution(m.domain, mu, tuple(traj), (), v * m.domain.length, 0.0)

    def g(s):
        return _integrate(cells, mu, s)[0]

    lo, hi = s0 * (1 - 1e-6), s0 * (1 + 1e-6)
    glo, ghi = g(lo), g(hi)
    grow = 1e-6
    while glo * ghi > 0:
        grow *= 4.0
        if grow > 1.0:
            raise NoConvergence("could not bracket the shooting parameter")
        lo, hi = s0 * (1 - grow), min(s0 * (1 + grow), 1.0)
        glo, ghi = g(lo), g(hi)
    s = brentq(g, lo, hi, xtol=1e-16, rtol=4 * EPS, maxiter=200)
    end, traj, crit = _integrate(cells, mu, s, dense=True)
    if traj is None:
        raise NoConvergence("shooting orbit escaped at the root")
    pop = math.fsum(c.population for c in traj)
    return PolishedSolution(m.domain, mu, tuple(traj), tuple(crit), pop, abs(end))
