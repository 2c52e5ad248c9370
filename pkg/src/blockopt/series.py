"""Large-diffusion expansion of the equilibrium for ``m = chi_(0, m0)`` on (0, 1).

The equilibrium is written ``theta = m0 + sum_k eta_k / mu^k`` with each
``eta_k = zeta_k + beta_k`` a piecewise polynomial with one breakpoint at
``x = m0``.  ``zeta_k`` has zero mean and homogeneous Neumann data; the
constants ``beta_k`` come from the solvability condition of the next order.

Coefficients are plain floats (or complex numbers, which lets
:func:`F_partials_series` differentiate in ``m0`` by the complex-step trick).
The right piece is stored in the shifted variable ``y = x - 1`` so that
``zeta_k'(1) = 0`` holds coefficient-wise, just like ``zeta_k'(0) = 0`` on the
left piece.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

K_DEFAULT = 8
K_MAX = 12
CONTINUITY_TOL = 1e-12


class BreakpointMismatch(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    """Parameters outside the guaranteed-convergence regime ``m0 < mu / 200``."""


def _sum(values) -> complex | float:
    """Compensated sum that also accepts complex terms."""
    values = list(values)
    if any(isinstance(v, complex) or np.iscomplexobj(v) for v in values):
        return complex(math.fsum(float(np.real(v)) for v in values),
                       math.fsum(float(np.imag(v)) for v in values))
    return math.fsum(float(v) for v in values)


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c))
    return c if len(c) else np.zeros(1, dtype=c.dtype)


def _poly_integral(c: np.ndarray, lo, hi):
    """Exact integral of ``sum c_i t^i`` over ``(lo, hi)``."""
    return _sum(ci * (hi ** (i + 1) - lo ** (i + 1)) / (i + 1) for i, ci in enumerate(c))


@dataclass(frozen=True)
class PiecewisePoly:
    """Function on (0, 1) given by one polynomial on each side of ``breakpoint``.

    ``left`` holds coefficients in ``x`` (ascending powers) for ``x < breakpoint``;
    ``right`` holds coefficients in ``y = x - 1`` for ``x > breakpoint``.
    With ``continuous=True`` the two pieces are checked to agree at the
    breakpoint to ``1e-12`` relative.
    """

    breakpoint: float | complex
    left: np.ndarray
    right: np.ndarray
    continuous: bool = False

    def __post_init__(self):
        object.__setattr__(self, "left", _trim(self.left))
        object.__setattr__(self, "right", _trim(self.right))
        if self.continuous:
            jl, jr = self.left_value(), self.right_value()
            scale = max(abs(jl), abs(jr), self.nu(), 1e-300)
            if abs(jl - jr) > CONTINUITY_TOL * scale:
                raise ValueError(f"pieces disagree at the breakpoint: {jl} vs {jr}")

    # construction helpers
    @classmethod
    def constant(cls, c: float, value) -> "PiecewisePoly":
        return cls(c, np.array([value]), np.array([value]), continuous=True)

    @classmethod
    def indicator_left(cls, c: float) -> "PiecewisePoly":
        """``chi_(0, c)``."""
        return cls(c, np.array([1.0]), np.array([0.0]))

    @classmethod
    def identity(cls, c: float) -> "PiecewisePoly":
        """The function ``x``."""
        return cls(c, np.array([0.0, 1.0]), np.array([1.0, 1.0]), continuous=True)

    def _check(self, other: "PiecewisePoly"):
        if self.breakpoint != other.breakpoint:
            raise BreakpointMismatch(f"breakpoints {self.breakpoint} and {other.breakpoint} differ")

    def __add__(self, other):
        if not isinstance(other, PiecewisePoly):
            return PiecewisePoly(self.breakpoint, P.polyadd(self.left, [other]), P.polyadd(self.right, [other]))
        self._check(other)
        return PiecewisePoly(self.breakpoint, P.polyadd(self.left, other.left), P.polyadd(self.right, other.right))

    __radd__ = __add__

    def __neg__(self):
        return PiecewisePoly(self.breakpoint, -self.left, -self.right)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, PiecewisePoly):
            return PiecewisePoly(self.breakpoint, self.left * other, self.right * other)
        self._check(other)
        return PiecewisePoly(self.breakpoint, P.polymul(self.left, other.left), P.polymul(self.right, other.right))

    __rmul__ = __mul__

    @property
    def degree(self) -> int:
        return max(len(self.left), len(self.right)) - 1

    def antiderivative(self) -> "PiecewisePoly":
        """Piecewise antiderivative vanishing at ``x = 0`` (left) and ``x = 1`` (right).

        The result is generally not continuous at the breakpoint.
        """
        return PiecewisePoly(self.breakpoint, P.polyint(self.left), P.polyint(self.right))

    def derivative(self) -> "PiecewisePoly":
        return PiecewisePoly(self.breakpoint, P.polyder(self.left), P.polyder(self.right))

    def integral(self):
        """Integral over (0, 1)."""
        c = self.breakpoint
        return _sum([_poly_integral(self.left, 0.0, c), _poly_integral(self.right, c - 1.0, 0.0)])

    def left_value(self):
        return P.polyval(self.breakpoint, self.left)

    def right_value(self):
        return P.polyval(self.breakpoint - 1.0, self.right)

    def evaluate(self, x):
        """Values at real ``x`` in [0, 1]; the breakpoint takes the left value."""
        x = np.asarray(x, dtype=float)
        c = np.real(self.breakpoint)
        return np.where(x <= c, P.polyval(x, self.left), P.polyval(x - 1.0, self.right))

    def right_in_x(self) -> np.ndarray:
        """Right-piece coefficients re-expanded in powers of ``x``."""
        out = np.zeros(1, dtype=self.right.dtype)
        shift = np.array([-1.0, 1.0])
        power = np.array([1.0])
        for ci in self.right:
            out = P.polyadd(out, ci * power)
            power = P.polymul(power, shift)
        return out

    def nu(self) -> float:
        """Largest absolute coefficient sum of the two pieces (both in powers of ``x``)."""
        return max(float(np.sum(np.abs(self.left))), float(np.sum(np.abs(self.right_in_x()))))

    def sup_norm(self, samples: int = 257) -> float:
        c = float(np.real(self.breakpoint))
        xl = np.linspace(0.0, c, samples)
        xr = np.linspace(c, 1.0, samples)
        return float(max(np.max(np.abs(P.polyval(xl, self.left))),
                          np.max(np.abs(P.polyval(xr - 1.0, self.right)))))


def solve_neumann(rhs: PiecewisePoly) -> PiecewisePoly:
    """Zero-mean continuous ``z`` with ``z'' = rhs`` and ``z'(0) = z'(1) = 0``.

    ``rhs`` must have zero integral (up to rounding).  The derivative is built
    from ``x = 0`` on the left and from ``x = 1`` on the right; the two
    second antiderivatives are then glued by a constant and the mean removed.
    """
    z = rhs.antiderivative().antiderivative()
    shift = z.right_value() - z.left_value()
    left = P.polyadd(z.left, [shift])
    mean = _sum([_poly_integral(left, 0.0, rhs.breakpoint),
                 _poly_integral(z.right, rhs.breakpoint - 1.0, 0.0)])
    return PiecewisePoly(rhs.breakpoint, P.polysub(left, [mean]), P.polysub(z.right, [mean]), continuous=True)


@dataclass
class SeriesState:
    m0: float | complex
    K: int
    eta: list[PiecewisePoly]
    beta: list
    integrals: list
    zeta: list[PiecewisePoly] = field(default_factory=list)

    def partial_sum(self, mu: float, K: int | None = None) -> PiecewisePoly:
        K = self.K if K is None else K
        s = PiecewisePoly.constant(self.m0, self.m0)
        for k in range(1, K + 1):
            s = s + self.eta[k - 1] * (mu ** -k)
        return s


def eta_k_compute(m0, K: int = K_DEFAULT) -> SeriesState:
    """Build ``eta_1 .. eta_K`` by the order-by-order recursion."""
    if not 0.0 < np.real(m0) < 1.0:
        raise ValueError(f"need 0 < m0 < 1, got {m0}")
    if not 1 <= K <= K_MAX:
        raise ValueError(f"K must be in 1..{K_MAX}, got {K}")
    m = PiecewisePoly.indicator_left(m0)
    weight = m + (-2.0 * m0)      # m - 2 m0
    eta: list[PiecewisePoly] = []
    zeta: list[PiecewisePoly] = []
    beta: list = []
    for k in range(1, K + 1):
        if k == 1:
            rhs = (m + (-m0)) * (-m0)
        else:
            rhs = -(weight * eta[k - 2])
            for l in range(1, k - 1):
                rhs = rhs + eta[l - 1] * eta[k - l - 2]
        z = solve_neumann(rhs)
        prod = _sum((eta[l - 1] * eta[k - l - 1]).integral() for l in range(1, k))
        b = ((m * z).integral() - prod) / m0
        zeta.append(z)
        beta.append(b)
        eta.append(PiecewisePoly(m0, P.polyadd(z.left, [b]), P.polyadd(z.right, [b]), continuous=True))
    integrals = [e.integral() for e in eta]
    return SeriesState(m0, K, eta, beta, integrals, zeta)


@dataclass(frozen=True)
class SeriesValue:
    value: float
    remainder: float
    terms: tuple
    guaranteed: bool

    def __float__(self):
        return float(self.value)


def _terms(m0, mu, K):
    if K == 0:
        return []
    state = eta_k_compute(m0, K)
    return [b * mu ** -(k + 1) for k, b in enumerate(state.beta)]


def F_series(m0, mu: float, K: int = K_DEFAULT, warn: bool = True) -> SeriesValue:
    """Partial sum ``m0 + sum_{k<=K} mu^-k int eta_k`` with a geometric tail estimate.

    The tail estimate is ``|t_K| q / (1 - q)`` with ``q = |t_K / t_{K-1}|``;
    it is infinite when ``q >= 1`` or ``K < 2``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    guaranteed = bool(np.real(m0) < mu / 200.0)
    if warn and not guaranteed:
        warnings.warn(f"m0={m0} >= mu/200={mu / 200}; convergence is not guaranteed",
                      ConvergenceWarning, stacklevel=2)
    terms = _terms(m0, mu, K)
    value = _sum([m0, *terms])
    if K >= 2 and terms[-2] != 0:
        q = abs(terms[-1] / terms[-2])
        remainder = abs(terms[-1]) * q / (1 - q) if q < 1 else math.inf
    elif K == 0:
        remainder = math.inf
    else:
        remainder = math.inf
    return SeriesValue(value, float(remainder), tuple(terms), guaranteed)


def F_partials_series(m0: float, mu: float, K: int = K_DEFAULT) -> tuple[float, float]:
    """``(dF/dm0, dF/dmu)`` of the truncated series.

    ``dF/dm0`` uses a complex step in ``m0`` (no subtractive cancellation);
    ``dF/dmu`` differentiates the powers of ``mu`` term by term.
    """
    h = 1e-30
    dm0 = F_series(complex(m0, h), mu, K, warn=False).value.imag / h
    beta = eta_k_compute(m0, K).beta
    dmu = -math.fsum(k * b * mu ** -(k + 1) for k, b in enumerate(beta, start=1))
    return float(dm0), dmu


def series_residual(state: SeriesState, mu: float, K: int | None = None, samples: int = 257) -> float:
    """Sup-norm of ``mu S'' + S (m - S)`` for the partial sum ``S`` of order ``K``."""
    s = state.partial_sum(mu, K)
    m = PiecewisePoly.indicator_left(state.m0)
    r = s.derivative().derivative() * mu + s * (m - s)
    return r.sup_norm(samples)


def solvability_coefficients(state: SeriesState) -> list[float]:
    """Order-k coefficients of ``int S (m - S)``; all vanish for the exact series."""
    m = PiecewisePoly.indicator_left(state.m0)
    out = []
    for k in range(1, state.K + 1):
        term = ((m + (-2.0 * state.m0)) * state.eta[k - 1]).integral()
        term -= _sum((state.eta[l - 1] * state.eta[k - l - 1]).integral() for l in range(1, k))
        out.append(term)
    return out


def alpha_bound(m0: float, K: int, C0: float = 1.0, C1: float = 1.0) -> list[float]:
    a = [C0 * m0**2]
    for k in range(1, K):
        a.append(C1 / m0 * math.fsum(a[l] * a[k - 1 - l] for l in range(k)))
    return a


def gamma_bound(gamma1: float, K: int) -> list[float]:
    g = [gamma1]
    for k in range(1, K):
        # gamma(k+1) = 144 gamma(k) + 50 sum_{l=1}^{k-1} gamma(l) gamma(k-l)
        g.append(144.0 * g[k - 1] + 50.0 * math.fsum(g[l - 1] * g[k - l - 1] for l in range(1, k)))
    return g


def coefficient_diagnostics(state: SeriesState) -> dict:
    """Coefficient norms, the recursive bound sequences and an empirical radius.

    ``gamma`` is seeded with ``nu(eta_1)``; a ``k`` is flagged when
    ``nu(eta_k)`` exceeds ``3 gamma(k)``.  The radius (in ``1/mu``) is the
    ratio estimate ``|int eta_{K-1} / int eta_K|`` next to the root estimate
    ``|int eta_K|^(-1/K)``.
    """
    m0 = float(np.real(state.m0))
    nu = [e.nu() for e in state.eta]
    gamma = gamma_bound(nu[0], state.K)
    ints = [abs(float(np.real(v))) for v in state.integrals]
    ratio = ints[-2] / ints[-1] if state.K >= 2 and ints[-1] > 0 else math.inf
    root = ints[-1] ** (-1.0 / state.K) if ints[-1] > 0 else math.inf
    return {
        "nu_values": nu,
        "nu_scaled": [v / m0 ** (k + 1) for k, v in enumerate(nu, start=1)],
        "alpha_bound": alpha_bound(m0, state.K),
        "gamma_bound": gamma,
        "flags": [k for k, (v, g) in enumerate(zip(nu, gamma), start=1) if v > 3 * g],
        "radius_estimate": ratio,
        "radius_root_estimate": root,
        "radius_guaranteed": 1.0 / (200.0 * m0),
    }
