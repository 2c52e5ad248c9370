"""Domain, resource and grid data model.

A bang-bang resource is stored as a sorted tuple of disjoint closed intervals on
which ``m = 1``; everything else on the domain is ``m = 0``.  Endpoints are kept
exact; grid coefficients are produced on demand by :func:`node_coefficients`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class ResourceError(ValueError):
    """Base class for invalid resources; ``invariant`` names what failed."""

    invariant = "resource"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class OverlappingIntervals(ResourceError):
    invariant = "intervals pairwise disjoint"


class IntervalOutOfDomain(ResourceError):
    invariant = "intervals contained in domain"


class EmptyResource(ResourceError):
    invariant = "mass > 0"


class FullResource(ResourceError):
    invariant = "m0 < 1"


class DegenerateInterval(ResourceError):
    invariant = "left < right"


class NonpositiveMu(ValueError):
    pass


class OutOfDomain(ValueError):
    pass


@dataclass(frozen=True)
class Domain:
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or not self.a < self.b:
            raise ValueError(f"domain needs a < b, got ({self.a}, {self.b})")

    @property
    def length(self) -> float:
        return self.b - self.a

    def contains(self, x: float) -> bool:
        return self.a <= x <= self.b


@dataclass(frozen=True)
class Params:
    mu: float = 1.0
    grid_n: int = 512
    tol_residual: float = 1e-10
    tol_integral: float = 1e-10

    def __post_init__(self):
        if not self.mu > 0:
            raise NonpositiveMu(f"mu must be positive, got {self.mu}")
        if self.grid_n < 64:
            raise ValueError(f"grid_n must be >= 64, got {self.grid_n}")
        if not (self.tol_residual > 0 and self.tol_integral > 0):
            raise ValueError("tolerances must be positive")

    def with_(self, **changes) -> "Params":
        values = dict(mu=self.mu, grid_n=self.grid_n,
                      tol_residual=self.tol_residual, tol_integral=self.tol_integral)
        values.update(changes)
        return Params(**values)


class Resource:
    """Common surface of piecewise-constant resources.

    Subclasses provide :meth:`cells`, a list of ``(left, right, value)`` tuples
    tiling the domain from left to right.
    """

    domain: Domain

    def cells(self) -> list[tuple[float, float, float]]:
        raise NotImplementedError

    @property
    def mass(self) -> float:
        return math.fsum((r - l) * v for l, r, v in self.cells())

    @property
    def m0(self) -> float:
        return self.mass / self.domain.length

    def value_at(self, x: float) -> float:
        for l, r, v in self.cells():
            if l <= x <= r:
                return v
        raise OutOfDomain(f"x={x} outside {self.domain}")

    def level_set_measure(self, value: float) -> float:
        """Measure of ``{m = value}``."""
        return math.fsum(r - l for l, r, v in self.cells() if v == value)


@dataclass(frozen=True)
class BangBangResource(Resource):
    domain: Domain
    intervals: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        ivs = tuple(sorted((float(l), float(r)) for l, r in self.intervals))
        merged: list[tuple[float, float]] = []
        for l, r in ivs:
            if not l < r:
                raise DegenerateInterval(f"interval ({l}, {r}) has left >= right")
            if l < self.domain.a or r > self.domain.b:
                raise IntervalOutOfDomain(
                    f"interval ({l}, {r}) not inside [{self.domain.a}, {self.domain.b}]")
            if merged and l < merged[-1][1]:
                raise OverlappingIntervals(
                    f"intervals {merged[-1]} and ({l}, {r}) overlap")
            if merged and l == merged[-1][1]:
                # touching closed intervals describe the same indicator
                merged[-1] = (merged[-1][0], r)
            else:
                merged.append((l, r))
        object.__setattr__(self, "intervals", tuple(merged))

    @property
    def mass(self) -> float:
        return math.fsum(r - l for l, r in self.intervals)

    def cells(self) -> list[tuple[float, float, float]]:
        out = []
        x = self.domain.a
        for l, r in self.intervals:
            if l > x:
                out.append((x, l, 0.0))
            out.append((l, r, 1.0))
            x = r
        if x < self.domain.b:
            out.append((x, self.domain.b, 0.0))
        return out

    def evaluate(self, x: float) -> int:
        """Indicator value; interval endpoints count as inside."""
        if not self.domain.contains(x):
            raise OutOfDomain(f"x={x} outside [{self.domain.a}, {self.domain.b}]")
        return int(any(l <= x <= r for l, r in self.intervals))

    def value_at(self, x: float) -> float:
        return float(self.evaluate(x))

    def mirrored(self) -> "BangBangResource":
        a, b = self.domain.a, self.domain.b
        return BangBangResource(self.domain, tuple((a + b - r, a + b - l) for l, r in self.intervals))

    def to_dict(self) -> dict:
        return {"domain": [self.domain.a, self.domain.b],
                "intervals": [[l, r] for l, r in self.intervals]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "BangBangResource":
        if not isinstance(data, dict):
            raise ResourceError("resource must be a JSON object")
        for key in ("domain", "intervals"):
            if key not in data:
                raise ResourceError(f"missing field '{key}'")
        dom = data["domain"]
        if not (isinstance(dom, (list, tuple)) and len(dom) == 2):
            raise ResourceError("field 'domain' must be [a, b]")
        ivs = data["intervals"]
        if not isinstance(ivs, (list, tuple)) or any(
                not isinstance(iv, (list, tuple)) or len(iv) != 2 for iv in ivs):
            raise ResourceError("field 'intervals' must be a list of [left, right] pairs")
        try:
            domain = Domain(float(dom[0]), float(dom[1]))
        except (TypeError, ValueError) as exc:
            raise ResourceError(f"field 'domain': {exc}") from None
        return cls(domain, tuple((float(l), float(r)) for l, r in ivs))

    @classmethod
    def from_json(cls, text: str) -> "BangBangResource":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PiecewiseConstantResource(Resource):
    """Resource with values in [0, 1] on consecutive cells.

    ``breaks`` has one more entry than ``values``; the first and last breaks are
    the domain endpoints.
    """

    domain: Domain
    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        br = tuple(float(x) for x in self.breaks)
        vals = tuple(float(v) for v in self.values)
        if len(br) != len(vals) + 1:
            raise ResourceError("breaks must have one more entry than values")
        if not math.isclose(br[0], self.domain.a, abs_tol=1e-14) or not math.isclose(
                br[-1], self.domain.b, abs_tol=1e-14 * max(1.0, abs(self.domain.b))):
            raise IntervalOutOfDomain("breaks must start and end at the domain endpoints")
        if any(not x < y for x, y in zip(br, br[1:])):
            raise OverlappingIntervals("breaks must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ResourceError("values must lie in [0, 1]")
        object.__setattr__(self, "breaks", br)
        object.__setattr__(self, "values", vals)

    def cells(self) -> list[tuple[float, float, float]]:
        return list(zip(self.breaks[:-1], self.breaks[1:], self.values))

    @classmethod
    def from_cells(cls, domain: Domain, cells: Iterable[tuple[float, float, float]],
                   min_width: float = 0.0) -> "PiecewiseConstantResource":
        """Build from (left, right, value) cells, merging equal neighbours."""
        breaks = [domain.a]
        values: list[float] = []
        for l, r, v in cells:
            if r - l <= min_width:
                continue
            if values and values[-1] == v:
                continue
            if values:
                breaks.append(l)
            values.append(v)
        breaks.append(domain.b)
        return cls(domain, tuple(breaks), tuple(values))


@dataclass(frozen=True)
class ConstantResource(Resource):
    domain: Domain
    value: float

    def cells(self) -> list[tuple[float, float, float]]:
        return [(self.domain.a, self.domain.b, float(self.value))]


@dataclass(frozen=True)
class GridFunction:
    domain: Domain
    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def h(self) -> float:
        return self.domain.length / self.n

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.domain.a, self.domain.b, self.n + 1)


def validate(m: Resource, allow_full: bool = False) -> Resource:
    """Check membership in the admissible class; returns ``m`` unchanged.

    Structural invariants are enforced at construction; this adds the mass
    conditions (``mass > 0`` always, ``m0 < 1`` unless ``allow_full``).
    """
    mass = m.mass
    if mass <= 0.0:
        raise EmptyResource("resource has zero mass")
    if not allow_full and mass >= m.domain.length:
        raise FullResource("m0 = 1 is outside the admissible class")
    return m


def rescale(m: BangBangResource, mu: float) -> tuple[BangBangResource, Domain]:
    """Map to the unit-diffusion problem on ``Omega / sqrt(mu)``."""
    if not mu > 0:
        raise NonpositiveMu(f"mu must be positive, got {mu}")
    s = 1.0 / math.sqrt(mu)
    dom = Domain(m.domain.a * s, m.domain.b * s)
    return BangBangResource(dom, tuple((l * s, r * s) for l, r in m.intervals)), dom


def unscale(m: BangBangResource, mu: float) -> tuple[BangBangResource, Domain]:
    """Inverse of :func:`rescale`."""
    return rescale(m, 1.0 / mu)


def resource_cells_scaled(m: Resource, factor: float) -> list[tuple[float, float, float]]:
    return [(l * factor, r * factor, v) for l, r, v in m.cells()]


def hat_primitive(t: np.ndarray, h: float) -> np.ndarray:
    """Integral of the unit hat ``max(0, 1 - |s|/h)`` from -inf to ``t``."""
    t = np.clip(t, -h, h)
    return np.where(t <= 0.0, (t + h) ** 2 / (2 * h), h - (h - t) ** 2 / (2 * h))


def node_coefficients(cells: Sequence[tuple[float, float, float]], x: np.ndarray) -> np.ndarray:
    """Hat-weighted averages of a piecewise-constant coefficient at grid nodes.

    Each node gets ``int(phi_j m) / int(phi_j)`` with ``phi_j`` the linear hat
    restricted to the domain, so the trapezoid rule applied to the node values
    reproduces the exact integral of ``m``.
    """
    h = x[1] - x[0]
    acc = np.zeros_like(x)
    for l, r, v in cells:
        if v == 0.0:
            continue
        acc += v * (hat_primitive(r - x, h) - hat_primitive(l - x, h))
    weight = np.full_like(x, h)
    weight[0] = weight[-1] = h / 2
    return acc / weight
