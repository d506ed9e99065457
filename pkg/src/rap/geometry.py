"""Dimension-generic geometric primitives and special functions.

Points are plain 1-d float64 arrays of length d (the ambient dimension).
The packing domain is always the axis-aligned cube [0, L]^d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Sphere",
    "BoxDomain",
    "unit_ball_volume",
    "regularized_incomplete_beta",
    "cap_area",
    "signed_gap",
    "wall_gap",
]


@dataclass(frozen=True)
class Sphere:
    """A d-dimensional ball given by its center and (strictly positive) radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        object.__setattr__(self, "center", center)
        if center.ndim != 1 or center.size < 1:
            raise ValueError("sphere center must be a 1-d coordinate array")
        if not np.all(np.isfinite(center)):
            raise ValueError("sphere center must be finite")
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise ValueError(f"sphere radius must be positive and finite, got {self.radius}")

    @property
    def dimension(self) -> int:
        return self.center.size


@dataclass(frozen=True)
class BoxDomain:
    """The cubic domain [0, side]^d."""

    dimension: int
    side: float

    def __post_init__(self):
        if self.dimension < 2:
            raise ValueError(f"box dimension must be >= 2, got {self.dimension}")
        if not (self.side > 0.0 and math.isfinite(self.side)):
            raise ValueError(f"box side must be positive and finite, got {self.side}")

    @property
    def volume(self) -> float:
        return self.side**self.dimension

    def contains(self, point: np.ndarray) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return bool(np.all(p >= 0.0) and np.all(p <= self.side))


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in d dimensions, pi^(d/2) / Gamma(d/2 + 1)."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 1e-16) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b).

    Continued-fraction evaluation with the symmetry switch at
    x > (a + 1)/(a + b + 2), accurate to ~1e-14 relative over the
    parameter range used by the hyperspherical cap area.
    """
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x must be in [0, 1], got {x}")
    if a <= 0.0 or b <= 0.0:
        raise ValueError(f"a and b must be positive, got a={a}, b={b}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def cap_area(phi: float, d: int) -> float:
    """Area of the unit hyperspherical cap of half-angle phi in d dimensions.

    Omega(phi) = (d V_d / 2) * I_{sin^2 phi}((d-1)/2, 1/2), nondecreasing in
    phi on [0, pi/2].  In d=2 this reduces to the arc length 2*phi.
    """
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    if not (0.0 <= phi <= math.pi / 2.0 + 1e-15):
        raise ValueError(f"phi must be in [0, pi/2], got {phi}")
    s = math.sin(min(phi, math.pi / 2.0))
    ix = regularized_incomplete_beta(s * s, (d - 1) / 2.0, 0.5)
    return 0.5 * d * unit_ball_volume(d) * ix


def signed_gap(point: np.ndarray, sphere: Sphere) -> float:
    """Distance from `point` to the surface of `sphere`; negative strictly inside."""
    p = np.asarray(point, dtype=np.float64)
    if p.shape != sphere.center.shape:
        raise ValueError(f"dimension mismatch: point {p.shape} vs sphere {sphere.center.shape}")
    ss = 0.0
    for k in range(p.size):
        diff = p[k] - sphere.center[k]
        ss += diff * diff
    return math.sqrt(ss) - sphere.radius


def wall_gap(point: np.ndarray, box: BoxDomain) -> float:
    """Distance from `point` to the nearest wall of `box`."""
    p = np.asarray(point, dtype=np.float64)
    if p.size != box.dimension:
        raise ValueError(f"dimension mismatch: point has {p.size} coords, box is {box.dimension}-d")
    if not box.contains(p):
        raise ValueError(f"point {p} outside box [0, {box.side}]^{box.dimension}")
    best = box.side
    for k in range(p.size):
        best = min(best, p[k], box.side - p[k])
    return best
