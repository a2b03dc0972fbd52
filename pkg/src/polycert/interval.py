"""Outward-rounded interval arithmetic.

Scalar intervals are represented by the `Interval` dataclass; the module-level
helpers operate on (lo, hi) pairs of numpy arrays so that bulk certification
loops stay vectorized.  Every arithmetic result is widened outward by a fixed
number of ulps, which keeps enclosures sound under round-to-nearest without
directed rounding support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Number of ulp steps applied outward after each operation.
WIDEN_ULPS = 4

_NEG_INF = np.float64(-np.inf)
_POS_INF = np.float64(np.inf)


def widen_down(x):
    """Round `x` downward by WIDEN_ULPS ulps (elementwise)."""
    y = np.asarray(x, dtype=np.float64)
    for _ in range(WIDEN_ULPS):
        y = np.nextafter(y, _NEG_INF)
    return y


def widen_up(x):
    """Round `x` upward by WIDEN_ULPS ulps (elementwise)."""
    y = np.asarray(x, dtype=np.float64)
    for _ in range(WIDEN_ULPS):
        y = np.nextafter(y, _POS_INF)
    return y


def iadd(alo, ahi, blo, bhi):
    return widen_down(alo + blo), widen_up(ahi + bhi)


def isub(alo, ahi, blo, bhi):
    return widen_down(alo - bhi), widen_up(ahi - blo)


def imul(alo, ahi, blo, bhi):
    p1 = alo * blo
    p2 = alo * bhi
    p3 = ahi * blo
    p4 = ahi * bhi
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return widen_down(lo), widen_up(hi)


def iscale(lo, hi, c):
    """Multiply an interval by an exact scalar c."""
    if c >= 0:
        return widen_down(c * lo), widen_up(c * hi)
    return widen_down(c * hi), widen_up(c * lo)


def ishift(lo, hi, c):
    return widen_down(lo + c), widen_up(hi + c)


def ihull(alo, ahi, blo, bhi):
    return np.minimum(alo, blo), np.maximum(ahi, bhi)


def enclose(values, *more):
    """Outward-widened hull of one or more point evaluations."""
    lo = np.asarray(values, dtype=np.float64)
    hi = lo
    for v in more:
        v = np.asarray(v, dtype=np.float64)
        lo = np.minimum(lo, v)
        hi = np.maximum(hi, v)
    return widen_down(lo), widen_up(hi)


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi] with outward-rounded arithmetic."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError(f"interval endpoints must be finite: [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"empty interval: [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x, slack: float = 0.0) -> bool:
        return bool(np.all(x >= self.lo - slack) and np.all(x <= self.hi + slack))

    def contains_interval(self, other: "Interval", slack: float = 0.0) -> bool:
        return self.lo - slack <= other.lo and other.hi <= self.hi + slack

    def intersect(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def __add__(self, other):
        if isinstance(other, Interval):
            lo, hi = iadd(self.lo, self.hi, other.lo, other.hi)
        else:
            lo, hi = ishift(self.lo, self.hi, float(other))
        return Interval(float(lo), float(hi))

    def __sub__(self, other):
        if isinstance(other, Interval):
            lo, hi = isub(self.lo, self.hi, other.lo, other.hi)
        else:
            lo, hi = ishift(self.lo, self.hi, -float(other))
        return Interval(float(lo), float(hi))

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other):
        if isinstance(other, Interval):
            lo, hi = imul(self.lo, self.hi, other.lo, other.hi)
        else:
            lo, hi = iscale(self.lo, self.hi, float(other))
        return Interval(float(lo), float(hi))

    __rmul__ = __mul__

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"
