"""Vectorised interval arithmetic with outward rounding.

An :class:`Iv` holds two numpy arrays of lower and upper bounds, so one object
encloses a whole batch of boxes at once.  Every operation rounds its result
outward by at least one ulp; trigonometric results are padded by a few ulps to
cover libm error.
"""

from __future__ import annotations

import numpy as np

_TWO_PI = 2.0 * np.pi
_EPS = np.finfo(float).eps


def _down(x):
    return np.nextafter(x, -np.inf)


def _up(x):
    return np.nextafter(x, np.inf)


class Iv:
    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = np.asarray(lo, dtype=float)
        self.lo = lo
        self.hi = lo if hi is None else np.asarray(hi, dtype=float)

    @classmethod
    def point(cls, x):
        return cls(x, x)

    def __repr__(self):
        return f"Iv({self.lo!r}, {self.hi!r})"

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def mid(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def mag(self):
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    def __neg__(self):
        return Iv(-self.hi, -self.lo)

    def __add__(self, other):
        if isinstance(other, Iv):
            return Iv(_down(self.lo + other.lo), _up(self.hi + other.hi))
        return Iv(_down(self.lo + other), _up(self.hi + other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Iv):
            return Iv(_down(self.lo - other.hi), _up(self.hi - other.lo))
        return Iv(_down(self.lo - other), _up(self.hi - other))

    def __rsub__(self, other):
        return Iv(_down(other - self.hi), _up(other - self.lo))

    def __mul__(self, other):
        if isinstance(other, Iv):
            p = (self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi)
            lo = np.minimum(np.minimum(p[0], p[1]), np.minimum(p[2], p[3]))
            hi = np.maximum(np.maximum(p[0], p[1]), np.maximum(p[2], p[3]))
            return Iv(_down(lo), _up(hi))
        c = np.asarray(other, dtype=float)
        a, b = self.lo * c, self.hi * c
        return Iv(_down(np.minimum(a, b)), _up(np.maximum(a, b)))

    __rmul__ = __mul__

    def sqr(self):
        a, b = self.lo * self.lo, self.hi * self.hi
        hi = np.maximum(a, b)
        lo = np.where((self.lo <= 0) & (self.hi >= 0), 0.0, np.minimum(a, b))
        return Iv(np.maximum(_down(lo), 0.0), _up(hi))

    def __pow__(self, n: int):
        if n == 0:
            return Iv(np.ones_like(self.lo))
        if n == 1:
            return self
        if n == 2:
            return self.sqr()
        # lo**n / hi**n carry a few ulps of error for n > 2
        a, b = self.lo**n, self.hi**n
        if n % 2:
            lo, hi = a, b
        else:
            hi = np.maximum(a, b)
            lo = np.where((self.lo <= 0) & (self.hi >= 0), 0.0, np.minimum(a, b))
        pad = n * _EPS
        return Iv(_down(lo - np.abs(lo) * pad), _up(hi + np.abs(hi) * pad))

    def cos(self):
        return _cos_shifted(self.lo, self.hi, 0.0)

    def sin(self):
        # sin x = cos(x - pi/2); critical points handled on the shifted interval
        return _cos_shifted(self.lo, self.hi, np.pi / 2)

    def intersect(self, other: "Iv") -> "Iv":
        return Iv(np.maximum(self.lo, other.lo), np.minimum(self.hi, other.hi))

    def contains(self, x) -> np.ndarray:
        return (self.lo <= x) & (x <= self.hi)


def _cos_shifted(lo, hi, shift):
    """Enclosure of cos(x - shift) for x in [lo, hi]."""
    f = np.cos if shift == 0.0 else np.sin
    a, b = f(lo), f(hi)
    out_lo = np.minimum(a, b)
    out_hi = np.maximum(a, b)
    # critical points of cos(x - shift): maxima at shift + 2k pi, minima at shift + (2k+1) pi;
    # the membership test is widened slightly so rounding can only add extrema.
    slack = 1e-12
    t_lo = (lo - shift) / _TWO_PI
    t_hi = (hi - shift) / _TWO_PI
    has_max = np.ceil(t_lo - slack) <= t_hi + slack
    has_min = np.ceil(t_lo - 0.5 - slack) <= t_hi - 0.5 + slack
    out_hi = np.where(has_max, 1.0, out_hi)
    out_lo = np.where(has_min, -1.0, out_lo)
    pad = 4 * _EPS * np.maximum(np.abs(out_lo), np.abs(out_hi)) + 1e-300
    return Iv(np.maximum(out_lo - pad, -1.0), np.minimum(out_hi + pad, 1.0))
