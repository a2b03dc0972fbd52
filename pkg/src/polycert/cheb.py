"""Chebyshev-basis polynomials on arbitrary intervals.

Evaluation uses the Clenshaw recurrence, differentiation the coefficient
recurrence, and extrema are located through the eigenvalues of the colleague
matrix of the derivative (the companion analogue for the Chebyshev basis).
Interpolation uses Chebyshev points of the second kind, which makes the
transform an explicit cosine matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .interval import Interval, iadd, imul, iscale, isub, widen_down, widen_up


class ExtremaError(RuntimeError):
    """Raised when the colleague eigenvalue computation fails."""


@dataclass(frozen=True)
class ChebPoly:
    """Polynomial sum_k c_k T_k(t) with t the affine image of [a, b] on [-1, 1]."""

    coeffs: np.ndarray
    domain: Interval

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=np.float64))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a nonempty 1-d array")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def to_t(self, x):
        a, b = self.domain.lo, self.domain.hi
        if a == b:
            return np.zeros_like(np.asarray(x, dtype=np.float64))
        return (2.0 * np.asarray(x, dtype=np.float64) - a - b) / (b - a)

    def from_t(self, t):
        a, b = self.domain.lo, self.domain.hi
        return 0.5 * ((b - a) * np.asarray(t, dtype=np.float64) + a + b)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Clenshaw recurrence; x may lie outside the domain."""
        t = self.to_t(x)
        c = self.coeffs
        b1 = np.zeros_like(t)
        b2 = np.zeros_like(t)
        for k in range(c.size - 1, 0, -1):
            b1, b2 = c[k] + 2.0 * t * b1 - b2, b1
        out = c[0] + t * b1 - b2
        if np.isscalar(x) or np.ndim(x) == 0:
            return float(out)
        return out

    def derivative(self) -> "ChebPoly":
        """Exact derivative, including the 2/(b-a) chain factor."""
        c = self.coeffs
        n = c.size - 1
        if n == 0:
            return ChebPoly(np.zeros(1), self.domain)
        d = np.zeros(n)
        d_kp2 = 0.0
        d_kp1 = 0.0
        for k in range(n - 1, -1, -1):
            dk = d_kp2 + 2.0 * (k + 1) * c[k + 1]
            d[k] = dk
            d_kp2, d_kp1 = d_kp1, dk
        d[0] *= 0.5
        scale = 2.0 / self.domain.width if self.domain.width > 0 else 0.0
        return ChebPoly(d * scale, self.domain)

    def with_domain(self, domain: Interval) -> "ChebPoly":
        return ChebPoly(self.coeffs.copy(), domain)


def chebyshev_nodes(n: int, domain: Interval) -> np.ndarray:
    """n+1 Chebyshev points of the second kind, increasing over the domain."""
    if n == 0:
        return np.array([domain.mid])
    j = np.arange(n + 1)
    # sin form keeps the set exactly symmetric about the midpoint
    t = np.sin(np.pi * (2.0 * j - n) / (2.0 * n))
    return domain.mid + 0.5 * domain.width * t


def interpolate(f, n: int, domain: Interval) -> ChebPoly:
    """Degree-n interpolant of f at Chebyshev points of the second kind."""
    xs = chebyshev_nodes(n, domain)
    fx = np.asarray(f(xs), dtype=np.float64)
    if fx.shape != xs.shape:
        fx = np.broadcast_to(fx, xs.shape).astype(np.float64)
    if not np.all(np.isfinite(fx)):
        raise ValueError("non-finite function value at an interpolation node")
    if n == 0:
        return ChebPoly(fx.copy(), domain)
    j = np.arange(n + 1)
    t = np.sin(np.pi * (2.0 * j - n) / (2.0 * n))
    theta = np.arccos(np.clip(t, -1.0, 1.0))
    # c_k = (2/n) * sum'' f(x_j) cos(k theta_j), first/last terms halved
    w = np.ones(n + 1)
    w[0] = 0.5
    w[-1] = 0.5
    k = j[:, None]
    cosmat = np.cos(k * theta[None, :])
    c = (2.0 / n) * (cosmat @ (w * fx))
    c[0] *= 0.5
    c[-1] *= 0.5
    return ChebPoly(c, domain)


def rebase(p: ChebPoly, domain: Interval) -> ChebPoly:
    """Re-express p on a sub-domain (exact up to rounding)."""
    return interpolate(p.eval, p.degree, domain)


def colleague_matrix(coeffs: np.ndarray) -> np.ndarray:
    """Colleague matrix whose eigenvalues are the roots of sum c_k T_k(t)."""
    c = np.asarray(coeffs, dtype=np.float64)
    n = c.size - 1
    if n < 1:
        raise ValueError("need degree >= 1")
    A = np.zeros((n, n))
    if n == 1:
        A[0, 0] = -c[0] / c[1]
        return A
    A[0, 1] = 1.0
    for i in range(1, n - 1):
        A[i, i - 1] = 0.5
        A[i, i + 1] = 0.5
    A[n - 1, n - 2] = 0.5
    A[n - 1, :] -= 0.5 * c[:n] / c[n]
    return A


def _trim(coeffs: np.ndarray, rel: float = 1e-14) -> np.ndarray:
    """Drop trailing coefficients that are numerically zero."""
    c = np.asarray(coeffs, dtype=np.float64)
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return c[:1]
    keep = c.size
    while keep > 1 and abs(c[keep - 1]) <= rel * scale:
        keep -= 1
    return c[:keep]


def real_roots(p: ChebPoly, imag_tol: float = 1e-9) -> np.ndarray:
    """Real roots of p inside its domain (domain coordinates)."""
    c = _trim(p.coeffs)
    if c.size <= 1:
        return np.array([])
    try:
        eig = scipy.linalg.eigvals(colleague_matrix(c))
    except Exception as exc:  # pragma: no cover - rare LAPACK failure
        raise ExtremaError(f"colleague eigenvalue computation failed: {exc}") from exc
    if not np.all(np.isfinite(eig.real)):
        raise ExtremaError("colleague eigenvalues did not converge")
    real = eig[np.abs(eig.imag) <= imag_tol].real
    real = real[(real >= -1.0 - 1e-9) & (real <= 1.0 + 1e-9)]
    real = np.clip(real, -1.0, 1.0)
    return np.sort(p.from_t(real))


def extrema(p: ChebPoly, interval: Interval, clamp_slack: float = 1e-12):
    """Critical points of p inside the interval plus its endpoints.

    Returns a list of (x, p(x)) pairs; the max/min over the returned points
    equals the max/min of p over the interval.  Raises ExtremaError when the
    eigenvalue solver fails, so callers can fall back explicitly.
    """
    if not p.domain.contains_interval(interval, slack=1e-9 * max(1.0, abs(p.domain.lo), abs(p.domain.hi))):
        raise ValueError("interval must lie within the polynomial domain")
    pts = [interval.lo, interval.hi]
    if p.degree >= 2:
        crit = real_roots(p.derivative())
        lo = interval.lo - clamp_slack * max(1.0, abs(interval.lo))
        hi = interval.hi + clamp_slack * max(1.0, abs(interval.hi))
        for x in crit:
            if lo <= x <= hi:
                pts.append(min(max(x, interval.lo), interval.hi))
    xs = np.array(sorted(set(pts)))
    vals = p.eval(xs)
    vals = np.atleast_1d(vals)
    return list(zip(xs.tolist(), vals.tolist()))


def max_abs_on(p: ChebPoly, interval: Interval) -> float:
    """Certified sup |p| over the interval via extrema."""
    return max(abs(v) for _, v in extrema(p, interval))


def range_enclosure(p: ChebPoly, interval: Interval) -> Interval:
    """Guaranteed enclosure of p over the interval (interval Clenshaw)."""
    lo, hi = range_enclosure_many(p.coeffs[None, :], p.domain,
                                  np.array([interval.lo]), np.array([interval.hi]))
    return Interval(float(lo[0]), float(hi[0]))


def range_enclosure_many(coeffs: np.ndarray, domain: Interval,
                         xlo: np.ndarray, xhi: np.ndarray):
    """Vectorized interval Clenshaw.

    coeffs has shape (m, d+1) or (d+1,) broadcast across the m query
    intervals [xlo_i, xhi_i].  Returns (lo, hi) arrays of shape (m,).
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.float64))
    m = max(coeffs.shape[0], xlo.size)
    a, b = domain.lo, domain.hi
    if b > a:
        tlo = widen_down((2.0 * xlo - a - b) / (b - a))
        thi = widen_up((2.0 * xhi - a - b) / (b - a))
    else:
        tlo = np.zeros_like(xlo)
        thi = np.zeros_like(xhi)
    t2lo, t2hi = iscale(tlo, thi, 2.0)
    b1lo = np.zeros(m)
    b1hi = np.zeros(m)
    b2lo = np.zeros(m)
    b2hi = np.zeros(m)
    d = coeffs.shape[1]
    for k in range(d - 1, 0, -1):
        ck = np.broadcast_to(coeffs[:, k], (m,)) if coeffs.shape[0] > 1 else coeffs[0, k]
        plo, phi = imul(t2lo, t2hi, b1lo, b1hi)
        nlo, nhi = isub(plo, phi, b2lo, b2hi)
        nlo, nhi = iadd(nlo, nhi, ck, ck)
        b2lo, b2hi = b1lo, b1hi
        b1lo, b1hi = nlo, nhi
    c0 = np.broadcast_to(coeffs[:, 0], (m,)) if coeffs.shape[0] > 1 else coeffs[0, 0]
    plo, phi = imul(tlo, thi, b1lo, b1hi)
    outlo, outhi = isub(plo, phi, b2lo, b2hi)
    outlo, outhi = iadd(outlo, outhi, c0, c0)
    return outlo, outhi


def eval_many(coeffs: np.ndarray, domains: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate row i of `coeffs` (domain row i of `domains`) at x[..., i].

    coeffs: (m, d+1); domains: (m, 2); x: (..., m).  Used for batched
    per-neuron polynomial layers.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    a = domains[:, 0]
    b = domains[:, 1]
    span = np.where(b > a, b - a, 1.0)
    t = (2.0 * x - a - b) / span
    b1 = np.zeros_like(t)
    b2 = np.zeros_like(t)
    # out-of-range arguments legitimately blow up to inf; keep that silent
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(coeffs.shape[1] - 1, 0, -1):
            b1, b2 = coeffs[:, k] + 2.0 * t * b1 - b2, b1
        return coeffs[:, 0] + t * b1 - b2
