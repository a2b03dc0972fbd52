"""Certified polynomial activation fitting.

fit_activation runs the minimax exchange against a certified piecewise
surrogate of the activation and certifies the residual |pi - q| through
polynomial extrema on every surrogate segment, so the published bound
eps_total = eps_pi + eps_q holds for the activation itself by the triangle
inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .activations import Activation
from .cheb import ChebPoly, extrema, rebase
from .interval import Interval
from .remez import remez
from .surrogate import PiecewiseSurrogate, get_surrogate

# relative + absolute slack added to certified suprema to absorb rounding
_PAD_REL = 1e-10
_PAD_ABS = 1e-14


@dataclass(frozen=True)
class CertifiedActivationPoly:
    """A polynomial pi with |pi(x) - sigma(x)| <= eps_total on pi.domain."""

    activation: Activation
    pi: ChebPoly
    eps_pi: float
    eps_q: float
    eps_q_target: float = 1e-10
    piece_degree: int = 15

    @property
    def eps_total(self) -> float:
        return self.eps_pi + self.eps_q


def _line_as_cheb(slope: float, intercept: float, dom: Interval) -> np.ndarray:
    c0 = slope * dom.mid + intercept
    c1 = slope * 0.5 * dom.width
    return np.array([c0, c1])


def certify_pi_error(pi: ChebPoly, q: PiecewiseSurrogate, interval: Interval) -> float:
    """Certified sup |pi - q| over the interval.

    Each surrogate segment contributes the extrema of the polynomial
    difference pi - q_segment (both re-expressed on the segment), so the whole
    computation reduces to one colleague eigenvalue problem per segment.
    """
    worst = 0.0
    for seg, kind, payload in q.segments(interval):
        if seg.width == 0.0 and kind == "line":
            continue
        base = rebase(pi, seg) if seg.width > 0.0 else ChebPoly(
            np.array([pi.eval(seg.lo)]), seg)
        coeffs = base.coeffs.copy()
        if kind == "line":
            lin = _line_as_cheb(payload[0], payload[1], seg)
            coeffs[:1] -= lin[:1]
            if coeffs.size > 1:
                coeffs[1] -= lin[1]
            else:
                coeffs = np.array([coeffs[0], -lin[1]])
        else:
            pc = rebase(payload, seg).coeffs
            n = max(coeffs.size, pc.size)
            padded = np.zeros(n)
            padded[: coeffs.size] = coeffs
            padded[: pc.size] -= pc
            coeffs = padded
        diff = ChebPoly(coeffs, seg)
        worst = max(worst, max(abs(v) for _, v in extrema(diff, seg)))
    return worst * (1.0 + _PAD_REL) + _PAD_ABS


def fit_activation(act: Activation, interval: Interval, degree: int,
                   eps_q_target: float = 1e-10,
                   piece_degree: int = 15,
                   cache_dir: str | None = None) -> CertifiedActivationPoly:
    """Minimax fit of the activation on the interval with a certified bound."""
    if degree < 1:
        raise ValueError("degree must be >= 1")
    q = get_surrogate(act, eps_q_target, piece_degree, cache_dir)
    if interval.width == 0.0:
        pi = ChebPoly(np.array([float(act(interval.lo))]), interval)
        return CertifiedActivationPoly(act, pi, _PAD_ABS, q.eps_q,
                                       eps_q_target, piece_degree)
    pi, _cert = remez(q.eval, degree, interval)
    eps_pi = certify_pi_error(pi, q, interval)
    return CertifiedActivationPoly(act, pi, eps_pi, q.eps_q,
                                   eps_q_target, piece_degree)


def convergence_bound(kind: str, n: int, *, nu: int | None = None,
                      V: float | None = None, M: float | None = None,
                      rho: float | None = None) -> float:
    """A priori sup-error bounds for degree-n Chebyshev approximations.

    kind "differentiable": 4V / (pi * nu * (n - nu)^nu), valid for n > nu
    where V is the total variation of the nu-th derivative.
    kind "analytic": 4 M rho^-n / (rho - 1) for functions analytic inside the
    Bernstein ellipse with parameter rho > 1 and bounded there by M.
    """
    if kind == "differentiable":
        if nu is None or V is None:
            raise ValueError("differentiable bound needs nu and V")
        if not (n > nu) or V <= 0 or nu < 1:
            raise ValueError("need n > nu >= 1 and V > 0")
        return 4.0 * V / (math.pi * nu * (n - nu) ** nu)
    if kind == "analytic":
        if M is None or rho is None:
            raise ValueError("analytic bound needs M and rho")
        if rho <= 1.0 or M <= 0:
            raise ValueError("need rho > 1 and M > 0")
        return 4.0 * M * rho ** (-n) / (rho - 1.0)
    raise ValueError(f"unknown bound kind {kind!r}")


def total_variation(f, interval: Interval,
                    monotone_splits: tuple[float, ...] | None = None) -> float:
    """Total variation via the monotone-piece formula sum |f(t_{i+1}) - f(t_i)|.

    Activations carry their own interior extremum; for other callables the
    split points between monotone pieces must be supplied.
    """
    if isinstance(f, Activation):
        xm = f.interior_argmin
        splits = () if xm is None else (xm,)
    elif monotone_splits is not None:
        splits = monotone_splits
    else:
        raise ValueError("monotone-piece structure unknown; pass monotone_splits")
    pts = [interval.lo] + [s for s in splits if interval.lo < s < interval.hi] + [interval.hi]
    vals = [float(f(np.asarray(p))) for p in pts]
    return float(sum(abs(b - a) for a, b in zip(vals[:-1], vals[1:])))


def interior_minimum(act: Activation, interval: Interval) -> float | None:
    """Location of the interior minimum of the activation, if inside."""
    xm = act.interior_argmin
    if xm is not None and interval.lo < xm < interval.hi:
        return xm
    return None


def recertify_eps(cap: CertifiedActivationPoly, interval: Interval,
                  cache_dir: str | None = None) -> float:
    """Certified |pi - sigma| bound on an interval beyond the fit domain.

    When later analyses derive wider pre-activation ranges than the one the
    polynomial was designed on, the error bound is re-established on the hull
    of both intervals against the same surrogate.
    """
    if cap.pi.domain.contains_interval(interval):
        return cap.eps_total
    q = get_surrogate(cap.activation, cap.eps_q_target, cap.piece_degree,
                      cache_dir)
    hull = cap.pi.domain.hull(interval)
    return certify_pi_error(cap.pi, q, hull) + cap.eps_q
