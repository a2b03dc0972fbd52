"""Activation functions with asymptote, monotonicity, and curvature metadata.

Each supported activation approaches a linear asymptote on both tails and the
deviation from the asymptote is monotone beyond a known cutoff.  That
structure is what the surrogate builder and the relaxation machinery rely on,
so the metadata lives here next to the function definitions:

* ``asymptotes``       -- (a1, b1, a2, b2): left tail slope/intercept then
                          right tail slope/intercept.
* ``monotone_cutoffs`` -- (c1, c2): sigma - asymptote is monotone on
                          (-inf, c1] and [c2, inf).
* ``curvature_breakpoints`` -- zeros of the second derivative; the first
                          derivative is monotone between consecutive ones.
* ``interior_argmin``  -- location of the single interior minimum, if any.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, ndtr

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

SUPPORTED_KINDS = ("relu", "leaky_relu", "sigmoid", "tanh", "gelu", "silu", "elu")


def _phi(x):
    """Standard normal density."""
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def _gelu_deriv(x):
    return ndtr(x) + x * _phi(x)


def _silu_deriv(x):
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


# Location of the interior minimum of gelu / silu and of the curvature sign
# change of silu.  Solved once at import; both functions are smooth and the
# brackets are safe.
GELU_ARGMIN = brentq(_gelu_deriv, -2.0, -0.1, xtol=1e-15)
SILU_ARGMIN = brentq(_silu_deriv, -3.0, -0.5, xtol=1e-15)
SILU_CURVE_BREAK = brentq(
    lambda x: 2.0 + x * (1.0 - 2.0 * expit(x)), 1.0, 4.0, xtol=1e-15
)


@dataclass(frozen=True)
class Activation:
    """A supported scalar activation, vectorized over numpy arrays."""

    kind: str
    alpha: float = field(default=1.0)

    def __post_init__(self):
        if self.kind not in SUPPORTED_KINDS:
            raise ValueError(f"unsupported activation kind: {self.kind!r}")
        if self.kind == "leaky_relu" and not (0.0 < self.alpha < 1.0):
            raise ValueError("leaky_relu negative slope must be in (0, 1)")
        if self.kind == "elu" and self.alpha <= 0.0:
            raise ValueError("elu alpha must be positive")

    # -- evaluation -------------------------------------------------------

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        k = self.kind
        if k == "relu":
            return np.maximum(x, 0.0)
        if k == "leaky_relu":
            return np.where(x >= 0.0, x, self.alpha * x)
        if k == "sigmoid":
            return expit(x)
        if k == "tanh":
            return np.tanh(x)
        if k == "gelu":
            return x * ndtr(x)
        if k == "silu":
            return x * expit(x)
        # elu
        return np.where(x >= 0.0, x, self.alpha * np.expm1(np.minimum(x, 0.0)))

    def deriv(self, x):
        x = np.asarray(x, dtype=np.float64)
        k = self.kind
        if k == "relu":
            return (x > 0.0).astype(np.float64)
        if k == "leaky_relu":
            return np.where(x > 0.0, 1.0, self.alpha)
        if k == "sigmoid":
            s = expit(x)
            return s * (1.0 - s)
        if k == "tanh":
            t = np.tanh(x)
            return 1.0 - t * t
        if k == "gelu":
            return _gelu_deriv(x)
        if k == "silu":
            return _silu_deriv(x)
        return np.where(x > 0.0, 1.0, self.alpha * np.exp(np.minimum(x, 0.0)))

    # -- tail structure ---------------------------------------------------

    @property
    def asymptotes(self) -> tuple[float, float, float, float]:
        """(a1, b1, a2, b2): left asymptote then right asymptote."""
        k = self.kind
        if k == "relu":
            return (0.0, 0.0, 1.0, 0.0)
        if k == "leaky_relu":
            return (self.alpha, 0.0, 1.0, 0.0)
        if k == "sigmoid":
            return (0.0, 0.0, 0.0, 1.0)
        if k == "tanh":
            return (0.0, -1.0, 0.0, 1.0)
        if k in ("gelu", "silu"):
            return (0.0, 0.0, 1.0, 0.0)
        # elu
        return (0.0, -self.alpha, 1.0, 0.0)

    @property
    def monotone_cutoffs(self) -> tuple[float, float]:
        k = self.kind
        if k in ("relu", "leaky_relu", "sigmoid", "tanh", "elu"):
            return (0.0, 0.0)
        if k == "gelu":
            return (GELU_ARGMIN, -GELU_ARGMIN)
        return (SILU_ARGMIN, -SILU_ARGMIN)

    @property
    def exact_tails(self) -> bool:
        """True when the asymptotes match the function exactly beyond 0."""
        return self.kind in ("relu", "leaky_relu")

    @property
    def curvature_breakpoints(self) -> tuple[float, ...]:
        k = self.kind
        if k == "gelu":
            return (-_SQRT2, _SQRT2)
        if k == "silu":
            return (-SILU_CURVE_BREAK, SILU_CURVE_BREAK)
        return (0.0,)

    @property
    def interior_argmin(self) -> float | None:
        if self.kind == "gelu":
            return GELU_ARGMIN
        if self.kind == "silu":
            return SILU_ARGMIN
        return None

    def tail_error(self, x, side: str):
        """|sigma(x) - asymptote(x)| evaluated without cancellation.

        ``side`` is "left" or "right"; callers are responsible for only asking
        on the matching tail (x <= c1 resp. x >= c2).
        """
        x = np.asarray(x, dtype=np.float64)
        k = self.kind
        if k in ("relu", "leaky_relu"):
            return np.zeros_like(x)
        if k == "sigmoid":
            return expit(x) if side == "left" else expit(-x)
        if k == "tanh":
            # |tanh(x) + 1| = 2*sigmoid(2x); |tanh(x) - 1| = 2*sigmoid(-2x)
            return 2.0 * expit(2.0 * x) if side == "left" else 2.0 * expit(-2.0 * x)
        if k == "gelu":
            return np.abs(x) * (ndtr(x) if side == "left" else ndtr(-x))
        if k == "silu":
            return np.abs(x) * (expit(x) if side == "left" else expit(-x))
        # elu: exact on the right, alpha*e^x deviation on the left
        if side == "right":
            return np.zeros_like(x)
        return self.alpha * np.exp(np.minimum(x, 0.0))

    # -- sound ranges -----------------------------------------------------

    def range_on(self, lo: float, hi: float) -> tuple[float, float]:
        """Exact image of [lo, hi] (widened one ulp outward)."""
        if lo > hi:
            raise ValueError("empty interval")
        cands = [lo, hi]
        xm = self.interior_argmin
        if xm is not None and lo < xm < hi:
            cands.append(xm)
        vals = self(np.array(cands))
        vlo, vhi = float(np.min(vals)), float(np.max(vals))
        return np.nextafter(vlo, -np.inf), np.nextafter(vhi, np.inf)

    def deriv_range(self, lo: float, hi: float) -> tuple[float, float]:
        """Sound bounds on sigma'(x) over [lo, hi].

        The derivative is monotone between curvature breakpoints, so the
        extreme values occur at interval endpoints clipped to every curvature
        region.  Kinked activations contribute both one-sided slopes at 0.
        """
        if lo > hi:
            raise ValueError("empty interval")
        if self.kind in ("relu", "leaky_relu"):
            left = 0.0 if self.kind == "relu" else self.alpha
            if hi <= 0.0:
                return (left, left) if hi < 0.0 else (left, 1.0)
            if lo > 0.0:
                return (1.0, 1.0)
            return (left, 1.0)
        cands = [lo, hi]
        for b in self.curvature_breakpoints:
            if lo < b < hi:
                cands.append(b)
        vals = self.deriv(np.array(cands))
        dlo, dhi = float(np.min(vals)), float(np.max(vals))
        return np.nextafter(dlo, -np.inf), np.nextafter(dhi, np.inf)

    def offset_range(self, lo: float, hi: float, slope: float) -> tuple[float, float]:
        """Sound min/max of sigma(x) - slope*x over [lo, hi].

        Critical points solve sigma'(x) = slope; on each curvature region the
        derivative is monotone so there is at most one root, bracketed and
        solved by brentq.  Kinks are added as candidates directly.
        """
        if lo > hi:
            raise ValueError("empty interval")
        cands = [lo, hi]
        if self.kind in ("relu", "leaky_relu", "elu"):
            if lo < 0.0 < hi:
                cands.append(0.0)
            if self.kind == "elu" and lo < 0.0:
                # smooth piece on [lo, min(hi,0)]: solve alpha*e^x = slope
                if slope > 0.0:
                    xs = math.log(slope / self.alpha) if slope / self.alpha > 0 else None
                    if xs is not None and lo < xs < min(hi, 0.0):
                        cands.append(xs)
        else:
            pieces = [lo] + [b for b in self.curvature_breakpoints if lo < b < hi] + [hi]
            for a, b in zip(pieces[:-1], pieces[1:]):
                fa = float(self.deriv(a)) - slope
                fb = float(self.deriv(b)) - slope
                if fa == 0.0:
                    cands.append(a)
                if fb == 0.0:
                    cands.append(b)
                if fa * fb < 0.0:
                    cands.append(brentq(lambda t: float(self.deriv(t)) - slope, a, b, xtol=1e-13))
        xs = np.array(cands)
        vals = self(xs) - slope * xs
        vlo, vhi = float(np.min(vals)), float(np.max(vals))
        pad = 1e-12 * max(1.0, abs(vlo), abs(vhi))
        return vlo - pad, vhi + pad


def relu() -> Activation:
    return Activation("relu")


def leaky_relu(alpha: float = 0.01) -> Activation:
    return Activation("leaky_relu", alpha)


def sigmoid() -> Activation:
    return Activation("sigmoid")


def tanh() -> Activation:
    return Activation("tanh")


def gelu() -> Activation:
    return Activation("gelu")


def silu() -> Activation:
    return Activation("silu")


def elu(alpha: float = 1.0) -> Activation:
    return Activation("elu", alpha)


def activation_from_name(name: str, alpha: float | None = None) -> Activation:
    if name == "leaky_relu":
        return Activation(name, 0.01 if alpha is None else alpha)
    if name == "elu":
        return Activation(name, 1.0 if alpha is None else alpha)
    return Activation(name)
