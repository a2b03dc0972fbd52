"""Certified bounds on the output difference between a network and its
polynomial counterpart.

The difference is propagated as an affine form that shares its noise symbols
with the original network's own affine form; the correlation between the two
is what keeps the bound tight.  At activation layers the bivariate residual
poly(x) - sigma(x - delta) is enclosed by a pair of parallel lines in delta
(identical slope, shifted intercepts) derived from derivative bounds of sigma
plus the certified fit error of the polynomial.
"""

from __future__ import annotations

import math

import numpy as np

from dataclasses import dataclass

from .activations import Activation, gelu as _gelu_act
from .approx import recertify_eps
from .interval import Interval
from .network import (ActivationLayer, Conv2DLayer, DenseLayer, Network,
                      PolyActivationLayer, PolyNetwork, lower_conv_to_dense)
from .ranges import parallel_relaxation

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class DerivativeBounds:
    """d_lo <= sigma'(x) <= d_hi on a stated interval."""

    d_lo: float
    d_hi: float

    def __post_init__(self):
        if self.d_lo > self.d_hi:
            raise ValueError("derivative bounds out of order")


def gelu_derivative_bounds(l: float, u: float) -> DerivativeBounds:
    """Min/max of gelu' over [l, u].

    gelu' is monotone on each curvature region (decreasing, increasing,
    decreasing, split at +-sqrt2), so evaluating at the region-clipped
    endpoints is exact.
    """
    if l > u:
        raise ValueError("need l <= u")
    g = _gelu_act()
    cands = [l, u]
    for b in (-_SQRT2, _SQRT2):
        if l < b < u:
            cands.append(b)
    vals = g.deriv(np.array(cands))
    return DerivativeBounds(float(np.min(vals)) - 1e-12, float(np.max(vals)) + 1e-12)


def derivative_bounds(act: Activation, l: float, u: float) -> DerivativeBounds:
    if act.kind == "gelu":
        return gelu_derivative_bounds(l, u)
    dlo, dhi = act.deriv_range(l, u)
    return DerivativeBounds(float(dlo), float(dhi))


def diff_relaxation(bounds, db: DerivativeBounds, eps: float):
    """Parallel linear enclosure of poly(x) - sigma(x - delta).

    bounds = (l_x, u_x, l_y, u_y, l_d, u_d) with x the polynomial-side
    pre-activation, y = x - delta the original-side one, and delta their
    difference.  Requires db valid on [min(l_x, l_y), max(u_x, u_y)] and
    eps >= sup |poly - sigma| on [l_x, u_x].  Returns (alpha, beta_l, beta_u)
    such that

        alpha*delta + beta_l - eps <= poly(x) - sigma(x - delta)
                                   <= alpha*delta + beta_u + eps.

    The slope is the mean of the non-parallel lower/upper slopes; the
    intercepts absorb the worst-case gap over the delta interval.  When the
    delta interval has a definite sign the hat offsets vanish and no division
    by the interval width occurs.
    """
    l_x, u_x, l_y, u_y, l_d, u_d = bounds
    if l_d > u_d:
        raise ValueError("difference bounds out of order")
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    dl, du = db.d_lo, db.d_hi
    if l_d >= 0.0:
        a_l, a_u = dl, du
        bhat_l = bhat_u = 0.0
    elif u_d <= 0.0:
        a_l, a_u = du, dl
        bhat_l = bhat_u = 0.0
    else:
        span = u_d - l_d
        a_l = (dl * u_d - du * l_d) / span
        a_u = (du * u_d - dl * l_d) / span
        bhat_l = (du - dl) * l_d * u_d / span
        bhat_u = -bhat_l
    alpha = 0.5 * (a_l + a_u)
    lam_l = alpha - a_l
    lam_u = alpha - a_u
    beta_l = lam_l * l_d + bhat_l if lam_l >= 0.0 else lam_l * u_d + bhat_l
    beta_u = lam_u * l_d + bhat_u if lam_u <= 0.0 else lam_u * u_d + bhat_u
    return alpha, beta_l, beta_u


class DiffState:
    """Affine forms over one shared noise-symbol space.

    y_c/y_G carry the original network's values; d_c/d_G carry the
    difference polynomial-minus-original.  Sharing columns is what preserves
    the correlation between the two when linear layers mix neurons.
    """

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        n = lo.size
        r = 0.5 * (hi - lo)
        self.y_c = 0.5 * (lo + hi)
        self.y_G = np.diag(r)
        self.d_c = np.zeros(n)
        self.d_G = np.zeros((n, n))

    @staticmethod
    def _concretize(c: np.ndarray, G: np.ndarray):
        rad = np.sum(np.abs(G), axis=1)
        pad = 1e-13 + 1e-12 * np.maximum(1.0, np.abs(c) + rad)
        return c - rad - pad, c + rad + pad

    def y_bounds(self):
        return self._concretize(self.y_c, self.y_G)

    def d_bounds(self):
        return self._concretize(self.d_c, self.d_G)

    def x_bounds(self):
        """Bounds on y + delta (the polynomial-side values)."""
        return self._concretize(self.y_c + self.d_c, self.y_G + self.d_G)

    def append_noise(self, y_rad: np.ndarray, d_rad: np.ndarray):
        keep = (np.abs(y_rad) > 0.0) | (np.abs(d_rad) > 0.0)
        if not np.any(keep):
            return
        self.y_G = np.hstack([self.y_G, np.diag(y_rad)[:, keep]])
        self.d_G = np.hstack([self.d_G, np.diag(d_rad)[:, keep]])


def linear_diff_step(W1: np.ndarray, b1: np.ndarray, W2: np.ndarray,
                     b2: np.ndarray, state: DiffState) -> DiffState:
    """General difference recurrence through a pair of linear layers.

    Here the state's difference form is net1 - net2 and its carrier form
    holds net1's values; the new pre-activation difference is

        (W1 - W2) @ y2 + W1 @ delta + (b1 - b2),   y2 = y1 - delta.

    With shared weights this collapses to W @ delta, which is how the
    certified pipeline uses it (there net1 is the polynomial network, net2
    the original, and the sign convention is immaterial).
    """
    W1 = np.asarray(W1, dtype=np.float64)
    W2 = np.asarray(W2, dtype=np.float64)
    b1 = np.asarray(b1, dtype=np.float64)
    b2 = np.asarray(b2, dtype=np.float64)
    if W1.shape != W2.shape or b1.shape != b2.shape or W1.shape[0] != b1.shape[0]:
        raise ValueError("mismatched linear layer shapes")
    dW = W1 - W2
    y2_c = state.y_c - state.d_c
    y2_G = state.y_G - state.d_G
    new = DiffState.__new__(DiffState)
    new.d_c = dW @ y2_c + W1 @ state.d_c + (b1 - b2)
    new.d_G = dW @ y2_G + W1 @ state.d_G
    new.y_c = W1 @ state.y_c + b1
    new.y_G = W1 @ state.y_G
    return new


def _activation_diff_step(act: Activation, layer: PolyActivationLayer,
                          designed_lo, designed_hi, eps_vec, state: DiffState,
                          intersect: bool, recertify: bool) -> DiffState:
    l_y, u_y = state.y_bounds()
    l_x, u_x = state.x_bounds()
    if intersect and designed_lo is not None:
        l_x = np.maximum(l_x, designed_lo)
        u_x = np.minimum(u_x, designed_hi)
        l_x, u_x = np.minimum(l_x, u_x), np.maximum(l_x, u_x)
    l_d, u_d = state.d_bounds()
    n = state.y_c.size
    new = DiffState.__new__(DiffState)
    new.y_c = np.empty(n)
    new.y_G = np.empty_like(state.y_G)
    new.d_c = np.empty(n)
    new.d_G = np.empty_like(state.d_G)
    y_rad = np.empty(n)
    d_rad = np.empty(n)
    for j in range(n):
        cap = layer.poly_for(j)
        eps = float(eps_vec[j])
        xiv = Interval(float(l_x[j]), float(u_x[j]))
        if recertify and not cap.pi.domain.contains_interval(xiv, slack=1e-12):
            eps = float(recertify_eps(cap, xiv))
        db = derivative_bounds(act, float(min(l_x[j], l_y[j])),
                               float(max(u_x[j], u_y[j])))
        alpha, beta_l, beta_u = diff_relaxation(
            (float(l_x[j]), float(u_x[j]), float(l_y[j]), float(u_y[j]),
             float(l_d[j]), float(u_d[j])), db, eps)
        new.d_c[j] = alpha * state.d_c[j] + 0.5 * (beta_l + beta_u)
        new.d_G[j] = alpha * state.d_G[j]
        d_rad[j] = 0.5 * (beta_u - beta_l) + eps
        slope, off_lo, off_hi = parallel_relaxation(act, float(l_y[j]), float(u_y[j]))
        new.y_c[j] = slope * state.y_c[j] + 0.5 * (off_lo + off_hi)
        new.y_G[j] = slope * state.y_G[j]
        y_rad[j] = 0.5 * (off_hi - off_lo)
    new.append_noise(y_rad, d_rad)
    return new


def _as_dense(layer):
    if isinstance(layer, DenseLayer):
        return layer.W, layer.b
    d = lower_conv_to_dense(layer)
    return d.W, d.b


def diff_bound(net: Network, pnet: PolyNetwork, intersect: bool = True,
               recertify: bool = True):
    """Certified per-output interval on f_poly(x) - f(x) over the input box.

    Soundness of the designed-range intersection assumes the polynomial
    network was built with certified ranges; pass intersect=False for
    sampling-designed networks.
    """
    if len(net.layers) != len(pnet.layers):
        raise ValueError("architecture mismatch")
    state = DiffState(net.input_lo, net.input_hi)
    last_linear = None
    for i, (lf, lp) in enumerate(zip(net.layers, pnet.layers)):
        if isinstance(lf, (DenseLayer, Conv2DLayer)):
            if type(lf) is not type(lp):
                raise ValueError(f"layer {i} types differ")
            Wf, bf = _as_dense(lf)
            Wp, bp = _as_dense(lp)
            if Wf.shape != Wp.shape or not (np.array_equal(Wf, Wp)
                                            and np.array_equal(bf, bp)):
                raise ValueError(f"layer {i}: weights must be shared")
            # shared weights: difference and carrier transform independently
            new = DiffState.__new__(DiffState)
            new.y_c = Wf @ state.y_c + bf
            new.y_G = Wf @ state.y_G
            new.d_c = Wf @ state.d_c
            new.d_G = Wf @ state.d_G
            state = new
            last_linear = i
        elif isinstance(lf, ActivationLayer):
            if not isinstance(lp, PolyActivationLayer):
                raise ValueError(f"layer {i}: expected polynomial layer in pnet")
            state = _activation_diff_step(
                lf.act, lp, pnet.designed_lo.get(last_linear),
                pnet.designed_hi.get(last_linear), pnet.eps[last_linear],
                state, intersect, recertify)
        else:
            raise ValueError(f"unsupported layer pairing at {i}")
    return state.d_bounds()
