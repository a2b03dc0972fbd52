"""Sound pre-activation range computation and the certification driver.

Two abstract domains are provided: plain intervals and zonotopes run as a
reduced product with intervals (each activation step intersects the zonotope
concretization with the interval image, so zonotope bounds are never looser).
Polynomial substitutions enter the analysis as fresh additive noise terms
bounded by the certified fit error, which is exactly what makes the
single-pass construction sound: every later layer is bounded over all inputs
and all admissible substitution errors of the earlier layers.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .activations import Activation, gelu as _gelu_act
from .approx import CertifiedActivationPoly, fit_activation
from .interval import Interval
from .network import (ActivationLayer, Conv2DLayer, Dataset, DenseLayer,
                      Network, PolyActivationLayer, PolyNetwork,
                      forward_many, lower_conv_to_dense)

_SQRT2 = math.sqrt(2.0)
# outward padding applied to every activation relaxation offset
_PAD_REL = 1e-12
_PAD_ABS = 1e-13


class CertificationError(RuntimeError):
    """A per-neuron polynomial fit failed during network certification."""


@dataclass(frozen=True)
class BoundsReport:
    """Per linear-layer pre-activation bounds, tagged with their provenance."""

    method: str  # "interval" | "zonotope" | "sampled"
    lo: dict
    hi: dict
    widen: float | None = None
    diff_lo: np.ndarray | None = None
    diff_hi: np.ndarray | None = None

    def layer_bounds(self, idx: int):
        return self.lo[idx], self.hi[idx]

    def layers(self):
        return sorted(self.lo.keys())


@dataclass(frozen=True)
class RelaxedNetwork:
    """A network augmented with additive substitution-error inputs.

    delta maps the index of a linear layer to the per-neuron error radius of
    the polynomial that replaced the downstream activation.
    """

    base: Network
    delta: dict = field(default_factory=dict)

    def __post_init__(self):
        linear = set(self.base.linear_indices())
        for idx, eps in self.delta.items():
            if idx not in linear:
                raise ValueError(f"delta bound attached to non-linear layer {idx}")
            if np.any(np.asarray(eps) < 0.0):
                raise ValueError("delta bounds must be nonnegative")


# -- sampling-based baselines ------------------------------------------------

def sampled_ranges(net: Network, data: Dataset, widen: float = 1.0) -> BoundsReport:
    """Empirical pre-activation ranges, widened about interval midpoints."""
    if len(data) == 0:
        raise ValueError("dataset is empty")
    if widen < 1.0:
        raise ValueError("widen factor must be >= 1")
    pre, _ = forward_many(net, data.rows)
    lo = {}
    hi = {}
    for idx, vals in pre.items():
        vmin = np.min(vals, axis=0)
        vmax = np.max(vals, axis=0)
        mid = 0.5 * (vmin + vmax)
        half = 0.5 * (vmax - vmin) * widen
        lo[idx] = mid - half
        hi[idx] = mid + half
    return BoundsReport("sampled", lo, hi, widen=widen)


def constant_ranges(net: Network, c: float) -> BoundsReport:
    """The fixed [-c, c] baseline; c is a caller-supplied knob."""
    if c <= 0.0:
        raise ValueError("constant range bound must be positive")
    lo = {}
    hi = {}
    for idx in net.linear_indices():
        width = net.width_after(idx)
        lo[idx] = np.full(width, -c)
        hi[idx] = np.full(width, c)
    return BoundsReport("sampled", lo, hi, widen=None)


# -- linear relaxations -------------------------------------------------------

@dataclass(frozen=True)
class GeluRelaxation:
    """Sound linear bounds a*x + b on gelu over an interval."""

    lower: tuple[float, float]
    upper: tuple[float, float]
    case: str


def _sound_lines(act: Activation, l: float, u: float, slope_lo: float,
                 slope_up: float, case: str) -> GeluRelaxation:
    mlo_l, _ = act.offset_range(l, u, slope_lo)
    _, mhi_u = act.offset_range(l, u, slope_up)
    pad = _PAD_ABS + _PAD_REL * max(abs(mlo_l), abs(mhi_u), 1.0)
    return GeluRelaxation((slope_lo, mlo_l - pad), (slope_up, mhi_u + pad), case)


def gelu_relaxation(l: float, u: float) -> GeluRelaxation:
    """Case analysis on the curvature of gelu over [l, u].

    gelu is concave on (-inf, -sqrt2], convex on [-sqrt2, sqrt2], and concave
    on [sqrt2, inf).  Secants bound from the convex side; tangents (taken at
    the clamped interval midpoint) from the other.  Both returned lines are
    re-anchored against the verified extrema of gelu(x) - a*x, so they are
    sound even when the tangent point had to be clamped.
    """
    if l > u:
        raise ValueError("need l <= u")
    g = _gelu_act()
    if l == u:
        s = float(g.deriv(l))
        b = float(g(l)) - s * l
        return GeluRelaxation((s, b), (s, b), "degenerate")
    sec = (float(g(u)) - float(g(l))) / (u - l)
    mid = 0.5 * (l + u)

    def tang(point):
        return float(g.deriv(point))

    if u <= -_SQRT2:
        return _sound_lines(g, l, u, sec, tang(mid), "concave left")
    if u <= _SQRT2:
        if l >= -_SQRT2:
            return _sound_lines(g, l, u, tang(mid), sec, "convex middle")
        if tang(l) <= sec:
            return _sound_lines(g, l, u, tang(np.clip(mid, -_SQRT2, u)), sec,
                                "non-convex middle increasing")
        if tang(u) <= sec:
            return _sound_lines(g, l, u, sec, tang(np.clip(mid, l, -_SQRT2)),
                                "non-convex middle decreasing II")
        return _sound_lines(g, l, u, tang(np.clip(mid, -_SQRT2, u)),
                            tang(np.clip(mid, l, -_SQRT2)),
                            "non-convex middle decreasing I")
    if l >= _SQRT2:
        return _sound_lines(g, l, u, sec, tang(mid), "concave right")
    if tang(u) >= sec:
        return _sound_lines(g, l, u,
                            tang(np.clip(mid, max(l, -_SQRT2), min(u, _SQRT2))),
                            sec, "outer")
    if tang(l) >= sec:
        return _sound_lines(g, l, u, sec, tang(np.clip(mid, _SQRT2, u)),
                            "non-convex positive II")
    return _sound_lines(g, l, u,
                        tang(np.clip(mid, max(l, -_SQRT2), min(u, _SQRT2))),
                        tang(np.clip(mid, _SQRT2, u)), "non-convex positive I")


def parallel_relaxation(act: Activation, l: float, u: float):
    """(slope, off_lo, off_hi) with slope*x + off_lo <= act(x) <= slope*x + off_hi.

    The slope comes from the gelu case tree for gelu and from the secant for
    the other activations (the secant slope always lies inside the derivative
    range); the offsets are verified extrema of act(x) - slope*x.
    """
    if l == u:
        v = float(act(l))
        s = float(act.deriv(l))
        return s, v - s * l, v - s * l
    if act.kind == "gelu":
        rel = gelu_relaxation(l, u)
        slope = 0.5 * (rel.lower[0] + rel.upper[0])
    else:
        slope = (float(act(u)) - float(act(l))) / (u - l)
    off_lo, off_hi = act.offset_range(l, u, slope)
    pad = _PAD_ABS + _PAD_REL * max(abs(off_lo), abs(off_hi), 1.0)
    return slope, off_lo - pad, off_hi + pad


def _image_bounds(act: Activation, lo: np.ndarray, hi: np.ndarray):
    """Vectorized exact image of per-neuron intervals under the activation."""
    vlo = np.minimum(act(lo), act(hi))
    vhi = np.maximum(act(lo), act(hi))
    xm = act.interior_argmin
    if xm is not None:
        inside = (lo < xm) & (xm < hi)
        if np.any(inside):
            vlo = np.where(inside, np.minimum(vlo, float(act(xm))), vlo)
    pad = _PAD_ABS + _PAD_REL * np.maximum(1.0, np.maximum(np.abs(vlo), np.abs(vhi)))
    return vlo - pad, vhi + pad


# -- abstract propagation -----------------------------------------------------

class _Zonotope:
    """center + G @ noise for noise in [-1, 1]^g."""

    __slots__ = ("center", "G")

    def __init__(self, center: np.ndarray, G: np.ndarray):
        self.center = center
        self.G = G

    def affine(self, W: np.ndarray, b: np.ndarray) -> "_Zonotope":
        return _Zonotope(W @ self.center + b, W @ self.G)

    def concretize(self):
        rad = np.sum(np.abs(self.G), axis=1) if self.G.size else np.zeros_like(self.center)
        return self.center - rad, self.center + rad

    def scale_shift(self, slope: np.ndarray, shift: np.ndarray,
                    new_radius: np.ndarray) -> "_Zonotope":
        G = self.G * slope[:, None]
        extra = np.diag(new_radius)
        keep = np.abs(new_radius) > 0.0
        return _Zonotope(self.center * slope + shift,
                         np.hstack([G, extra[:, keep]]))

    def reduce_order(self, max_cols: int) -> "_Zonotope":
        if self.G.shape[1] <= max_cols:
            return self
        norms = np.sum(np.abs(self.G), axis=0)
        keep_n = max(max_cols - self.center.size, 1)
        order = np.argsort(norms)[::-1]
        keep = order[:keep_n]
        drop = order[keep_n:]
        box = np.sum(np.abs(self.G[:, drop]), axis=1)
        extra = np.diag(box)
        nz = box > 0.0
        return _Zonotope(self.center, np.hstack([self.G[:, keep], extra[:, nz]]))


def _padded(lo: np.ndarray, hi: np.ndarray):
    """Outward float-rounding allowance on concretized bounds."""
    pad = _PAD_ABS + _PAD_REL * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
    return lo - pad, hi + pad


class _AbsState:
    """Reduced product of an interval state and (optionally) a zonotope."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray, use_zonotope: bool):
        self.lo = lo.astype(np.float64).copy()
        self.hi = hi.astype(np.float64).copy()
        self.zono = None
        if use_zonotope:
            c = 0.5 * (lo + hi)
            r = 0.5 * (hi - lo)
            extra = np.diag(r)
            self.zono = _Zonotope(c, extra[:, r > 0.0])

    def bounds(self):
        return self.lo.copy(), self.hi.copy()

    def _meet_zono(self):
        zlo, zhi = _padded(*self.zono.concretize())
        self.lo = np.maximum(self.lo, zlo)
        self.hi = np.minimum(self.hi, zhi)

    def affine(self, W: np.ndarray, b: np.ndarray):
        c = 0.5 * (self.lo + self.hi)
        r = 0.5 * (self.hi - self.lo)
        mid = W @ c + b
        rad = np.abs(W) @ r
        pad = _PAD_ABS + _PAD_REL * np.maximum(1.0, np.abs(mid) + rad)
        self.lo = mid - rad - pad
        self.hi = mid + rad + pad
        if self.zono is not None:
            self.zono = self.zono.affine(W, b).reduce_order(4 * mid.size)
            self._meet_zono()

    def activation(self, act: Activation, eps: np.ndarray | None):
        lo, hi = self.bounds()
        ilo, ihi = _image_bounds(act, lo, hi)
        if eps is not None:
            ilo = ilo - eps
            ihi = ihi + eps
        if self.zono is not None:
            n = lo.size
            slope = np.empty(n)
            shift = np.empty(n)
            radius = np.empty(n)
            for j in range(n):
                s, mlo, mhi = parallel_relaxation(act, float(lo[j]), float(hi[j]))
                slope[j] = s
                shift[j] = 0.5 * (mlo + mhi)
                radius[j] = 0.5 * (mhi - mlo)
            if eps is not None:
                radius = radius + eps
            self.zono = self.zono.scale_shift(slope, shift, radius)
            self.zono = self.zono.reduce_order(4 * n)
            self.lo, self.hi = ilo, ihi
            self._meet_zono()
        else:
            self.lo, self.hi = ilo, ihi


def _linear_form(layer):
    if isinstance(layer, DenseLayer):
        return layer.W, layer.b
    dense = lower_conv_to_dense(layer)
    return dense.W, dense.b


def verified_bounds(rnet: RelaxedNetwork, layer: int,
                    domain: str = "zonotope"):
    """Sound bounds on the pre-activation of `layer` over the input box.

    Substitution errors recorded in the relaxed network enter as additive
    noise after each affected activation.
    """
    net = rnet.base
    if layer not in net.linear_indices():
        raise ValueError(f"layer {layer} is not a linear layer")
    if not (np.all(np.isfinite(net.input_lo)) and np.all(np.isfinite(net.input_hi))):
        raise ValueError("input domain must be bounded")
    if domain not in ("interval", "zonotope"):
        raise ValueError(f"unknown abstract domain {domain!r}")
    state = _AbsState(net.input_lo, net.input_hi, domain == "zonotope")
    last_linear = None
    for i, lyr in enumerate(net.layers[: layer + 1]):
        if isinstance(lyr, (DenseLayer, Conv2DLayer)):
            W, b = _linear_form(lyr)
            state.affine(W, b)
            last_linear = i
        elif isinstance(lyr, ActivationLayer):
            state.activation(lyr.act, rnet.delta.get(last_linear))
        elif isinstance(lyr, PolyActivationLayer):
            raise ValueError("relaxed networks propagate original activations only")
    return state.bounds()


# -- certified construction ---------------------------------------------------

@dataclass(frozen=True)
class CertifyConfig:
    degree: int = 27
    eps_q_target: float = 1e-10
    mode: str = "heterogeneous"  # or "uniform"
    domain: str = "zonotope"  # or "interval"
    piece_degree: int = 15
    cache_dir: str | None = None
    threads: int = 1

    def __post_init__(self):
        if self.mode not in ("heterogeneous", "uniform"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.domain not in ("interval", "zonotope"):
            raise ValueError(f"unknown domain {self.domain!r}")


def _fit_layer(act: Activation, lo: np.ndarray, hi: np.ndarray,
               cfg: CertifyConfig, layer_idx: int):
    """Fit per-neuron polynomials (or one uniform) on the given ranges."""
    if cfg.mode == "uniform":
        dom = Interval(float(np.min(lo)), float(np.max(hi)))
        cap = fit_activation(act, dom, cfg.degree, cfg.eps_q_target,
                             cfg.piece_degree, cfg.cache_dir)
        return (cap,), np.full(lo.size, cap.eps_total)

    def fit_one(j):
        try:
            return fit_activation(act, Interval(float(lo[j]), float(hi[j])),
                                  cfg.degree, cfg.eps_q_target,
                                  cfg.piece_degree, cfg.cache_dir)
        except Exception as exc:
            raise CertificationError(
                f"fit failed at layer {layer_idx}, neuron {j}: {exc}") from exc

    n = lo.size
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            caps = list(pool.map(fit_one, range(n)))
    else:
        caps = [fit_one(j) for j in range(n)]
    return tuple(caps), np.array([c.eps_total for c in caps])


def certify_network(net: Network, cfg: CertifyConfig = CertifyConfig()):
    """Single-pass certified construction of the polynomial network.

    Walks the layers once: bound the pre-activation of each activation layer
    over the input box and all earlier substitution errors, fit the
    replacement polynomials on those ranges, record their certified error as
    new noise, and continue.  The returned designed ranges therefore contain
    every pre-activation the polynomial network can produce on the domain.
    """
    if not (np.all(np.isfinite(net.input_lo)) and np.all(np.isfinite(net.input_hi))):
        raise ValueError("input domain must be bounded")
    state = _AbsState(net.input_lo, net.input_hi, cfg.domain == "zonotope")
    new_layers = []
    designed_lo = {}
    designed_hi = {}
    eps_map = {}
    report_lo = {}
    report_hi = {}
    last_linear = None
    for i, lyr in enumerate(net.layers):
        if isinstance(lyr, (DenseLayer, Conv2DLayer)):
            W, b = _linear_form(lyr)
            state.affine(W, b)
            lo, hi = state.bounds()
            report_lo[i], report_hi[i] = lo, hi
            new_layers.append(lyr)
            last_linear = i
        elif isinstance(lyr, ActivationLayer):
            lo, hi = report_lo[last_linear], report_hi[last_linear]
            polys, eps = _fit_layer(lyr.act, lo, hi, cfg, i)
            designed_lo[last_linear] = lo
            designed_hi[last_linear] = hi
            eps_map[last_linear] = eps
            new_layers.append(PolyActivationLayer(polys, lo.size))
            state.activation(lyr.act, eps)
        else:
            raise ValueError("network already contains polynomial layers")
    pnet = PolyNetwork(tuple(new_layers), net.input_lo, net.input_hi,
                       designed_lo, designed_hi, eps_map)
    report = BoundsReport(cfg.domain, report_lo, report_hi)
    return pnet, report


def build_polynet(net: Network, report: BoundsReport,
                  cfg: CertifyConfig = CertifyConfig()) -> PolyNetwork:
    """Fit polynomials on externally supplied ranges (e.g. sampled ones).

    No soundness is implied: the designed ranges are whatever the report
    says, which is exactly what makes sampling-designed networks attackable.
    """
    new_layers = []
    designed_lo = {}
    designed_hi = {}
    eps_map = {}
    last_linear = None
    for i, lyr in enumerate(net.layers):
        if isinstance(lyr, (DenseLayer, Conv2DLayer)):
            new_layers.append(lyr)
            last_linear = i
        elif isinstance(lyr, ActivationLayer):
            lo, hi = report.layer_bounds(last_linear)
            polys, eps = _fit_layer(lyr.act, lo, hi, cfg, i)
            designed_lo[last_linear] = lo
            designed_hi[last_linear] = hi
            eps_map[last_linear] = eps
            new_layers.append(PolyActivationLayer(polys, lo.size))
        else:
            raise ValueError("network already contains polynomial layers")
    return PolyNetwork(tuple(new_layers), net.input_lo, net.input_hi,
                       designed_lo, designed_hi, eps_map)


# -- report serialization ------------------------------------------------------

def save_bounds(report: BoundsReport, path=None) -> str:
    out = io.StringIO()
    out.write("polycert-bounds 1\n")
    out.write(f"method {report.method}\n")
    out.write(f"widen {report.widen!r}\n")
    for idx in report.layers():
        lo, hi = report.layer_bounds(idx)
        out.write(f"layer {idx} width {lo.size}\n")
        for a, b in zip(lo, hi):
            out.write(f"{a!r} {b!r}\n")
    if report.diff_lo is not None:
        out.write(f"diff width {report.diff_lo.size}\n")
        for a, b in zip(report.diff_lo, report.diff_hi):
            out.write(f"{a!r} {b!r}\n")
    text = out.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_bounds(text: str) -> BoundsReport:
    lines = [l.strip() for l in text.splitlines() if l.strip()]
    if not lines[0].startswith("polycert-bounds"):
        raise ValueError("bad bounds header")
    method = lines[1].split()[1]
    widen_tok = lines[2].split()[1]
    widen = None if widen_tok == "None" else float(widen_tok)
    lo = {}
    hi = {}
    diff_lo = None
    diff_hi = None
    pos = 3
    while pos < len(lines):
        tok = lines[pos].split()
        pos += 1
        if tok[0] == "layer":
            idx, width = int(tok[1]), int(tok[3])
            a = np.empty(width)
            b = np.empty(width)
            for j in range(width):
                va, vb = lines[pos].split()
                a[j], b[j] = float(va), float(vb)
                pos += 1
            lo[idx], hi[idx] = a, b
        elif tok[0] == "diff":
            width = int(tok[2])
            diff_lo = np.empty(width)
            diff_hi = np.empty(width)
            for j in range(width):
                va, vb = lines[pos].split()
                diff_lo[j], diff_hi[j] = float(va), float(vb)
                pos += 1
        else:
            raise ValueError(f"bad bounds line: {lines[pos - 1]!r}")
    return BoundsReport(method, lo, hi, widen=widen,
                        diff_lo=diff_lo, diff_hi=diff_hi)


def with_diff(report: BoundsReport, diff_lo: np.ndarray,
              diff_hi: np.ndarray) -> BoundsReport:
    return replace(report, diff_lo=diff_lo, diff_hi=diff_hi)
