"""Search for inputs that drive pre-activations outside their designed ranges.

The search runs projected gradient ascent on the distance of a chosen
layer's pre-activations from their designed interval centers, computed on the
original network (whose internals track the polynomial network closely until
the moment a range is violated, which is exactly the event being hunted).
Image perturbations compose a differentiable bilinear rotation/translation
warp with additive noise; discretization to the input grid is handled with a
straight-through gradient.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .network import (Dataset, Network, PolyNetwork, forward, grad_input)
from .ranges import BoundsReport

_GRID_STEP = 1.0 / 255.0  # straight-through rounding grid


@dataclass(frozen=True)
class PerturbationSpec:
    linf_eps: float = 0.0
    rotate_deg: float = 0.0
    translate_frac: float = 0.0
    per_feature_frac: float = 0.0
    discretize: bool = False
    steps: int = 40
    step_size: float | None = None  # per unit budget; default 2.5/steps
    restarts: int = 3

    def __post_init__(self):
        for name in ("linf_eps", "rotate_deg", "translate_frac", "per_feature_frac"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if self.steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be >= 1")

    @property
    def image_mode(self) -> bool:
        return self.rotate_deg > 0.0 or self.translate_frac > 0.0


@dataclass(frozen=True)
class Violation:
    layer: int
    neuron: int
    margin: float


@dataclass(frozen=True)
class AttackResult:
    success: bool
    violating_layer: int | None
    violating_neuron: int | None
    margin: float
    final_input: np.ndarray
    objective_trace: tuple = field(default=())


def overflow_objective(net: Network, bounds: BoundsReport, layer: int,
                       x: np.ndarray) -> float:
    """Sum over neurons of |pre-activation - interval center| at the layer."""
    lo, hi = bounds.layer_bounds(layer)
    pre = forward(net, x).pre[layer]
    center = 0.5 * (lo + hi)
    return float(np.sum(np.abs(pre - center)))


def check_overflow(pnet: PolyNetwork, x: np.ndarray) -> Violation | None:
    """First designed-range violation in layer-major, neuron-ascending order."""
    trace = forward(pnet, x)
    for idx in sorted(pnet.designed_lo.keys()):
        pre = trace.pre[idx]
        lo = pnet.designed_lo[idx]
        hi = pnet.designed_hi[idx]
        out = np.maximum(lo - pre, pre - hi)
        bad = np.nonzero(out > 0.0)[0]
        if bad.size:
            j = int(bad[0])
            return Violation(idx, j, float(out[j]))
    return None


# -- differentiable image warp ----------------------------------------------

def _image_side(n: int) -> int:
    side = int(round(math.sqrt(n)))
    if side * side != n:
        raise ValueError("image perturbations need a square single-channel input")
    return side


def warp_image(img: np.ndarray, theta: float, tx: float, ty: float):
    """Rotate by theta (radians) about the center and translate by (tx, ty)
    pixels, sampling bilinearly with zero padding.

    Returns the warped image together with its partial derivatives with
    respect to theta, tx and ty (same shape), so gradient ascent can move the
    warp parameters directly.
    """
    side = img.shape[0]
    c = 0.5 * (side - 1)
    rr, cc = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    dr = rr - c
    dc = cc - c
    cos, sin = math.cos(theta), math.sin(theta)
    u = c + cos * dr + sin * dc - ty
    v = c - sin * dr + cos * dc - tx
    du_dth = -sin * dr + cos * dc
    dv_dth = -cos * dr - sin * dc

    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    a = u - u0
    b = v - v0

    def sample(iu, iv):
        ok = (iu >= 0) & (iu < side) & (iv >= 0) & (iv < side)
        val = np.zeros_like(u)
        val[ok] = img[iu[ok], iv[ok]]
        return val

    f00 = sample(u0, v0)
    f01 = sample(u0, v0 + 1)
    f10 = sample(u0 + 1, v0)
    f11 = sample(u0 + 1, v0 + 1)
    out = ((1 - a) * (1 - b) * f00 + (1 - a) * b * f01
           + a * (1 - b) * f10 + a * b * f11)
    dval_du = (1 - b) * (f10 - f00) + b * (f11 - f01)
    dval_dv = (1 - a) * (f01 - f00) + a * (f11 - f10)
    d_theta = dval_du * du_dth + dval_dv * dv_dth
    d_tx = -dval_dv
    d_ty = -dval_du
    return out, d_theta, d_tx, d_ty


# -- projected gradient ascent ------------------------------------------------

class _Perturbation:
    """Parameter vector, projection, and forward/backward for gamma(x, delta)."""

    def __init__(self, net: Network, spec: PerturbationSpec, x0: np.ndarray):
        self.net = net
        self.spec = spec
        self.x0 = x0
        feat_range = net.input_hi - net.input_lo
        self.noise_budget = spec.linf_eps + spec.per_feature_frac * feat_range
        if spec.image_mode:
            self.side = _image_side(x0.size)
            self.rot_budget = math.radians(spec.rotate_deg)
            self.tr_budget = spec.translate_frac * self.side
        else:
            self.side = None
        self.n_params = x0.size + (3 if spec.image_mode else 0)

    def budgets(self) -> np.ndarray:
        if self.spec.image_mode:
            head = np.array([self.rot_budget, self.tr_budget, self.tr_budget])
            return np.concatenate([head, np.broadcast_to(self.noise_budget, self.x0.shape)])
        return np.broadcast_to(self.noise_budget, self.x0.shape).astype(float)

    def project(self, p: np.ndarray) -> np.ndarray:
        return np.clip(p, -self.budgets(), self.budgets())

    def apply(self, p: np.ndarray) -> np.ndarray:
        if self.spec.image_mode:
            theta, tx, ty = p[0], p[1], p[2]
            noise = p[3:]
            img = self.x0.reshape(self.side, self.side)
            warped, *_ = warp_image(img, theta, tx, ty)
            x = warped.reshape(-1) + noise
        else:
            x = self.x0 + p
        if self.spec.discretize:
            x = np.round(x / _GRID_STEP) * _GRID_STEP
        return np.clip(x, self.net.input_lo, self.net.input_hi)

    def chain_gradient(self, p: np.ndarray, gx: np.ndarray) -> np.ndarray:
        """Pull the input-space gradient back to the parameter vector.

        Rounding and clipping use straight-through (identity) gradients.
        """
        if not self.spec.image_mode:
            return gx
        theta, tx, ty = p[0], p[1], p[2]
        img = self.x0.reshape(self.side, self.side)
        _, d_th, d_tx, d_ty = warp_image(img, theta, tx, ty)
        g = np.empty(self.n_params)
        gimg = gx.reshape(self.side, self.side)
        g[0] = float(np.sum(gimg * d_th))
        g[1] = float(np.sum(gimg * d_tx))
        g[2] = float(np.sum(gimg * d_ty))
        g[3:] = gx
        return g


def pgd_attack(net: Network, pnet: PolyNetwork, x0: np.ndarray,
               spec: PerturbationSpec, target_layer: int,
               rng: np.random.Generator | None = None) -> AttackResult:
    """Sign-gradient ascent on the overflow objective with budget projection.

    Every iterate is checked against the polynomial network's designed
    ranges; the first hit decides success and the remaining budget keeps
    pushing for the largest violation margin, which is what gets returned.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if not net.in_domain(x0, slack=1e-9):
        raise ValueError("starting point lies outside the input domain")
    if spec.image_mode and int(round(math.sqrt(x0.size))) ** 2 != x0.size:
        raise ValueError("rotation/translation budgets require square image inputs")
    if target_layer not in pnet.designed_lo:
        raise ValueError(f"layer {target_layer} carries no designed range")
    rng = rng or np.random.default_rng(0)
    lo = pnet.designed_lo[target_layer]
    hi = pnet.designed_hi[target_layer]
    center = 0.5 * (lo + hi)
    pert = _Perturbation(net, spec, x0)
    budgets = pert.budgets()
    step = budgets * (spec.step_size if spec.step_size is not None
                      else 2.5 / spec.steps)

    def objective_and_grad(p):
        x = pert.apply(p)
        pre = forward(net, x).pre[target_layer]
        obj = float(np.sum(np.abs(pre - center)))
        gx = grad_input(net, x, target_layer, np.sign(pre - center))
        return obj, pert.chain_gradient(p, gx), x

    best_violation: Violation | None = None
    best_margin = -np.inf
    best_input = pert.apply(np.zeros(pert.n_params))
    best_obj = -np.inf
    trace = []
    for restart in range(spec.restarts):
        if restart == 0:
            p = np.zeros(pert.n_params)
        else:
            p = rng.uniform(-budgets, budgets)
        for _ in range(spec.steps):
            x = pert.apply(p)
            v = check_overflow(pnet, x)
            if v is not None and v.margin > best_margin:
                best_violation = v
                best_margin = v.margin
                best_input = x
            obj, g, x = objective_and_grad(p)
            trace.append(obj)
            if obj > best_obj and best_violation is None:
                best_obj = obj
                best_input = x
            p = pert.project(p + step * np.sign(g))
        x = pert.apply(p)
        v = check_overflow(pnet, x)
        if v is not None and v.margin > best_margin:
            best_violation = v
            best_margin = v.margin
            best_input = x
    if best_violation is not None:
        return AttackResult(True, best_violation.layer, best_violation.neuron,
                            best_violation.margin, best_input, tuple(trace))
    return AttackResult(False, None, None, 0.0, best_input, tuple(trace))


@dataclass(frozen=True)
class CampaignRow:
    row: int
    success: bool
    layer: int | None
    neuron: int | None
    margin: float


@dataclass(frozen=True)
class CampaignResult:
    rows_sampled: tuple
    rows_certified: tuple
    success_rate_sampled: float
    success_rate_certified: float
    adv_inputs: tuple = ()  # (row, input) for successful sampled attacks


def _attack_row(net, pnet, x0, spec, seed_seq):
    rng = np.random.default_rng(seed_seq)
    targets = sorted(pnet.designed_lo.keys(), reverse=True)
    if not targets:
        raise ValueError("polynomial network carries no designed ranges")
    res = None
    for layer in targets:
        res = pgd_attack(net, pnet, x0, spec, layer, rng)
        if res.success:
            return res
    return res


def attack_campaign(net: Network, pnet_sampled: PolyNetwork,
                    pnet_certified: PolyNetwork, data: Dataset,
                    spec: PerturbationSpec, seed: int = 0,
                    threads: int = 1) -> CampaignResult:
    """Attack every dataset row against both network designs.

    Rows are independent; per-row randomness is seeded from (seed, row) so
    campaigns are reproducible regardless of thread count.
    """
    def run(pnet, i):
        res = _attack_row(net, pnet, data.rows[i], spec,
                          np.random.SeedSequence([seed, i]))
        return CampaignRow(i, res.success, res.violating_layer,
                           res.violating_neuron, res.margin), res

    results = {}
    for tag, pnet in (("sampled", pnet_sampled), ("certified", pnet_certified)):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(lambda i: run(pnet, i), range(len(data))))
        else:
            rows = [run(pnet, i) for i in range(len(data))]
        results[tag] = rows
    rows_s = tuple(r for r, _ in results["sampled"])
    rows_c = tuple(r for r, _ in results["certified"])
    adv = tuple((r.row, res.final_input) for r, res in results["sampled"]
                if r.success)
    n = max(len(data), 1)
    return CampaignResult(
        rows_s, rows_c,
        sum(r.success for r in rows_s) / n,
        sum(r.success for r in rows_c) / n,
        adv)


def campaign_csv(result: CampaignResult) -> str:
    out = io.StringIO()
    out.write("design,row,success,layer,neuron,margin\n")
    for tag, rows in (("sampled", result.rows_sampled),
                      ("certified", result.rows_certified)):
        for r in rows:
            out.write(f"{tag},{r.row},{int(r.success)},"
                      f"{'' if r.layer is None else r.layer},"
                      f"{'' if r.neuron is None else r.neuron},{r.margin!r}\n")
    out.write(f"summary,sampled,,,,{result.success_rate_sampled!r}\n")
    out.write(f"summary,certified,,,,{result.success_rate_certified!r}\n")
    return out.getvalue()
