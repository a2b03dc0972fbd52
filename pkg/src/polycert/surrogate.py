"""Certified piecewise-polynomial stand-ins for activation functions.

A surrogate replaces an activation by its linear asymptotes on the tails and
by Chebyshev interpolants on a partition of the interior, together with a
certified global bound eps_q on |q(x) - sigma(x)| over all of R.  Tail
cutoffs come from a monotone binary search on the asymptote deviation; each
interior piece is certified by interval arithmetic in mean-value form over an
adaptively bisected subdivision (at least 64 sub-intervals to start).

Building a surrogate is comparatively expensive but only happens once per
(activation, tolerance, degree); results are cached in-process and can be
saved to a small text file.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from .activations import Activation, activation_from_name
from .cheb import ChebPoly, interpolate, range_enclosure_many
from .interval import Interval

MAX_PIECES = 1024
# internal margin so the published eps_q holds strictly
_CERT_MARGIN = 1.0 - 1e-3


class SurrogateError(RuntimeError):
    """Tolerance unachievable within the piece/degree budget."""

    def __init__(self, msg: str, best_eps: float):
        super().__init__(msg)
        self.best_eps = best_eps


@dataclass(frozen=True)
class PiecewiseSurrogate:
    """Asymptotes outside [d_0, d_n], certified polynomial pieces inside."""

    activation: Activation
    breakpoints: np.ndarray  # d_0 < d_1 < ... < d_n
    pieces: tuple  # ChebPoly on (d_{i-1}, d_i]
    eps_q: float

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=np.float64)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if bp.size != len(self.pieces) + 1 and not (bp.size == 1 and not self.pieces):
            raise ValueError("breakpoint / piece count mismatch")
        if np.any(np.diff(bp) <= 0.0):
            raise ValueError("breakpoints must be strictly increasing")

    @property
    def d0(self) -> float:
        return float(self.breakpoints[0])

    @property
    def dn(self) -> float:
        return float(self.breakpoints[-1])

    def eval(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        a1, b1, a2, b2 = self.activation.asymptotes
        out = np.empty_like(x)
        left = x <= self.d0
        right = x > self.dn
        out[left] = a1 * x[left] + b1
        out[right] = a2 * x[right] + b2
        mid = ~(left | right)
        if np.any(mid):
            idx = np.searchsorted(self.breakpoints, x[mid], side="left") - 1
            idx = np.clip(idx, 0, len(self.pieces) - 1)
            vals = np.empty(int(np.sum(mid)))
            xm = x[mid]
            for i, piece in enumerate(self.pieces):
                sel = idx == i
                if np.any(sel):
                    vals[sel] = piece.eval(xm[sel])
            out[mid] = vals
        return out

    __call__ = eval

    def segments(self, interval: Interval):
        """(Interval, kind, payload) covering `interval`.

        kind is "piece" with a ChebPoly payload, or "line" with (slope,
        intercept) for the asymptote tails.
        """
        a1, b1, a2, b2 = self.activation.asymptotes
        out = []
        lo, hi = interval.lo, interval.hi
        if lo < self.d0:
            out.append((Interval(lo, min(hi, self.d0)), "line", (a1, b1)))
        for i, piece in enumerate(self.pieces):
            s0, s1 = self.breakpoints[i], self.breakpoints[i + 1]
            if s1 <= lo or s0 >= hi:
                continue
            out.append((Interval(max(lo, s0), min(hi, s1)), "piece", piece))
        if hi > self.dn:
            out.append((Interval(max(lo, self.dn), hi), "line", (a2, b2)))
        return out


def _tail_cutoff(act: Activation, side: str, eps: float) -> float:
    """Largest (left) / smallest (right) point with tail error <= eps.

    The deviation from the asymptote is monotone beyond the cutoff and decays
    to zero toward the infinity, so plain bisection applies.
    """
    c1, c2 = act.monotone_cutoffs
    anchor = c1 if side == "left" else c2
    if float(act.tail_error(anchor, side)) <= eps:
        return anchor
    step = 1.0
    far = anchor
    direction = -1.0 if side == "left" else 1.0
    for _ in range(200):
        far = far + direction * step
        if float(act.tail_error(far, side)) <= eps:
            break
        step *= 2.0
    else:  # pragma: no cover - tails always decay for supported activations
        raise SurrogateError(f"{side} tail search did not converge", np.inf)
    near = anchor
    for _ in range(200):
        mid = 0.5 * (far + near)
        if mid == far or mid == near:
            break
        if float(act.tail_error(mid, side)) <= eps:
            far = mid
        else:
            near = mid
    return far


def _deriv_range_many(act: Activation, a: np.ndarray, b: np.ndarray):
    """Vectorized sigma' range over many [a_i, b_i] (smooth regions)."""
    da = act.deriv(a)
    db = act.deriv(b)
    dlo = np.minimum(da, db)
    dhi = np.maximum(da, db)
    for bp in act.curvature_breakpoints:
        inside = (a < bp) & (bp < b)
        if np.any(inside):
            v = float(act.deriv(bp))
            dlo = np.where(inside, np.minimum(dlo, v), dlo)
            dhi = np.where(inside, np.maximum(dhi, v), dhi)
    pad = 1e-14 + 1e-13 * np.maximum(np.abs(dlo), np.abs(dhi))
    return dlo - pad, dhi + pad


def _certify_piece(act: Activation, piece: ChebPoly, eps: float,
                   min_subdivisions: int = 64,
                   max_rounds: int = 48,
                   budget: int = 6_000_000) -> float | None:
    """Certified sup |piece - sigma| on the piece domain, or None on failure.

    Mean-value interval form on each sub-interval S with midpoint m and
    half-width h:  |r(x)| <= |r(m)| + h * max|r'(S)| for x in S, where
    r = piece - sigma.  Sub-intervals that fail the eps test are bisected.
    """
    dpoly = piece.derivative()
    lo = np.linspace(piece.domain.lo, piece.domain.hi, min_subdivisions + 1)[:-1]
    hi = np.linspace(piece.domain.lo, piece.domain.hi, min_subdivisions + 1)[1:]
    certified = 0.0
    processed = 0
    for _ in range(max_rounds):
        processed += lo.size
        if processed > budget:
            return None
        m = 0.5 * (lo + hi)
        h = 0.5 * (hi - lo)
        rm = piece.eval(m) - act(m)
        rm_pad = 1e-15 * np.maximum(1.0, np.abs(piece.eval(m))) + 1e-16
        qlo, qhi = range_enclosure_many(dpoly.coeffs, dpoly.domain, lo, hi)
        slo, shi = _deriv_range_many(act, lo, hi)
        dmax = np.maximum(np.abs(qlo - shi), np.abs(qhi - slo))
        bound = np.abs(rm) + rm_pad + h * dmax
        ok = bound <= eps
        if np.all(ok):
            return float(np.max(np.maximum(certified, np.max(bound))))
        certified = max(certified, float(np.max(bound[ok])) if np.any(ok) else certified)
        flo, fhi, fm = lo[~ok], hi[~ok], m[~ok]
        lo = np.concatenate([flo, fm])
        hi = np.concatenate([fm, fhi])
        if np.any(hi - lo < 1e-12):
            return None
    return None


def build_surrogate(act: Activation, eps_q_target: float,
                    piece_degree: int = 15) -> PiecewiseSurrogate:
    """Construct a certified surrogate with eps_q <= eps_q_target."""
    if eps_q_target <= 0.0:
        raise ValueError("eps_q_target must be positive")
    if act.exact_tails:
        # asymptotes are exact beyond 0: zero interior pieces
        return PiecewiseSurrogate(act, np.array([0.0]), (), 0.0)

    eps = eps_q_target * _CERT_MARGIN
    d0 = _tail_cutoff(act, "left", eps)
    dn = _tail_cutoff(act, "right", eps)
    tail_eps = max(float(act.tail_error(d0, "left")),
                   float(act.tail_error(dn, "right")))
    if dn <= d0:
        # tails already overlap: asymptotes cover everything
        return PiecewiseSurrogate(act, np.array([d0]), (), tail_eps)

    best_eps = np.inf
    counts = list(range(1, 17))
    c = 32
    while c <= MAX_PIECES:
        counts.append(c)
        c *= 2
    screen = np.linspace(0.0, 1.0, 257)
    for count in counts:
        bp = np.linspace(d0, dn, count + 1)
        pieces = []
        certified = tail_eps
        ok = True
        for i in range(count):
            dom = Interval(bp[i], bp[i + 1])
            piece = interpolate(act, piece_degree, dom)
            xs = dom.lo + screen * dom.width
            measured = float(np.max(np.abs(piece.eval(xs) - act(xs))))
            if measured > eps:
                best_eps = min(best_eps, measured)
                ok = False
                break
            got = _certify_piece(act, piece, eps)
            if got is None:
                ok = False
                break
            certified = max(certified, got)
            pieces.append(piece)
        if ok:
            return PiecewiseSurrogate(act, bp, tuple(pieces), certified)
        best_eps = min(best_eps, certified if certified > 0 else np.inf)
    raise SurrogateError(
        f"could not certify {act.kind} to {eps_q_target:g} within "
        f"{MAX_PIECES} pieces of degree {piece_degree}", float(best_eps))


# -- cache ------------------------------------------------------------------

_MEMO: dict = {}


def _cache_key(act: Activation, eps_q_target: float, piece_degree: int):
    return (act.kind, round(act.alpha, 12), float(eps_q_target), piece_degree)


def get_surrogate(act: Activation, eps_q_target: float,
                  piece_degree: int = 15,
                  cache_dir: str | None = None) -> PiecewiseSurrogate:
    """Memoized build_surrogate with an optional on-disk cache."""
    key = _cache_key(act, eps_q_target, piece_degree)
    if key in _MEMO:
        return _MEMO[key]
    path = None
    if cache_dir is not None:
        name = f"{act.kind}_{act.alpha!r}_{eps_q_target!r}_{piece_degree}.surrogate"
        path = os.path.join(cache_dir, name)
        if os.path.exists(path):
            with open(path) as fh:
                s = load_surrogate(fh.read())
            _MEMO[key] = s
            return s
    s = build_surrogate(act, eps_q_target, piece_degree)
    _MEMO[key] = s
    if path is not None:
        os.makedirs(cache_dir, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(save_surrogate(s))
    return s


def save_surrogate(s: PiecewiseSurrogate) -> str:
    out = io.StringIO()
    out.write("polycert-surrogate 1\n")
    out.write(f"activation {s.activation.kind} {s.activation.alpha!r}\n")
    out.write(f"eps_q {s.eps_q!r}\n")
    out.write("breakpoints " + " ".join(repr(float(x)) for x in s.breakpoints) + "\n")
    out.write(f"pieces {len(s.pieces)}\n")
    for p in s.pieces:
        out.write(f"piece {p.domain.lo!r} {p.domain.hi!r} "
                  + " ".join(repr(float(c)) for c in p.coeffs) + "\n")
    return out.getvalue()


def load_surrogate(text: str) -> PiecewiseSurrogate:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines[0].startswith("polycert-surrogate"):
        raise ValueError("bad surrogate header")
    _, kind, alpha = lines[1].split()
    act = activation_from_name(kind, float(alpha))
    eps_q = float(lines[2].split()[1])
    bp = np.array([float(t) for t in lines[3].split()[1:]])
    npieces = int(lines[4].split()[1])
    pieces = []
    for line in lines[5: 5 + npieces]:
        tok = line.split()
        assert tok[0] == "piece"
        dom = Interval(float(tok[1]), float(tok[2]))
        coeffs = np.array([float(t) for t in tok[3:]])
        pieces.append(ChebPoly(coeffs, dom))
    return PiecewiseSurrogate(act, bp, tuple(pieces), eps_q)
