"""Arithmetic-circuit descriptions and CKKS parameter selection.

A compiled circuit is a flat list of layer tuples:

    ["linear", weights, bias, [out, in]]
    ["chebyshev", coeffs, interval_lo, interval_hi, [rows, degree+1]]
    ["conv", [out_c, in_c], stride, padding, kernels, bias,
             [kh, kw], [in_h, in_w, out_h, out_w]]

serialized in a deliberately tiny concrete syntax: bracketed comma-separated
lists, decimal numbers only (no exponents), no whitespace.  The serializer is
canonical, so parse(serialize(x)) round-trips byte-identically.

Linear layers alternate between two slot encodings.  A layer with expanded
input multiplies by column-packed weights and needs one rescale; a layer with
repeated input needs a second multiplication for the selection mask.  The
first layer always consumes expanded input, and chebyshev layers preserve the
encoding, so the mode of every layer is derived, never stored.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import Decimal

import numpy as np

from .network import (ActivationLayer, Conv2DLayer, DenseLayer, Network,
                      PolyActivationLayer, PolyNetwork)


class GrammarError(ValueError):
    """Circuit text violates the grammar."""


class CompileError(ValueError):
    """Network cannot be compiled with the given parameters."""


# -- multiplicative depth -----------------------------------------------------

# depth -> (baby steps k, giant levels m, max degree) for the batched
# Chebyshev evaluator; max degree is k*(2^m - 1) - 1
PS_PLAN = {
    4: (2, 2, 5),
    5: (2, 3, 13),
    6: (4, 3, 27),
    7: (4, 4, 59),
    8: (8, 4, 119),
    9: (8, 5, 247),
}

MAX_CHEB_DEGREE = 247


def cheb_table_depth(degree: int) -> int:
    """Multiplicative depth of the batched Chebyshev evaluation by degree."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if degree == 0:
        return 0
    if degree <= 2:
        return degree  # direct evaluation below the table's range
    for depth in sorted(PS_PLAN):
        if degree <= PS_PLAN[depth][2]:
            return depth
    raise CompileError(f"chebyshev degree {degree} exceeds {MAX_CHEB_DEGREE}")


def ps_plan(degree: int) -> tuple[int, int]:
    """(baby steps, giant levels) used for a given degree."""
    for depth in sorted(PS_PLAN):
        if degree <= PS_PLAN[depth][2]:
            return PS_PLAN[depth][0], PS_PLAN[depth][1]
    raise CompileError(f"chebyshev degree {degree} exceeds {MAX_CHEB_DEGREE}")


def _layer_kinds(obj) -> list:
    """Normalize a PolyNetwork or CircuitDesc into a kind/degree walk."""
    kinds = []
    if isinstance(obj, Network):
        for layer in obj.layers:
            if isinstance(layer, (DenseLayer, Conv2DLayer)):
                kinds.append(("linear", None))
            elif isinstance(layer, PolyActivationLayer):
                deg = max(layer.poly_for(j).pi.degree for j in range(layer.width))
                kinds.append(("chebyshev", deg))
            elif isinstance(layer, ActivationLayer):
                raise CompileError("network still contains raw activations; "
                                   "certify it first")
    else:
        for layer in obj.layers:
            if isinstance(layer, (CircuitLinear, CircuitConv)):
                kinds.append(("linear", None))
            else:
                kinds.append(("chebyshev", layer.degree))
    return kinds


def required_depth(obj) -> int:
    """Total multiplicative depth of a polynomial network or circuit.

    Linear layers cost 1 with expanded input and 2 with repeated input;
    chebyshev layers cost their table depth plus 1 for the affine map of each
    slot onto [-1, 1].
    """
    depth = 0
    expanded = True
    for kind, deg in _layer_kinds(obj):
        if kind == "linear":
            depth += 1 if expanded else 2
            expanded = not expanded
        else:
            if deg > MAX_CHEB_DEGREE:
                raise CompileError(f"chebyshev degree {deg} exceeds {MAX_CHEB_DEGREE}")
            depth += cheb_table_depth(deg) + (1 if deg > 0 else 0)
    return depth


def encoding_modes(obj) -> list[str]:
    """Input encoding ("expanded" | "repeated") of every layer, in order."""
    modes = []
    expanded = True
    for kind, _ in _layer_kinds(obj):
        modes.append("expanded" if expanded else "repeated")
        if kind == "linear":
            expanded = not expanded
    return modes


# -- parameter selection --------------------------------------------------------

SECURITY_CAPS = {15: 881, 16: 1747, 17: 3523}  # total modulus bits per log2 N


@dataclass(frozen=True)
class CKKSParams:
    ring_log2_N: int
    slot_count: int
    modulus_chain_bits: tuple  # chain[0] is the base modulus, consumed last
    scale_bits: int
    depth: int
    dnum: int = 2

    def __post_init__(self):
        if self.slot_count != 2 ** (self.ring_log2_N - 1):
            raise ValueError("slot count must be half the ring size")
        if self.depth > len(self.modulus_chain_bits) - 1:
            raise ValueError("depth exceeds the modulus chain")


def first_mod_bits(scale_bits: int) -> int:
    """Base modulus gets 20 bits of decode headroom over the scale."""
    return scale_bits + 20


def select_params(depth: int, slots_needed: int,
                  profile: tuple[int, int] = (30, 40),
                  dnum: int = 2) -> CKKSParams:
    """Smallest ring admitting the requested depth under the security caps.

    profile = (q_i bits, scale bits).  The auxiliary key-switching budget is
    counted as ceil(Q/dnum) bits on top of the chain.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    q_bits, scale_bits = profile
    base = first_mod_bits(scale_bits)
    for log_n in sorted(SECURITY_CAPS):
        slots = 2 ** (log_n - 1)
        q_total = base + depth * q_bits
        total = q_total + math.ceil(q_total / dnum)
        if total <= SECURITY_CAPS[log_n] and slots >= slots_needed:
            chain = (base,) + (q_bits,) * depth
            return CKKSParams(log_n, slots, chain, scale_bits, depth, dnum)
    raise CompileError("circuit too deep for supported parameters")


# -- circuit layers -------------------------------------------------------------

@dataclass(frozen=True)
class CircuitLinear:
    weights: np.ndarray  # packed, length n^2
    bias: np.ndarray  # packed, length n^2
    shape: tuple[int, int]  # logical (out, in)

    @property
    def n(self) -> int:
        n = int(round(math.sqrt(self.weights.size)))
        if n * n != self.weights.size:
            raise GrammarError("linear packing is not square")
        return n


@dataclass(frozen=True)
class CircuitCheb:
    coeffs: np.ndarray  # (rows, degree+1) flattened row-major
    lo: np.ndarray  # per-row interval lows
    hi: np.ndarray
    shape: tuple[int, int]  # (rows, degree+1)

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def degree(self) -> int:
        return self.shape[1] - 1

    def coeff_matrix(self) -> np.ndarray:
        return self.coeffs.reshape(self.shape)


@dataclass(frozen=True)
class CircuitConv:
    out_channels: int
    in_channels: int
    stride: int
    padding: int
    kernels: np.ndarray  # flattened (out_c, in_c, kh, kw)
    bias: np.ndarray
    kernel_shape: tuple[int, int]
    io_shape: tuple[int, int, int, int]  # (in_h, in_w, out_h, out_w)


@dataclass(frozen=True)
class CircuitDesc:
    layers: tuple

    def validate(self):
        modes = encoding_modes(self)
        n = None
        for layer, mode in zip(self.layers, modes):
            if isinstance(layer, CircuitLinear):
                if n is None:
                    n = layer.n
                elif layer.n != n:
                    raise GrammarError("linear layers use inconsistent packing")
        return modes


# -- compilation -----------------------------------------------------------------

def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1)).bit_length()


def pack_dense(W: np.ndarray, b: np.ndarray, n: int, mode: str):
    """Pack a dense layer for the rotate-accumulate kernels.

    Expanded-input layers store the matrix column-wise: slot u*n + i holds
    W[i, u].  Repeated-input layers store it row-wise: slot j*n + i holds
    W[j, i].  The bias is packed in the output encoding of the layer.
    """
    out_d, in_d = W.shape
    Wp = np.zeros((n, n))
    Wp[:out_d, :in_d] = W
    bp = np.zeros(n)
    bp[:out_d] = b
    packed = np.zeros(n * n)
    bias = np.zeros(n * n)
    idx = np.arange(n)
    if mode == "expanded":
        # weights column-wise; output is repeated: bias[j*n+i] = b[i]
        for u in range(n):
            packed[u * n: (u + 1) * n] = Wp[:, u]
        bias = np.tile(bp, n)
    else:
        # weights row-wise; output is expanded: bias[j*n+i] = b[j]
        for j in range(n):
            packed[j * n: (j + 1) * n] = Wp[j, :]
        bias = np.repeat(bp, n)
    return packed, bias


def compile_network(pnet: PolyNetwork, params: CKKSParams) -> CircuitDesc:
    """Pack a certified polynomial network into a circuit description.

    All layer widths are padded to one power-of-two dimension n; the packed
    vectors have length n^2 and are tiled across the available slots by the
    executor, so n^2 must not exceed the slot count.
    """
    dims = [pnet.in_dim]
    for layer in pnet.layers:
        if isinstance(layer, (DenseLayer, Conv2DLayer)):
            dims.append(layer.out_dim)
    n = _next_pow2(max(dims))
    if n * n > params.slot_count:
        raise CompileError(
            f"padded width {n} needs {n * n} slots, only {params.slot_count} available")
    modes = encoding_modes(pnet)
    layers = []
    for layer, mode in zip(pnet.layers, modes):
        if isinstance(layer, DenseLayer):
            w, b = pack_dense(layer.W, layer.b, n, mode)
            layers.append(CircuitLinear(w, b, (layer.out_dim, layer.in_dim)))
        elif isinstance(layer, Conv2DLayer):
            oc, ic, kh, kw = layer.kernels.shape
            ih, iw = layer.in_shape[1], layer.in_shape[2]
            oh, ow = layer.out_shape[1], layer.out_shape[2]
            layers.append(CircuitConv(oc, ic, layer.stride, layer.padding,
                                      layer.kernels.reshape(-1).copy(),
                                      layer.bias.copy(), (kh, kw),
                                      (ih, iw, oh, ow)))
        elif isinstance(layer, PolyActivationLayer):
            if layer.uniform:
                cap = layer.polys[0]
                coeffs = cap.pi.coeffs[None, :]
                lo = np.array([cap.pi.domain.lo])
                hi = np.array([cap.pi.domain.hi])
            else:
                coeffs, doms = layer.coeff_table()
                lo, hi = doms[:, 0].copy(), doms[:, 1].copy()
            if coeffs.shape[1] - 1 > MAX_CHEB_DEGREE:
                raise CompileError(
                    f"chebyshev degree {coeffs.shape[1] - 1} exceeds {MAX_CHEB_DEGREE}")
            layers.append(CircuitCheb(coeffs.reshape(-1).copy(), lo, hi,
                                      (coeffs.shape[0], coeffs.shape[1])))
        else:
            raise CompileError("compile expects a certified polynomial network")
    desc = CircuitDesc(tuple(layers))
    desc.validate()
    return desc


# -- canonical serialization -------------------------------------------------------

def _num(x) -> str:
    """Grammar-conformant decimal rendering (never exponent notation)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    f = float(x)
    if not np.isfinite(f):
        raise GrammarError("circuit numbers must be finite")
    s = format(Decimal(repr(f)), "f")
    return s


def _num_array(vals) -> str:
    return "[" + ",".join(_num(float(v)) for v in np.asarray(vals).ravel()) + "]"


def _int_array(vals) -> str:
    return "[" + ",".join(str(int(v)) for v in vals) + "]"


def serialize_circuit(desc: CircuitDesc) -> str:
    parts = []
    for layer in desc.layers:
        if isinstance(layer, CircuitLinear):
            parts.append('["linear",' + _num_array(layer.weights) + ","
                         + _num_array(layer.bias) + ","
                         + _int_array(layer.shape) + "]")
        elif isinstance(layer, CircuitCheb):
            parts.append('["chebyshev",' + _num_array(layer.coeffs) + ","
                         + _num_array(layer.lo) + "," + _num_array(layer.hi)
                         + "," + _int_array(layer.shape) + "]")
        elif isinstance(layer, CircuitConv):
            parts.append('["conv",' + _int_array((layer.out_channels, layer.in_channels))
                         + "," + str(layer.stride) + "," + str(layer.padding) + ","
                         + _num_array(layer.kernels) + "," + _num_array(layer.bias)
                         + "," + _int_array(layer.kernel_shape) + ","
                         + _int_array(layer.io_shape) + "]")
        else:
            raise GrammarError(f"unknown layer {type(layer)!r}")
    return "[" + ",".join(parts) + "]"


_NUMBER_RE = re.compile(r"-?[0-9]+(?:\.[0-9]+)?")


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def peek(self) -> str:
        if self.pos >= len(self.text):
            raise GrammarError("unexpected end of input")
        return self.text[self.pos]

    def expect(self, ch: str):
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            got = self.text[self.pos: self.pos + 10] if self.pos < len(self.text) else "<eof>"
            raise GrammarError(f"expected {ch!r} at offset {self.pos}, got {got!r}")
        self.pos += 1

    def string(self) -> str:
        self.expect('"')
        end = self.text.find('"', self.pos)
        if end < 0:
            raise GrammarError("unterminated string")
        s = self.text[self.pos: end]
        self.pos = end + 1
        return s

    def number(self) -> float:
        m = _NUMBER_RE.match(self.text, self.pos)
        if not m or m.start() != self.pos:
            raise GrammarError(f"expected a number at offset {self.pos}")
        self.pos = m.end()
        return float(m.group(0))

    def number_list(self) -> list[float]:
        self.expect("[")
        out = []
        if self.peek() == "]":
            self.pos += 1
            return out
        out.append(self.number())
        while self.peek() == ",":
            self.pos += 1
            out.append(self.number())
        self.expect("]")
        return out

    def done(self) -> bool:
        return self.pos == len(self.text)


def _as_int_pair(vals, what) -> tuple[int, int]:
    if len(vals) != 2 or any(v != int(v) for v in vals):
        raise GrammarError(f"{what} must be two integers")
    return int(vals[0]), int(vals[1])


def parse_circuit(text: str) -> CircuitDesc:
    """Strict parser for the circuit grammar (no whitespace tolerated)."""
    t = _Tokens(text.rstrip("\n"))
    t.expect("[")
    layers = []
    if t.peek() != "]":
        while True:
            layers.append(_parse_layer(t))
            if t.peek() == ",":
                t.pos += 1
                continue
            break
    t.expect("]")
    if not t.done():
        raise GrammarError(f"trailing characters at offset {t.pos}")
    desc = CircuitDesc(tuple(layers))
    desc.validate()
    return desc


def _parse_layer(t: _Tokens):
    t.expect("[")
    tag = t.string()
    if tag == "linear":
        t.expect(",")
        weights = np.array(t.number_list())
        t.expect(",")
        bias = np.array(t.number_list())
        t.expect(",")
        shape = _as_int_pair(t.number_list(), "linear shape")
        t.expect("]")
        layer = CircuitLinear(weights, bias, shape)
        layer.n  # validates squareness
        if bias.size != weights.size:
            raise GrammarError("linear bias packing size mismatch")
        return layer
    if tag == "chebyshev":
        t.expect(",")
        coeffs = np.array(t.number_list())
        t.expect(",")
        lo = np.array(t.number_list())
        t.expect(",")
        hi = np.array(t.number_list())
        t.expect(",")
        shape = _as_int_pair(t.number_list(), "chebyshev shape")
        t.expect("]")
        if coeffs.size != shape[0] * shape[1]:
            raise GrammarError("chebyshev coefficient count mismatch")
        if lo.size != shape[0] or hi.size != shape[0]:
            raise GrammarError("chebyshev interval count mismatch")
        if np.any(lo > hi):
            raise GrammarError("chebyshev interval endpoints out of order")
        return CircuitCheb(coeffs, lo, hi, shape)
    if tag == "conv":
        t.expect(",")
        oc, ic = _as_int_pair(t.number_list(), "conv channels")
        t.expect(",")
        stride = int(t.number())
        t.expect(",")
        padding = int(t.number())
        t.expect(",")
        kernels = np.array(t.number_list())
        t.expect(",")
        bias = np.array(t.number_list())
        t.expect(",")
        kh, kw = _as_int_pair(t.number_list(), "conv kernel shape")
        t.expect(",")
        io = t.number_list()
        if len(io) != 4 or any(v != int(v) for v in io):
            raise GrammarError("conv io shape must be four integers")
        t.expect("]")
        if kernels.size != oc * ic * kh * kw:
            raise GrammarError("conv kernel count mismatch")
        if bias.size != oc:
            raise GrammarError("conv bias count mismatch")
        return CircuitConv(oc, ic, stride, padding, kernels, bias, (kh, kw),
                           (int(io[0]), int(io[1]), int(io[2]), int(io[3])))
    raise GrammarError(f"unknown layer tag {tag!r}")
