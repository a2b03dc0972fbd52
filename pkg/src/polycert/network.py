"""Feed-forward network data model: dense, conv, and activation layers.

Networks are immutable after construction and evaluation is pure, so
instances can be shared freely across threads.  A PolyNetwork mirrors its
source network layer-for-layer with activations replaced by certified
per-neuron polynomials and carries the designed pre-activation ranges those
polynomials were fitted on.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .activations import Activation, activation_from_name
from .cheb import ChebPoly, eval_many
from .interval import Interval


class ShapeError(ValueError):
    """Layer shapes are incompatible."""


class NetworkFormatError(ValueError):
    """A network/dataset file failed to parse."""


@dataclass(frozen=True)
class DenseLayer:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
            raise ShapeError(f"dense layer shapes W{W.shape} b{b.shape}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class Conv2DLayer:
    """2-d convolution with zero padding; kernels is (out_c, in_c, kh, kw)."""

    kernels: np.ndarray
    bias: np.ndarray
    stride: int
    padding: int
    in_shape: tuple[int, int, int]  # (channels, height, width)

    def __post_init__(self):
        k = np.asarray(self.kernels, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if k.ndim != 4 or b.ndim != 1 or k.shape[0] != b.shape[0]:
            raise ShapeError(f"conv layer shapes kernels{k.shape} bias{b.shape}")
        if self.stride < 1 or self.padding < 0:
            raise ShapeError("conv stride must be >= 1 and padding >= 0")
        c, h, w = self.in_shape
        if c != k.shape[1]:
            raise ShapeError("conv input channels do not match kernels")
        if h + 2 * self.padding < k.shape[2] or w + 2 * self.padding < k.shape[3]:
            raise ShapeError("kernel larger than padded input")
        object.__setattr__(self, "kernels", k)
        object.__setattr__(self, "bias", b)

    @property
    def out_shape(self) -> tuple[int, int, int]:
        _, h, w = self.in_shape
        kh, kw = self.kernels.shape[2], self.kernels.shape[3]
        oh = (h + 2 * self.padding - kh) // self.stride + 1
        ow = (w + 2 * self.padding - kw) // self.stride + 1
        return (self.kernels.shape[0], oh, ow)

    @property
    def in_dim(self) -> int:
        c, h, w = self.in_shape
        return c * h * w

    @property
    def out_dim(self) -> int:
        c, h, w = self.out_shape
        return c * h * w


@dataclass(frozen=True)
class ActivationLayer:
    act: Activation


@dataclass(frozen=True)
class PolyActivationLayer:
    """Per-neuron certified polynomial activations.

    polys holds one entry per neuron, or a single shared entry when the layer
    is uniform.  Each entry exposes .pi (a ChebPoly) and .eps_total.
    """

    polys: tuple
    width: int

    def __post_init__(self):
        if len(self.polys) not in (1, self.width):
            raise ShapeError("need one polynomial per neuron or one shared")

    @property
    def uniform(self) -> bool:
        return len(self.polys) == 1

    def poly_for(self, j: int):
        return self.polys[0] if self.uniform else self.polys[j]

    def coeff_table(self) -> tuple[np.ndarray, np.ndarray]:
        """(width, d+1) coefficients and (width, 2) domains, padded."""
        polys = [self.poly_for(j) for j in range(self.width)]
        d = max(p.pi.degree for p in polys)
        coeffs = np.zeros((self.width, d + 1))
        doms = np.zeros((self.width, 2))
        for j, p in enumerate(polys):
            coeffs[j, : p.pi.coeffs.size] = p.pi.coeffs
            doms[j] = (p.pi.domain.lo, p.pi.domain.hi)
        return coeffs, doms

    def eval(self, x: np.ndarray) -> np.ndarray:
        coeffs, doms = self.coeff_table()
        return eval_many(coeffs, doms, x)


def _linear_like(layer) -> bool:
    return isinstance(layer, (DenseLayer, Conv2DLayer))


def _layer_dims(layer):
    if _linear_like(layer):
        return layer.in_dim, layer.out_dim
    return None, None


@dataclass(frozen=True)
class Network:
    """Alternating linear and activation layers over a box input domain."""

    layers: tuple
    input_lo: np.ndarray
    input_hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.input_lo, dtype=np.float64)
        hi = np.asarray(self.input_hi, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ShapeError("input domain must be two equal-length vectors")
        if np.any(lo > hi):
            raise ShapeError("input domain has lo > hi")
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_lo", lo)
        object.__setattr__(self, "input_hi", hi)
        width = lo.size
        for i, layer in enumerate(self.layers):
            ind, outd = _layer_dims(layer)
            if ind is not None:
                if ind != width:
                    raise ShapeError(
                        f"layer {i} expects {ind} inputs, previous width is {width}")
                width = outd

    @property
    def in_dim(self) -> int:
        return self.input_lo.size

    @property
    def out_dim(self) -> int:
        width = self.in_dim
        for layer in self.layers:
            if _linear_like(layer):
                width = layer.out_dim
        return width

    def linear_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if _linear_like(l)]

    def width_after(self, idx: int) -> int:
        width = self.in_dim
        for layer in self.layers[: idx + 1]:
            if _linear_like(layer):
                width = layer.out_dim
        return width

    def in_domain(self, x: np.ndarray, slack: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.input_lo - slack) and np.all(x <= self.input_hi + slack))


@dataclass(frozen=True)
class PolyNetwork(Network):
    """Polynomial counterpart of a Network with designed pre-activation ranges.

    designed_lo/hi/eps map the index of a linear layer to the per-neuron
    interval its downstream polynomial was fitted on and the certified
    |poly - activation| bound.
    """

    designed_lo: dict = field(default_factory=dict)
    designed_hi: dict = field(default_factory=dict)
    eps: dict = field(default_factory=dict)

    def designed_range(self, layer_idx: int):
        return self.designed_lo.get(layer_idx), self.designed_hi.get(layer_idx)


@dataclass
class Trace:
    """Pre-activation vectors keyed by linear-layer index, plus the output."""

    pre: dict
    output: np.ndarray


def _apply_layer(layer, v):
    if isinstance(layer, DenseLayer):
        with np.errstate(invalid="ignore", over="ignore"):
            return layer.W @ v + layer.b
    if isinstance(layer, Conv2DLayer):
        return conv_forward(layer, v)
    if isinstance(layer, ActivationLayer):
        return layer.act(v)
    if isinstance(layer, PolyActivationLayer):
        if v.ndim == 1:
            return eval_many(*layer.coeff_table(), v[None, :])[0]
        return layer.eval(v)
    raise TypeError(f"unknown layer type {type(layer)!r}")


def forward(net: Network, x: np.ndarray) -> Trace:
    """Evaluate the network, recording every linear layer's output."""
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (net.in_dim,):
        raise ShapeError(f"input shape {v.shape}, expected ({net.in_dim},)")
    pre = {}
    with np.errstate(invalid="ignore", over="ignore"):
        for i, layer in enumerate(net.layers):
            if isinstance(layer, DenseLayer):
                v = layer.W @ v + layer.b
                pre[i] = v
            elif isinstance(layer, Conv2DLayer):
                v = conv_forward(layer, v)
                pre[i] = v
            else:
                v = _apply_layer(layer, v)
    return Trace(pre=pre, output=v)


def forward_many(net: Network, X: np.ndarray):
    """Batched forward pass: X is (batch, in_dim).

    Returns (pre, output) where pre maps linear-layer indices to
    (batch, width) arrays.  Used by fuzzing and campaign loops.
    """
    V = np.asarray(X, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != net.in_dim:
        raise ShapeError(f"batch shape {V.shape}, expected (*, {net.in_dim})")
    pre = {}
    for i, layer in enumerate(net.layers):
        if isinstance(layer, DenseLayer):
            V = V @ layer.W.T + layer.b
            pre[i] = V
        elif isinstance(layer, Conv2DLayer):
            V = np.stack([conv_forward(layer, row) for row in V])
            pre[i] = V
        elif isinstance(layer, ActivationLayer):
            V = layer.act(V)
        elif isinstance(layer, PolyActivationLayer):
            V = layer.eval(V)
    return pre, V


def grad_input(net: Network, x: np.ndarray, layer_idx: int,
               weights: np.ndarray) -> np.ndarray:
    """Gradient of weights . pre[layer_idx] with respect to the input.

    Reverse accumulation through the layers up to (and including) the target
    linear layer.  Kinked activations use their almost-everywhere derivative.
    """
    if layer_idx not in net.linear_indices():
        raise ShapeError(f"layer {layer_idx} is not a linear layer")
    v = np.asarray(x, dtype=np.float64)
    inputs = []
    for layer in net.layers[: layer_idx + 1]:
        inputs.append(v)
        v = _apply_layer(layer, v)
    g = np.asarray(weights, dtype=np.float64)
    if g.shape != v.shape:
        raise ShapeError("objective weight vector does not match layer width")
    for layer, vin in zip(reversed(net.layers[: layer_idx + 1]), reversed(inputs)):
        if isinstance(layer, DenseLayer):
            g = layer.W.T @ g
        elif isinstance(layer, Conv2DLayer):
            g = conv_backward_input(layer, g)
        elif isinstance(layer, ActivationLayer):
            g = g * layer.act.deriv(vin)
        elif isinstance(layer, PolyActivationLayer):
            coeffs, doms = layer.coeff_table()
            dcoeffs = np.zeros_like(coeffs)
            for j in range(layer.width):
                p = layer.poly_for(j)
                d = p.pi.derivative()
                dcoeffs[j, : d.coeffs.size] = d.coeffs
            g = g * eval_many(dcoeffs, doms, vin[None, :])[0]
    return g


# -- convolution ----------------------------------------------------------

def conv_forward(conv: Conv2DLayer, x: np.ndarray) -> np.ndarray:
    """Direct convolution of a flattened (c, h, w) input."""
    c, h, w = conv.in_shape
    img = np.asarray(x, dtype=np.float64).reshape(c, h, w)
    if conv.padding:
        img = np.pad(img, ((0, 0), (conv.padding,) * 2, (conv.padding,) * 2))
    oc, oh, ow = conv.out_shape
    kh, kw = conv.kernels.shape[2], conv.kernels.shape[3]
    out = np.empty((oc, oh, ow))
    for i in range(oh):
        for j in range(ow):
            patch = img[:, i * conv.stride: i * conv.stride + kh,
                        j * conv.stride: j * conv.stride + kw]
            out[:, i, j] = np.tensordot(conv.kernels, patch, axes=3) + conv.bias
    return out.reshape(-1)


def conv_backward_input(conv: Conv2DLayer, g: np.ndarray) -> np.ndarray:
    oc, oh, ow = conv.out_shape
    c, h, w = conv.in_shape
    kh, kw = conv.kernels.shape[2], conv.kernels.shape[3]
    gout = np.asarray(g, dtype=np.float64).reshape(oc, oh, ow)
    gin = np.zeros((c, h + 2 * conv.padding, w + 2 * conv.padding))
    for i in range(oh):
        for j in range(ow):
            gin[:, i * conv.stride: i * conv.stride + kh,
                j * conv.stride: j * conv.stride + kw] += np.tensordot(
                    gout[:, i, j], conv.kernels, axes=(0, 0))
    if conv.padding:
        gin = gin[:, conv.padding:-conv.padding or None,
                  conv.padding:-conv.padding or None]
    return gin.reshape(-1)


def lower_conv_to_dense(conv: Conv2DLayer) -> DenseLayer:
    """Equivalent (sparse, stored dense) matrix form of a conv layer."""
    c, h, w = conv.in_shape
    oc, oh, ow = conv.out_shape
    kh, kw = conv.kernels.shape[2], conv.kernels.shape[3]
    W = np.zeros((oc * oh * ow, c * h * w))
    b = np.zeros(oc * oh * ow)
    for o in range(oc):
        for i in range(oh):
            for j in range(ow):
                row = (o * oh + i) * ow + j
                b[row] = conv.bias[o]
                for ci in range(c):
                    for ki in range(kh):
                        ii = i * conv.stride + ki - conv.padding
                        if ii < 0 or ii >= h:
                            continue
                        for kj in range(kw):
                            jj = j * conv.stride + kj - conv.padding
                            if jj < 0 or jj >= w:
                                continue
                            W[row, (ci * h + ii) * w + jj] = conv.kernels[o, ci, ki, kj]
    return DenseLayer(W, b)


def lower_all_convs(net: Network) -> Network:
    """Copy of the network with every conv layer lowered to dense form."""
    layers = [lower_conv_to_dense(l) if isinstance(l, Conv2DLayer) else l
              for l in net.layers]
    if isinstance(net, PolyNetwork):
        return PolyNetwork(tuple(layers), net.input_lo, net.input_hi,
                           net.designed_lo, net.designed_hi, net.eps)
    return Network(tuple(layers), net.input_lo, net.input_hi)


# -- datasets --------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    rows: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError("dataset rows must be a 2-d array")
        object.__setattr__(self, "rows", rows)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape[0] != rows.shape[0]:
                raise ValueError("label count does not match row count")
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.rows.shape[0]

    def check_domain(self, net: Network):
        for i, row in enumerate(self.rows):
            if not net.in_domain(row, slack=1e-12):
                raise ValueError(f"dataset row {i} lies outside the input domain")


# -- text serialization ----------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_vec(v) -> str:
    return " ".join(_fmt(x) for x in np.asarray(v, dtype=np.float64).ravel())


def save_network(net: Network, path=None) -> str:
    """Serialize to the documented text format; returns the text."""
    out = io.StringIO()
    out.write("polycert-network 1\n")
    out.write(f"inputs {net.in_dim}\n")
    out.write("domain\n")
    for lo, hi in zip(net.input_lo, net.input_hi):
        out.write(f"{_fmt(lo)} {_fmt(hi)}\n")
    for layer in net.layers:
        if isinstance(layer, DenseLayer):
            out.write(f"layer dense {layer.out_dim} {layer.in_dim}\n")
            for row in layer.W:
                out.write(_fmt_vec(row) + "\n")
            out.write("bias " + _fmt_vec(layer.b) + "\n")
        elif isinstance(layer, Conv2DLayer):
            oc, ic, kh, kw = layer.kernels.shape
            c, h, w = layer.in_shape
            out.write(f"layer conv {oc} {ic} {kh} {kw} {layer.stride} "
                      f"{layer.padding} {c} {h} {w}\n")
            out.write(_fmt_vec(layer.kernels) + "\n")
            out.write("bias " + _fmt_vec(layer.bias) + "\n")
        elif isinstance(layer, ActivationLayer):
            out.write(f"layer activation {layer.act.kind} {_fmt(layer.act.alpha)}\n")
        else:
            raise NetworkFormatError(
                "plain network files cannot hold polynomial layers; "
                "use save_polynetwork")
    text = out.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self) -> str:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise NetworkFormatError("unexpected end of file")

    def peek(self) -> str | None:
        pos = self.pos
        while pos < len(self.lines):
            line = self.lines[pos].strip()
            if line:
                return line
            pos += 1
        return None

    def done(self) -> bool:
        return self.peek() is None


def _parse_floats(s: str, count: int | None = None) -> np.ndarray:
    try:
        v = np.array([float(tok) for tok in s.split()])
    except ValueError as exc:
        raise NetworkFormatError(f"bad numeric line: {s!r}") from exc
    if count is not None and v.size != count:
        raise NetworkFormatError(f"expected {count} numbers, got {v.size}")
    return v


def _load_common(lines: _Lines):
    header = lines.next()
    if not header.startswith("polycert-network"):
        raise NetworkFormatError(f"bad header: {header!r}")
    tok = lines.next().split()
    if tok[0] != "inputs":
        raise NetworkFormatError("expected 'inputs <n>'")
    n_in = int(tok[1])
    if lines.next() != "domain":
        raise NetworkFormatError("expected 'domain'")
    lo = np.empty(n_in)
    hi = np.empty(n_in)
    for i in range(n_in):
        v = _parse_floats(lines.next(), 2)
        lo[i], hi[i] = v
    return n_in, lo, hi


def _parse_layers(lines: _Lines, poly_reader=None):
    layers = []
    while not lines.done():
        head = lines.peek()
        if not head.startswith("layer "):
            break
        tok = lines.next().split()
        kind = tok[1]
        if kind == "dense":
            outd, ind = int(tok[2]), int(tok[3])
            W = np.stack([_parse_floats(lines.next(), ind) for _ in range(outd)])
            btok = lines.next().split(maxsplit=1)
            if btok[0] != "bias":
                raise NetworkFormatError("expected 'bias ...' after dense weights")
            b = _parse_floats(btok[1], outd)
            layers.append(DenseLayer(W, b))
        elif kind == "conv":
            oc, ic, kh, kw, stride, padding, c, h, w = (int(t) for t in tok[2:11])
            k = _parse_floats(lines.next(), oc * ic * kh * kw).reshape(oc, ic, kh, kw)
            btok = lines.next().split(maxsplit=1)
            if btok[0] != "bias":
                raise NetworkFormatError("expected 'bias ...' after conv kernels")
            b = _parse_floats(btok[1], oc)
            layers.append(Conv2DLayer(k, b, stride, padding, (c, h, w)))
        elif kind == "activation":
            layers.append(ActivationLayer(activation_from_name(tok[2], float(tok[3]))))
        elif kind == "poly" and poly_reader is not None:
            layers.append(poly_reader(tok, lines))
        else:
            raise NetworkFormatError(f"unknown layer kind {kind!r}")
    return layers


def load_network(text_or_path: str, from_path: bool = False) -> Network:
    if from_path:
        with open(text_or_path) as fh:
            text = fh.read()
    else:
        text = text_or_path
    lines = _Lines(text)
    n_in, lo, hi = _load_common(lines)
    layers = _parse_layers(lines)
    if not lines.done():
        raise NetworkFormatError(f"trailing content: {lines.peek()!r}")
    return Network(tuple(layers), lo, hi)


def save_polynetwork(pnet: PolyNetwork, path=None) -> str:
    """Serialize a polynomial network with its designed ranges and bounds."""
    out = io.StringIO()
    out.write("polycert-network 1\n")
    out.write(f"inputs {pnet.in_dim}\n")
    out.write("domain\n")
    for lo, hi in zip(pnet.input_lo, pnet.input_hi):
        out.write(f"{_fmt(lo)} {_fmt(hi)}\n")
    for layer in pnet.layers:
        if isinstance(layer, DenseLayer):
            out.write(f"layer dense {layer.out_dim} {layer.in_dim}\n")
            for row in layer.W:
                out.write(_fmt_vec(row) + "\n")
            out.write("bias " + _fmt_vec(layer.b) + "\n")
        elif isinstance(layer, Conv2DLayer):
            oc, ic, kh, kw = layer.kernels.shape
            c, h, w = layer.in_shape
            out.write(f"layer conv {oc} {ic} {kh} {kw} {layer.stride} "
                      f"{layer.padding} {c} {h} {w}\n")
            out.write(_fmt_vec(layer.kernels) + "\n")
            out.write("bias " + _fmt_vec(layer.bias) + "\n")
        elif isinstance(layer, PolyActivationLayer):
            cap0 = layer.polys[0]
            act = cap0.activation
            out.write(f"layer poly {layer.width} {act.kind} {_fmt(act.alpha)} "
                      f"{len(layer.polys)}\n")
            for cap in layer.polys:
                out.write("poly "
                          f"{_fmt(cap.eps_pi)} {_fmt(cap.eps_q)} "
                          f"{_fmt(cap.eps_q_target)} {cap.piece_degree} "
                          f"{_fmt(cap.pi.domain.lo)} {_fmt(cap.pi.domain.hi)} "
                          + _fmt_vec(cap.pi.coeffs) + "\n")
        else:
            raise NetworkFormatError(
                "polynomial network files cannot hold raw activations")
    for idx in sorted(pnet.designed_lo.keys()):
        lo = pnet.designed_lo[idx]
        hi = pnet.designed_hi[idx]
        eps = pnet.eps[idx]
        out.write(f"ranges {idx} {lo.size}\n")
        for a, b, e in zip(lo, hi, eps):
            out.write(f"{_fmt(a)} {_fmt(b)} {_fmt(e)}\n")
    text = out.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_polynetwork(text_or_path: str, from_path: bool = False) -> PolyNetwork:
    from .approx import CertifiedActivationPoly  # deferred: avoids cycle

    if from_path:
        with open(text_or_path) as fh:
            text = fh.read()
    else:
        text = text_or_path
    lines = _Lines(text)
    n_in, lo, hi = _load_common(lines)

    def read_poly(tok, lines):
        width = int(tok[2])
        act = activation_from_name(tok[3], float(tok[4]))
        count = int(tok[5])
        polys = []
        for _ in range(count):
            ptok = lines.next().split()
            if ptok[0] != "poly":
                raise NetworkFormatError("expected 'poly ...' rows")
            eps_pi, eps_q, eps_q_target = (float(t) for t in ptok[1:4])
            piece_degree = int(ptok[4])
            dom = Interval(float(ptok[5]), float(ptok[6]))
            coeffs = np.array([float(t) for t in ptok[7:]])
            polys.append(CertifiedActivationPoly(
                act, ChebPoly(coeffs, dom), eps_pi, eps_q,
                eps_q_target, piece_degree))
        return PolyActivationLayer(tuple(polys), width)

    layers = _parse_layers(lines, poly_reader=read_poly)
    designed_lo = {}
    designed_hi = {}
    eps = {}
    while not lines.done():
        tok = lines.next().split()
        if tok[0] != "ranges":
            raise NetworkFormatError(f"unexpected line: {' '.join(tok)!r}")
        idx, width = int(tok[1]), int(tok[2])
        a = np.empty(width)
        b = np.empty(width)
        e = np.empty(width)
        for j in range(width):
            v = _parse_floats(lines.next(), 3)
            a[j], b[j], e[j] = v
        designed_lo[idx], designed_hi[idx], eps[idx] = a, b, e
    return PolyNetwork(tuple(layers), lo, hi, designed_lo, designed_hi, eps)


def save_dataset(ds: Dataset, path=None) -> str:
    out = io.StringIO()
    out.write("polycert-dataset 1\n")
    out.write(f"columns {ds.rows.shape[1]}\n")
    out.write(f"labels {0 if ds.labels is None else 1}\n")
    for i, row in enumerate(ds.rows):
        line = _fmt_vec(row)
        if ds.labels is not None:
            line += " " + _fmt(float(ds.labels[i]))
        out.write(line + "\n")
    text = out.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_dataset(text_or_path: str, from_path: bool = False,
                 net: Network | None = None) -> Dataset:
    if from_path:
        with open(text_or_path) as fh:
            text = fh.read()
    else:
        text = text_or_path
    lines = _Lines(text)
    if not lines.next().startswith("polycert-dataset"):
        raise NetworkFormatError("bad dataset header")
    ncols = int(lines.next().split()[1])
    has_labels = int(lines.next().split()[1]) == 1
    rows = []
    labels = [] if has_labels else None
    while not lines.done():
        v = _parse_floats(lines.next(), ncols + (1 if has_labels else 0))
        rows.append(v[:ncols])
        if has_labels:
            labels.append(v[ncols])
    ds = Dataset(np.array(rows), np.array(labels) if has_labels else None)
    if net is not None:
        ds.check_domain(net)
    return ds
