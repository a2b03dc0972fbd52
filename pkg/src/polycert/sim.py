"""Fixed-point simulator for compiled circuits under CKKS arithmetic
semantics: slot vectors with a scaling factor, a modulus chain consumed by
rescaling, cyclic rotations, and explicit wraparound failure.

The simulator tracks real-valued slots plus a symbolic (scale, modulus)
budget instead of ring polynomials.  After every operation the magnitude
|value| * 2^scale is compared against half the remaining modulus; exceeding
it applies a centered modular reduction to the slots and marks the
ciphertext corrupted, which is sticky and surfaces as a failure value when
the circuit output is decoded.  Wraparound is judged per slot magnitude, not
by a ring-norm, which is a documented fidelity simplification.

Multiplications double the scale and are followed by a rescale that consumes
one chain level and restores the scale (quantizing the slots at the restored
scale).  Additions, rotations, and small-integer scalings are depth-free.
An optional zero-mean gaussian noise of std 2^(std_bits - scale_bits) is
injected per homomorphic op to mimic accumulated encryption noise.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import (CKKSParams, CircuitCheb, CircuitConv, CircuitDesc,
                      CircuitLinear, MAX_CHEB_DEGREE, cheb_table_depth,
                      encoding_modes, pack_dense, ps_plan)
from .network import Conv2DLayer, lower_conv_to_dense


class DepthExhausted(RuntimeError):
    """A multiplication was attempted at level 0 (parameter/compiler bug)."""


@dataclass(frozen=True)
class FailureValue:
    """The explicit failure output of a corrupted run."""

    first_failing_op: int
    layer: int

    def __repr__(self):
        return f"BOTTOM(op={self.first_failing_op}, layer={self.layer})"


@dataclass
class SimCiphertext:
    slots: np.ndarray
    scale_bits: float
    level: int
    corrupted: bool = False
    max_abs_log2: float = -math.inf


@dataclass
class SimContext:
    params: CKKSParams
    noise_std_bits: float | None = None  # None disables noise injection
    seed: int = 0
    collect_trace: bool = False


class Simulator:
    """Stateful executor; one instance per run keeps op accounting simple."""

    def __init__(self, ctx: SimContext):
        self.ctx = ctx
        p = ctx.params
        self.slot_count = p.slot_count
        self.chain = tuple(p.modulus_chain_bits)
        self.scale_bits = p.scale_bits
        self.top_level = len(self.chain) - 1
        self.q_bits = self.chain[1] if len(self.chain) > 1 else self.chain[0]
        self.rng = np.random.default_rng(ctx.seed)
        self.op_index = 0
        self.first_failure: tuple[int, int] | None = None
        self.current_layer = -1
        self.trace: list[str] = []
        self.nonscalar_mults = 0

    # -- bookkeeping -------------------------------------------------------

    def _remaining_bits(self, level: int) -> float:
        return float(sum(self.chain[: level + 1]))

    def _noise(self, ct: SimCiphertext):
        if self.ctx.noise_std_bits is not None:
            std = 2.0 ** (self.ctx.noise_std_bits - ct.scale_bits)
            ct.slots = ct.slots + self.rng.normal(0.0, std, self.slot_count)

    def _finish_op(self, ct: SimCiphertext, name: str) -> SimCiphertext:
        """Update the magnitude bound, decide wraparound, log the op."""
        self.op_index += 1
        finite = np.isfinite(ct.slots)
        if np.all(finite):
            mx = float(np.max(np.abs(ct.slots))) if ct.slots.size else 0.0
            ct.max_abs_log2 = (math.log2(mx) if mx > 0.0 else -math.inf) + ct.scale_bits
        else:
            ct.max_abs_log2 = math.inf
        budget = self._remaining_bits(ct.level)
        if ct.max_abs_log2 >= budget - 1.0:
            modulus = 2.0 ** budget
            raw = ct.slots * 2.0 ** ct.scale_bits
            with np.errstate(invalid="ignore"):
                wrapped = np.mod(raw + 0.5 * modulus, modulus) - 0.5 * modulus
            wrapped[~np.isfinite(wrapped)] = 0.0
            ct.slots = wrapped / 2.0 ** ct.scale_bits
            ct.corrupted = True
        if ct.corrupted and self.first_failure is None:
            self.first_failure = (self.op_index, self.current_layer)
        if self.ctx.collect_trace:
            self.trace.append(
                f"op {self.op_index} {name} level={ct.level} "
                f"scale={ct.scale_bits:g} max_abs_log2={ct.max_abs_log2:.2f} "
                f"corrupted={int(ct.corrupted)}")
        return ct

    def _quantize(self, v: np.ndarray, scale_bits: float) -> np.ndarray:
        s = 2.0 ** scale_bits
        with np.errstate(invalid="ignore", over="ignore"):
            out = np.round(v * s) / s
        bad = ~np.isfinite(out)
        if np.any(bad):
            out[bad] = v[bad]
        return out

    # -- primitive ops -----------------------------------------------------

    def encode_input(self, x: np.ndarray) -> SimCiphertext:
        x = np.asarray(x, dtype=np.float64)
        if x.size > self.slot_count:
            raise ValueError(f"input of {x.size} values exceeds {self.slot_count} slots")
        slots = np.zeros(self.slot_count)
        slots[: x.size] = x
        ct = SimCiphertext(self._quantize(slots, self.scale_bits),
                           float(self.scale_bits), self.top_level)
        return self._finish_op(ct, "encode")

    def encode_plain(self, v: np.ndarray) -> np.ndarray:
        """Quantized plaintext slot vector (no ciphertext bookkeeping)."""
        full = np.zeros(self.slot_count)
        full[: v.size] = v
        return self._quantize(full, self.scale_bits)

    def _align(self, a: SimCiphertext, b: SimCiphertext):
        """Common level for a binary op: the lower operand level.

        Dropping a fresh copy of the higher operand to the lower level is
        free; the operands themselves keep their levels so shared ciphertexts
        (baby/giant steps) can be reused.
        """
        if a.scale_bits != b.scale_bits:
            raise ValueError("operands carry different scales")
        return min(a.level, b.level)

    def add(self, a: SimCiphertext, b: SimCiphertext) -> SimCiphertext:
        lvl = self._align(a, b)
        ct = SimCiphertext(a.slots + b.slots, a.scale_bits, lvl,
                           a.corrupted or b.corrupted)
        self._noise(ct)
        return self._finish_op(ct, "add")

    def sub(self, a: SimCiphertext, b: SimCiphertext) -> SimCiphertext:
        lvl = self._align(a, b)
        ct = SimCiphertext(a.slots - b.slots, a.scale_bits, lvl,
                           a.corrupted or b.corrupted)
        self._noise(ct)
        return self._finish_op(ct, "sub")

    def add_plain(self, a: SimCiphertext, v: np.ndarray) -> SimCiphertext:
        ct = SimCiphertext(a.slots + self._quantize(v, a.scale_bits),
                           a.scale_bits, a.level, a.corrupted)
        self._noise(ct)
        return self._finish_op(ct, "add_plain")

    def add_const(self, a: SimCiphertext, c: float) -> SimCiphertext:
        ct = SimCiphertext(a.slots + c, a.scale_bits, a.level, a.corrupted)
        self._noise(ct)
        return self._finish_op(ct, "add_const")

    def scale_int(self, a: SimCiphertext, k: int) -> SimCiphertext:
        """Multiplication by a small integer constant: exact and depth-free."""
        ct = SimCiphertext(a.slots * k, a.scale_bits, a.level, a.corrupted)
        return self._finish_op(ct, f"scale_int[{k}]")

    def _rescale(self, ct: SimCiphertext) -> SimCiphertext:
        ct.level -= 1
        ct.scale_bits = float(self.scale_bits)
        ct.slots = self._quantize(ct.slots, ct.scale_bits)
        return ct

    def mult(self, a: SimCiphertext, b: SimCiphertext) -> SimCiphertext:
        lvl = self._align(a, b)
        if lvl < 1:
            raise DepthExhausted("multiplication at level 0")
        self.nonscalar_mults += 1
        ct = SimCiphertext(a.slots * b.slots, a.scale_bits + b.scale_bits, lvl,
                           a.corrupted or b.corrupted)
        self._noise(ct)
        ct = self._finish_op(ct, "mult")
        return self._finish_op(self._rescale(ct), "rescale")

    def mult_plain(self, a: SimCiphertext, v: np.ndarray) -> SimCiphertext:
        if a.level < 1:
            raise DepthExhausted("plaintext multiplication at level 0")
        pv = self._quantize(v, self.scale_bits)
        ct = SimCiphertext(a.slots * pv, a.scale_bits + self.scale_bits,
                           a.level, a.corrupted)
        self._noise(ct)
        ct = self._finish_op(ct, "mult_plain")
        return self._finish_op(self._rescale(ct), "rescale")

    def rotate(self, a: SimCiphertext, k: int) -> SimCiphertext:
        """Cyclic left rotation: slot s takes the value of slot s+k."""
        ct = SimCiphertext(np.roll(a.slots, -k), a.scale_bits, a.level,
                           a.corrupted)
        self._noise(ct)
        return self._finish_op(ct, f"rotate[{k}]")

    # -- linear layers -----------------------------------------------------

    def eval_linear_expanded(self, ct: SimCiphertext, packed_w: np.ndarray,
                             packed_b: np.ndarray, n: int) -> SimCiphertext:
        """W x + b for expanded input; output repeated; consumes 1 level."""
        if n & (n - 1):
            raise ValueError("packed dimension must be a power of two")
        r = self.mult_plain(ct, self._tile(packed_w))
        for i in range(n.bit_length() - 1):
            r = self.add(r, self.rotate(r, n * (1 << i)))
        return self.add_plain(r, self._tile(packed_b))

    def eval_linear_repeated(self, ct: SimCiphertext, packed_w: np.ndarray,
                             packed_b: np.ndarray, n: int) -> SimCiphertext:
        """W x + b for repeated input; output expanded; consumes 2 levels."""
        if n & (n - 1):
            raise ValueError("packed dimension must be a power of two")
        r = self.mult_plain(ct, self._tile(packed_w))
        for i in range(n.bit_length() - 1):
            r = self.add(r, self.rotate(r, 1 << i))
        mask = np.zeros(n * n)
        mask[::n] = 1.0
        r = self.mult_plain(r, self._tile(mask))
        for i in range(n.bit_length() - 1):
            r = self.add(r, self.rotate(r, -(1 << i)))
        return self.add_plain(r, self._tile(packed_b))

    def _tile(self, pattern: np.ndarray) -> np.ndarray:
        reps = self.slot_count // pattern.size
        if reps * pattern.size != self.slot_count:
            raise ValueError("packing does not divide the slot count")
        return np.tile(pattern, reps)

    # -- batched Chebyshev evaluation ---------------------------------------

    def eval_chebyshev_batch(self, ct: SimCiphertext, coeff_slots: np.ndarray,
                             lo_slots: np.ndarray, hi_slots: np.ndarray,
                             degree: int):
        """Evaluate a per-slot Chebyshev series at every slot.

        coeff_slots is (slot_count, degree+1): slot s evaluates its own series
        sum_k coeff_slots[s, k] T_k(t_s) where t_s is the affine image of the
        slot value on [-1, 1] per lo/hi.  Scalar coefficient multiplications
        are slotwise plaintext products, so heterogeneous coefficients cost
        the same as a broadcast constant.  Returns (ciphertext,
        nonscalar_mult_count); level use is 1 (affine map) + the table depth.
        """
        if degree > MAX_CHEB_DEGREE:
            raise ValueError(f"degree {degree} exceeds {MAX_CHEB_DEGREE}")
        if degree == 0:
            out = SimCiphertext(self._quantize(coeff_slots[:, 0].astype(float),
                                               ct.scale_bits),
                                ct.scale_bits, ct.level, ct.corrupted)
            return self._finish_op(out, "cheb_const"), 0
        start_mults = self.nonscalar_mults
        span = hi_slots - lo_slots
        span = np.where(span > 0.0, span, 1.0)
        t = self.mult_plain(ct, 2.0 / span)
        t = self.add_plain(t, -(hi_slots + lo_slots) / span)
        if degree == 1:
            out = self.mult_plain(t, coeff_slots[:, 1])
            out = self.add_plain(out, coeff_slots[:, 0])
            return out, self.nonscalar_mults - start_mults
        if degree == 2:
            t2 = self.add_const(self.scale_int(self.mult(t, t), 2), -1.0)
            out = self.add(self.mult_plain(t2, coeff_slots[:, 2]),
                           self.mult_plain(t, coeff_slots[:, 1]))
            out = self.add_plain(out, coeff_slots[:, 0])
            return out, self.nonscalar_mults - start_mults

        k, m = ps_plan(degree)
        ncols = k * (1 << m) + 1
        C = np.zeros((self.slot_count, ncols))
        C[:, : degree + 1] = coeff_slots[:, : degree + 1]

        # baby steps T_1..T_k and giant steps T_{k*2^j}
        T: dict[int, SimCiphertext] = {1: t}
        for i in range(2, k + 1):
            a = i // 2
            b = i - a
            prod = self.scale_int(self.mult(T[a], T[b]), 2)
            if b == a:
                T[i] = self.add_const(prod, -1.0)
            else:  # b - a == 1: 2 T_a T_b = T_{a+b} + T_1
                T[i] = self.sub(prod, T[1])
        G = [T[k]]
        for _ in range(1, m):
            G.append(self.add_const(self.scale_int(self.mult(G[-1], G[-1]), 2), -1.0))

        def eval_tree(Cnode: np.ndarray, level: int) -> SimCiphertext:
            # handles series of degree <= k * 2^level; structure is forced so
            # the level consumption only depends on the plan, not the values
            if level == 0:
                acc = self.mult_plain(T[1], Cnode[:, 1])
                for i in range(2, k + 1):
                    acc = self.add(acc, self.mult_plain(T[i], Cnode[:, i]))
                return self.add_plain(acc, Cnode[:, 0])
            N = k * (1 << (level - 1))
            top = min(Cnode.shape[1] - 1, 2 * N)
            Cq = np.zeros((self.slot_count, N + 1))
            Cr = Cnode[:, : N + 1].copy()
            for i in range(N + 1, top + 1):
                Cq[:, i - N] = 2.0 * Cnode[:, i]
                Cr[:, 2 * N - i] -= Cnode[:, i]
            qv = eval_tree(Cq, level - 1)
            rv = eval_tree(Cr, level - 1)
            return self.add(self.mult(G[level - 1], qv), rv)

        out = eval_tree(C, m)
        return out, self.nonscalar_mults - start_mults


# -- circuit execution ---------------------------------------------------------

def _circuit_pack_dim(desc: CircuitDesc) -> int:
    n = 1
    for layer in desc.layers:
        if isinstance(layer, CircuitLinear):
            n = max(n, layer.n)
        elif isinstance(layer, CircuitConv):
            ih, iw, oh, ow = layer.io_shape
            dim = max(layer.in_channels * ih * iw, layer.out_channels * oh * ow)
            n = max(n, 1 << max(0, (dim - 1)).bit_length())
        else:
            n = max(n, 1 << max(0, (layer.rows - 1)).bit_length())
    return n


def _conv_dense(layer: CircuitConv):
    conv = Conv2DLayer(layer.kernels.reshape(layer.out_channels,
                                             layer.in_channels,
                                             *layer.kernel_shape),
                       layer.bias, layer.stride, layer.padding,
                       (layer.in_channels, layer.io_shape[0], layer.io_shape[1]))
    dense = lower_conv_to_dense(conv)
    return dense.W, dense.b


def _slot_rows(mode: str, n: int, slot_count: int) -> np.ndarray:
    s = np.arange(slot_count) % (n * n)
    return s // n if mode == "expanded" else s % n


def _cheb_slot_tables(layer: CircuitCheb, mode: str, n: int, width: int,
                      slot_count: int):
    rows = layer.coeff_matrix()
    deg1 = rows.shape[1]
    table = np.zeros((n + 1, deg1))
    lo = np.full(n + 1, -1.0)
    hi = np.full(n + 1, 1.0)
    if layer.rows == 1:  # uniform: broadcast to every live neuron
        table[:width] = rows[0]
        lo[:width] = layer.lo[0]
        hi[:width] = layer.hi[0]
    else:
        if layer.rows < width:
            raise ValueError("chebyshev tuple narrower than the layer width")
        table[:width] = rows[:width]
        lo[:width] = layer.lo[:width]
        hi[:width] = layer.hi[:width]
    idx = _slot_rows(mode, n, slot_count)
    idx = np.where(idx >= n, n, idx)  # defensive; idx < n by construction
    return table[idx], lo[idx], hi[idx]


@dataclass
class RunRecord:
    """Per-run accounting: consumed levels, any failure, the op trace."""

    levels_consumed: int
    corrupted: bool
    first_failure: tuple[int, int] | None
    nonscalar_mults: int
    trace: tuple = ()

    def trace_text(self) -> str:
        out = io.StringIO()
        for line in self.trace:
            out.write(line + "\n")
        return out.getvalue()


def run_many(desc: CircuitDesc, X: np.ndarray, ctx: SimContext):
    """Execute the circuit on each input row.

    Returns (outputs, records): outputs[i] is the decoded vector or a
    FailureValue; records[i] carries level accounting and the optional op
    trace.  Rows are independent runs with per-row derived seeds.
    """
    modes = desc.validate()
    n = _circuit_pack_dim(desc)
    if n * n > ctx.params.slot_count:
        raise ValueError("circuit packing exceeds the slot count")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    outputs = []
    records = []
    conv_cache = {}
    for row_i, x in enumerate(X):
        sim = Simulator(SimContext(ctx.params, ctx.noise_std_bits,
                                   ctx.seed + row_i, ctx.collect_trace))
        expanded = np.repeat(np.pad(x, (0, n - x.size)), n)
        ct = sim.encode_input(np.tile(expanded, ctx.params.slot_count // (n * n)))
        cur_width = x.size
        for li, (layer, mode) in enumerate(zip(desc.layers, modes)):
            sim.current_layer = li
            if isinstance(layer, CircuitLinear):
                if layer.n != n:
                    raise ValueError("linear packing dimension mismatch")
                if mode == "expanded":
                    ct = sim.eval_linear_expanded(ct, layer.weights, layer.bias, n)
                else:
                    ct = sim.eval_linear_repeated(ct, layer.weights, layer.bias, n)
                cur_width = layer.shape[0]
            elif isinstance(layer, CircuitConv):
                if li not in conv_cache:
                    W, b = _conv_dense(layer)
                    conv_cache[li] = (pack_dense(W, b, n, "expanded"),
                                      pack_dense(W, b, n, "repeated"))
                packed = conv_cache[li][0 if mode == "expanded" else 1]
                if mode == "expanded":
                    ct = sim.eval_linear_expanded(ct, packed[0], packed[1], n)
                else:
                    ct = sim.eval_linear_repeated(ct, packed[0], packed[1], n)
                cur_width = layer.out_channels * layer.io_shape[2] * layer.io_shape[3]
            else:
                coeffs, lo, hi = _cheb_slot_tables(layer, mode, n, cur_width,
                                                   ctx.params.slot_count)
                ct, _ = sim.eval_chebyshev_batch(ct, coeffs, lo, hi, layer.degree)
        if ct.corrupted:
            op, layer_i = sim.first_failure if sim.first_failure else (sim.op_index, -1)
            outputs.append(FailureValue(op, layer_i))
        else:
            if _out_mode(desc, modes) == "expanded":
                y = ct.slots[np.arange(cur_width) * n]
            else:
                y = ct.slots[: cur_width]
            outputs.append(y.copy())
        records.append(RunRecord(sim.top_level - ct.level, ct.corrupted,
                                 sim.first_failure, sim.nonscalar_mults,
                                 tuple(sim.trace)))
    return outputs, records


def _out_mode(desc: CircuitDesc, modes: list[str]) -> str:
    """Encoding of the circuit output (the last layer's output encoding)."""
    mode = modes[-1]
    if isinstance(desc.layers[-1], (CircuitLinear, CircuitConv)):
        return "repeated" if mode == "expanded" else "expanded"
    return mode


def run_circuit(desc: CircuitDesc, x: np.ndarray, ctx: SimContext):
    """Execute on one input; returns (output-or-FailureValue, RunRecord)."""
    outs, recs = run_many(desc, np.asarray(x)[None, :], ctx)
    return outs[0], recs[0]
