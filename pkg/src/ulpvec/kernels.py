"""Direct 2D convolution kernels for the vector machine.

Every vectorized kernel follows the same output-stationary, slide-based
dataflow: ``Fh`` accumulator registers hold partially computed output rows,
each input row is loaded once per (packed) channel, and after each kernel
column the row is slid down by one element.  Register roles rotate after
every input row, so the oldest accumulator is stored and recycled.

Variants:

* ``int16``   -- one value per 16-bit element, ``vmacc.vx``.
* ``native``  -- ULPPACK P1 operands, ``vmacc.vx`` into local accumulators,
  extracted with ``vsrl``/``vadd`` every ``budget`` products.
* ``vmacsr``  -- ULPPACK P1 operands, fused ``vmacsr.vx``.

Runtime packing runs on the machine too and is charged under the ``pack``
phase of the returned counters; convolution proper is the ``conv`` phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .packing import (
    PackingRangeError,
    Precision,
    QuantTensor,
    pack_p1,
    pad_channels,
    paper_budget,
    region_violation,
    safe_accum_budget,
)
from .vmachine import Instruction, MachineConfigError, PerfCounters, VectorMachine

VARIANTS = ("oracle", "int16", "native", "vmacsr")


class RegionError(ValueError):
    """Precision configuration outside the overflow-free region."""


@dataclass(frozen=True)
class ConvShape:
    channels: int
    height: int
    width: int
    kh: int
    kw: int

    def __post_init__(self):
        if min(self.channels, self.height, self.width, self.kh, self.kw) < 1:
            raise ValueError(f"all dimensions must be positive: {self}")
        if self.kh > self.height or self.kw > self.width:
            raise ValueError(f"kernel {self.kh}x{self.kw} larger than input {self.height}x{self.width}")

    @property
    def out_height(self) -> int:
        return self.height - self.kh + 1

    @property
    def out_width(self) -> int:
        return self.width - self.kw + 1

    @property
    def macs(self) -> int:
        return self.channels * self.kh * self.kw * self.out_height * self.out_width

    @classmethod
    def of(cls, inp: QuantTensor, ker: QuantTensor) -> "ConvShape":
        c, h, w = inp.shape
        kc, kh, kw = ker.shape
        if kc != c:
            raise ValueError(f"kernel has {kc} channels, input has {c}")
        return cls(c, h, w, kh, kw)


@dataclass
class ConvRun:
    shape: ConvShape
    precision: Precision | None
    variant: str
    elem_bits: int
    output: np.ndarray
    counters: PerfCounters = field(default_factory=PerfCounters)
    budget: int | None = None
    budget_policy: str = "conservative"
    prepacked_weights: bool = False
    oracle: np.ndarray | None = None
    overflow: list = field(default_factory=list)

    @property
    def sew(self) -> int:
        return self.elem_bits

    @property
    def modular_match(self) -> bool | None:
        if self.oracle is None:
            return None
        return bool(np.array_equal(self.output, self.oracle % (1 << self.sew)))

    @property
    def exact(self) -> bool | None:
        if self.oracle is None:
            return None
        return bool(np.array_equal(self.output, self.oracle))

    def first_mismatch(self):
        if self.oracle is None:
            return None
        diff = np.argwhere(self.output != self.oracle % (1 << self.sew))
        if not len(diff):
            return None
        y, x = (int(v) for v in diff[0])
        return (y, x), int(self.output[y, x]), int(self.oracle[y, x])


def _check_shape(inp: QuantTensor, ker: QuantTensor, shape: ConvShape | None) -> ConvShape:
    derived = ConvShape.of(inp, ker)
    if shape is not None and shape != derived:
        raise ValueError(f"tensor shapes {inp.shape}/{ker.shape} do not match {shape}")
    return derived


def conv2d_oracle(inp: QuantTensor, ker: QuantTensor, shape: ConvShape | None = None) -> np.ndarray:
    """Valid, stride-1 direct convolution in int64; returns (outH, outW)."""
    s = _check_shape(inp, ker, shape)
    x = inp.as_array().astype(np.int64)
    k = ker.as_array().astype(np.int64)
    out = np.zeros((s.out_height, s.out_width), dtype=np.int64)
    for i in range(s.kh):
        for j in range(s.kw):
            window = x[:, i: i + s.out_height, j: j + s.out_width]
            out += np.tensordot(k[:, i, j], window, axes=1)
    return out


def overflow_monitor(oracle: np.ndarray, sew: int) -> list[tuple[tuple[int, int], int]]:
    """Positions whose true value does not fit a ``sew``-bit accumulator."""
    hits = np.argwhere(oracle >= (1 << sew))
    return [((int(y), int(x)), int(oracle[y, x])) for y, x in hits]


# -- memory layout -------------------------------------------------------------

def _align(n, a=64):
    return (n + a - 1) // a * a


@dataclass(frozen=True)
class _Layout:
    const: int
    inp: int
    ker: int
    pinp: int
    pker: int
    out: int
    end: int


def _layout(shape: ConvShape, chans: int, elem_bytes: int) -> _Layout:
    pchans = chans // 2
    in_sz = chans * shape.height * shape.width * elem_bytes
    k_sz = chans * shape.kh * shape.kw * elem_bytes
    const = 0
    inp = _align(const + 8)
    ker = _align(inp + in_sz)
    pinp = _align(ker + k_sz)
    pker = _align(pinp + pchans * shape.height * shape.width * elem_bytes)
    out = _align(pker + pchans * shape.kh * shape.kw * elem_bytes)
    end = _align(out + shape.out_height * shape.width * elem_bytes)
    return _Layout(const, inp, ker, pinp, pker, out, end)


# -- program generators -------------------------------------------------------

def _pack_rows_program(src, dst, nrows, row_len, ebytes, sew, vlmax, weight):
    """Pack consecutive row pairs: ``dst[k] = lo + 2**(sew/2) * hi``.

    Row ``2k`` / ``2k+1`` are the even / odd channel; weights swap which of
    the pair lands in the high sub-field.  ``x1`` must hold ``2**(sew/2)``.
    """
    cur_vl = None
    for k in range(nrows // 2):
        even = src + (2 * k) * row_len * ebytes
        odd = src + (2 * k + 1) * row_len * ebytes
        lo, hi = (odd, even) if weight else (even, odd)
        out = dst + k * row_len * ebytes
        for x0 in range(0, row_len, vlmax):
            vl = min(vlmax, row_len - x0)
            if vl != cur_vl:
                yield Instruction("vsetivli", imm=vl, width=sew)
                cur_vl = vl
            off = x0 * ebytes
            yield Instruction("vle", vd=1, imm=lo + off, width=sew)
            yield Instruction("vle", vd=2, imm=hi + off, width=sew)
            yield Instruction("vmacc.vx", vd=1, rs1=1, vs2=2)
            yield Instruction("vse", vd=1, imm=out + off, width=sew)


def _conv_program(shape: ConvShape, nchan, in_addr, w_addr, out_addr, sew, vlmax,
                  mode, budget=None):
    """Output-stationary slide-based convolution over ``nchan`` channels."""
    kh, kw, H, W = shape.kh, shape.kw, shape.height, shape.width
    out_h, out_w = shape.out_height, shape.out_width
    ebytes = sew // 8
    half = sew // 2
    mac = "vmacsr.vx" if mode == "vmacsr" else "vmacc.vx"
    vin = 1
    acc = list(range(2, 2 + kh))
    loc = list(range(2 + kh, 2 + 2 * kh)) if mode == "native" else []
    tmp = 2 + 2 * kh
    tile = vlmax - kw + 1
    plane = H * W * ebytes
    kplane = kh * kw * ebytes

    for ox in range(0, out_w, tile):
        n_out = min(tile, out_w - ox)
        vl = n_out + kw - 1
        yield Instruction("vsetivli", imm=vl, width=sew)
        for r in acc + loc:
            yield Instruction("vmv.v.i", vd=r)
        counts = [0] * kh

        def extract(j):
            yield Instruction("vsrl.vi", vd=tmp, vs2=loc[j], imm=half)
            yield Instruction("vadd.vv", vd=acc[j], vs1=tmp, vs2=acc[j])
            yield Instruction("vmv.v.i", vd=loc[j])
            counts[j] = 0

        for h in range(H):
            row = in_addr + h * W * ebytes + ox * ebytes
            for c in range(nchan):
                yield Instruction("vle", vd=vin, imm=row + c * plane, width=sew)
                kbase = w_addr + c * kplane
                for i in range(kw):
                    # accumulator j holds output row h-kh+1+j, so it needs kernel row kh-1-j
                    for j in range(kh):
                        yield Instruction("sload", rd=j + 1,
                                          imm=kbase + ((kh - 1 - j) * kw + i) * ebytes, width=sew)
                    for j in range(kh):
                        if mode == "native":
                            yield Instruction(mac, vd=loc[j], rs1=j + 1, vs2=vin)
                            counts[j] += 1
                            if counts[j] == budget:
                                yield from extract(j)
                        else:
                            yield Instruction(mac, vd=acc[j], rs1=j + 1, vs2=vin)
                    yield Instruction("vslidedown.vi", vd=vin, vs2=vin, imm=1)
            y = h - kh + 1
            if 0 <= y < out_h:
                if mode == "native" and counts[0]:
                    yield from extract(0)
                yield Instruction("vse", vd=acc[0], imm=out_addr + (y * W + ox) * ebytes, width=sew)
            # rotate roles: the stored register becomes the newest, zeroed accumulator
            acc.append(acc.pop(0))
            yield Instruction("vmv.v.i", vd=acc[-1])
            if mode == "native":
                loc.append(loc.pop(0))
                counts.append(counts.pop(0))
                if counts[-1]:
                    yield Instruction("vmv.v.i", vd=loc[-1])
                    counts[-1] = 0


# -- kernel drivers -----------------------------------------------------------

def _prepare(machine, shape, sew, mode):
    machine = machine or VectorMachine()
    vlmax = machine.config.vlmax(sew)
    if vlmax < shape.kw:
        raise MachineConfigError(f"VLMAX={vlmax} at SEW={sew} cannot hold a {shape.kw}-wide kernel row")
    need_v = 2 + shape.kh * (2 if mode == "native" else 1) + (1 if mode == "native" else 0)
    if need_v > VectorMachine.NREGS or shape.kh > 31:
        raise MachineConfigError(f"kernel height {shape.kh} needs more registers than available")
    return machine, vlmax


def _run_phase(machine, phase, program):
    machine.phase = phase
    machine.run(program)


def _read_output(machine, lay, shape, sew):
    raw = machine.read_array(lay.out, shape.out_height * shape.width, sew)
    return raw.reshape(shape.out_height, shape.width)[:, : shape.out_width].astype(np.int64)


def conv2d_int16(machine: VectorMachine | None, inp: QuantTensor, ker: QuantTensor,
                 shape: ConvShape | None = None):
    """16-bit baseline; returns ``(output, counters)``."""
    shape = _check_shape(inp, ker, shape)
    sew = 16
    for t in (inp, ker):
        if t.bits > 16:
            raise PackingRangeError("int16 baseline needs values that fit 16-bit elements")
    machine, vlmax = _prepare(machine, shape, sew, "int16")
    lay = _layout(shape, shape.channels, 2)
    machine.ensure_memory(lay.end)
    machine.reset_counters()
    machine.write_array(lay.inp, inp.data, sew)
    machine.write_array(lay.ker, ker.data, sew)
    _run_phase(machine, "conv", _conv_program(shape, shape.channels, lay.inp, lay.ker, lay.out,
                                              sew, vlmax, "int16"))
    return _read_output(machine, lay, shape, sew), machine.counters.copy()


def _packed_conv(machine, inp, ker, shape, prec, elem_bits, mode, budget, prepacked_weights):
    shape = _check_shape(inp, ker, shape)
    prec = prec or Precision(inp.bits, ker.bits)
    if inp.data.size and inp.data.max() > prec.act_max:
        raise PackingRangeError(f"activation values exceed {prec.act_bits} bits")
    if ker.data.size and ker.data.max() > prec.wgt_max:
        raise PackingRangeError(f"weight values exceed {prec.wgt_bits} bits")
    why = region_violation(prec, elem_bits, mode)
    if why:
        raise RegionError(f"{prec} at E={elem_bits} ({mode}): {why}")
    sew = elem_bits
    machine, vlmax = _prepare(machine, shape, sew, mode)

    pinp, pker = pad_channels(inp), pad_channels(ker)
    chans = pinp.shape[0]
    lay = _layout(shape, chans, sew // 8)
    machine.ensure_memory(lay.end)
    machine.reset_counters()
    machine.write_array(lay.const, [1 << (sew // 2)], sew)
    machine.write_array(lay.inp, pinp.data, sew)
    if prepacked_weights:
        machine.write_array(lay.pker, pack_p1(ker, elem_bits, "weight").data, sew)
    else:
        machine.write_array(lay.ker, pker.data, sew)

    def pack_program():
        yield Instruction("sload", rd=1, imm=lay.const, width=sew)
        yield from _pack_rows_program(lay.inp, lay.pinp, chans, shape.height * shape.width,
                                      sew // 8, sew, vlmax, weight=False)
        if not prepacked_weights:
            yield from _pack_rows_program(lay.ker, lay.pker, chans, shape.kh * shape.kw,
                                          sew // 8, sew, vlmax, weight=True)

    _run_phase(machine, "pack", pack_program())
    _run_phase(machine, "conv", _conv_program(shape, chans // 2, lay.pinp, lay.pker, lay.out,
                                              sew, vlmax, mode, budget))
    return _read_output(machine, lay, shape, sew), machine.counters.copy()


def resolve_budget(prec: Precision, elem_bits: int, budget: int | None = None,
                   policy: str = "conservative") -> int:
    if budget is None:
        budget = safe_accum_budget(prec, elem_bits, "native", policy)
        if budget < 1:
            raise RegionError(f"{prec} at E={elem_bits}: no safe local accumulation budget")
        return int(budget)
    ceiling = max(safe_accum_budget(prec, elem_bits, "native"), paper_budget(elem_bits))
    if not 1 <= budget <= ceiling:
        raise ValueError(f"budget must be in [1, {ceiling}] for {prec} at E={elem_bits}, got {budget}")
    return budget


def conv2d_ulppack_native(machine: VectorMachine | None, inp: QuantTensor, ker: QuantTensor,
                          shape: ConvShape | None = None, prec: Precision | None = None,
                          elem_bits: int = 8, budget: int | None = None,
                          policy: str = "conservative", prepacked_weights: bool = False):
    """ULPPACK conv with local accumulation and explicit shift/add extraction."""
    p = prec or Precision(inp.bits, ker.bits)
    why = region_violation(p, elem_bits, "native")
    if why:
        raise RegionError(f"{p} at E={elem_bits} (native): {why}")
    budget = resolve_budget(p, elem_bits, budget, policy)
    return _packed_conv(machine, inp, ker, shape, p, elem_bits, "native", budget, prepacked_weights)


def conv2d_ulppack_vmacsr(machine: VectorMachine | None, inp: QuantTensor, ker: QuantTensor,
                          shape: ConvShape | None = None, prec: Precision | None = None,
                          elem_bits: int = 8, prepacked_weights: bool = False):
    """ULPPACK conv using the fused multiply-shift-accumulate."""
    return _packed_conv(machine, inp, ker, shape, prec, elem_bits, "vmacsr", None, prepacked_weights)


def run_conv(variant: str, inp: QuantTensor, ker: QuantTensor, prec: Precision | None = None,
             elem_bits: int | None = None, budget: int | None = None,
             policy: str = "conservative", prepacked_weights: bool = False,
             machine: VectorMachine | None = None, check: bool = True) -> ConvRun:
    """Run one variant and (optionally) referee it against the oracle."""
    shape = ConvShape.of(inp, ker)
    prec = prec or Precision(min(inp.bits, 8), min(ker.bits, 8))
    if variant == "oracle":
        out = conv2d_oracle(inp, ker, shape)
        return ConvRun(shape, prec, variant, 64, out, oracle=out if check else None)
    if variant == "int16":
        elem_bits = 16
        out, ctr = conv2d_int16(machine, inp, ker, shape)
    elif variant == "native":
        elem_bits = elem_bits or 8
        budget = resolve_budget(prec, elem_bits, budget, policy) if not region_violation(
            prec, elem_bits, "native") else budget
        out, ctr = conv2d_ulppack_native(machine, inp, ker, shape, prec, elem_bits, budget,
                                         policy, prepacked_weights)
    elif variant == "vmacsr":
        elem_bits = elem_bits or 8
        out, ctr = conv2d_ulppack_vmacsr(machine, inp, ker, shape, prec, elem_bits, prepacked_weights)
    else:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    run = ConvRun(shape, prec, variant, elem_bits, out, ctr, budget=budget, budget_policy=policy,
                  prepacked_weights=prepacked_weights)
    if check:
        run.oracle = conv2d_oracle(inp, ker, shape)
        run.overflow = overflow_monitor(run.oracle, run.sew)
    return run


def random_tensor(rng: np.random.Generator, shape, bits: int) -> QuantTensor:
    return QuantTensor(shape, bits, rng.integers(0, 1 << bits, size=int(np.prod(shape))))


def max_tensor(shape, bits: int) -> QuantTensor:
    return QuantTensor(shape, bits, np.full(int(np.prod(shape)), (1 << bits) - 1))


def worst_case_output(shape: ConvShape, prec: Precision) -> int:
    """Largest possible output value for any data at ``prec``."""
    return shape.macs // (shape.out_height * shape.out_width) * prec.act_max * prec.wgt_max
