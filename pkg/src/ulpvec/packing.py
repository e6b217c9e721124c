"""ULPPACK P1 operand packing.

Two unsigned sub-byte operands share one E-bit element.  Activations are
packed low-first (``a0 + 2**(E/2) * a1``), weights high-first
(``w1 + 2**(E/2) * w0``), so a single non-widening multiply leaves the
two-way dot product ``a0*w0 + a1*w1`` in bits ``[E/2, E)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ELEM_WIDTHS = (8, 16)
OPERANDS_PER_ELEM = 2
UNBOUNDED = math.inf

ROLES = ("activation", "weight")
MODES = ("native", "vmacsr")
BUDGET_POLICIES = ("conservative", "paper")


class PackingRangeError(ValueError):
    """A value does not fit the declared bit precision or sub-field."""


@dataclass(frozen=True)
class Precision:
    act_bits: int
    wgt_bits: int

    def __post_init__(self):
        for name in ("act_bits", "wgt_bits"):
            v = getattr(self, name)
            if not 1 <= v <= 8:
                raise ValueError(f"{name} must be in 1..8, got {v}")

    @property
    def act_max(self) -> int:
        return (1 << self.act_bits) - 1

    @property
    def wgt_max(self) -> int:
        return (1 << self.wgt_bits) - 1

    def __str__(self):
        return f"W{self.wgt_bits}A{self.act_bits}"


@dataclass
class QuantTensor:
    """Unsigned integer tensor, channel-first (C, H, W), flat row-major data."""

    shape: tuple[int, int, int]
    bits: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.data = np.asarray(self.data, dtype=np.int64).reshape(-1)
        c, h, w = self.shape
        if self.data.size != c * h * w:
            raise ValueError(f"data has {self.data.size} values, shape {self.shape} needs {c * h * w}")
        if self.bits < 1:
            raise ValueError("bits must be positive")
        if self.data.size and (self.data.min() < 0 or self.data.max() >= 1 << self.bits):
            raise PackingRangeError(
                f"values must lie in [0, {(1 << self.bits) - 1}] for {self.bits}-bit tensor"
            )

    @classmethod
    def from_array(cls, arr, bits: int) -> "QuantTensor":
        arr = np.asarray(arr)
        if arr.ndim != 3:
            raise ValueError("expected a (C, H, W) array")
        return cls(arr.shape, bits, arr.reshape(-1))

    def as_array(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    def index(self, c: int, h: int, w: int) -> int:
        _, hh, ww = self.shape
        return c * hh * ww + h * ww + w

    def __eq__(self, other):
        if not isinstance(other, QuantTensor):
            return NotImplemented
        return (self.shape == other.shape and self.bits == other.bits
                and np.array_equal(self.data, other.data))


@dataclass
class PackedTensor:
    """Tensor of E-bit elements, each holding two sub-operands."""

    elem_bits: int
    shape: tuple[int, int, int]  # (C/2, H, W)
    data: np.ndarray = field(repr=False)
    role: str
    bits: int  # precision of the sub-operands
    channels: int  # logical channel count before zero padding
    operands_per_elem: int = OPERANDS_PER_ELEM

    def as_array(self) -> np.ndarray:
        return self.data.reshape(self.shape)


def _check_elem_bits(elem_bits):
    if elem_bits not in ELEM_WIDTHS:
        raise ValueError(f"element width must be one of {ELEM_WIDTHS}, got {elem_bits}")


def _check_role(role):
    if role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}, got {role!r}")


def pad_channels(t: QuantTensor) -> QuantTensor:
    """Append one all-zero channel when C is odd."""
    c, h, w = t.shape
    if c % 2 == 0:
        return t
    arr = np.concatenate([t.as_array(), np.zeros((1, h, w), dtype=np.int64)])
    return QuantTensor.from_array(arr, t.bits)


def pack_p1(t: QuantTensor, elem_bits: int, role: str) -> PackedTensor:
    _check_elem_bits(elem_bits)
    _check_role(role)
    half = elem_bits // 2
    if t.bits > half:
        raise PackingRangeError(
            f"{t.bits}-bit values do not fit the {half}-bit sub-fields of {elem_bits}-bit elements"
        )
    padded = pad_channels(t).as_array()
    even, odd = padded[0::2], padded[1::2]
    if role == "activation":
        packed = even + (odd << half)
    else:
        packed = odd + (even << half)
    return PackedTensor(elem_bits, packed.shape, packed.reshape(-1).astype(np.int64),
                        role, t.bits, t.shape[0])


def unpack_p1(p: PackedTensor) -> QuantTensor:
    _check_elem_bits(p.elem_bits)
    _check_role(p.role)
    half = p.elem_bits // 2
    mask = (1 << half) - 1
    arr = np.asarray(p.data, dtype=np.int64).reshape(p.shape)
    if arr.size and (arr.min() < 0 or arr.max() >= 1 << p.elem_bits):
        raise PackingRangeError(f"packed element outside {p.elem_bits}-bit range")
    lo, hi = arr & mask, arr >> half
    first, second = (lo, hi) if p.role == "activation" else (hi, lo)
    pc, h, w = p.shape
    out = np.empty((2 * pc, h, w), dtype=np.int64)
    out[0::2], out[1::2] = first, second
    return QuantTensor.from_array(out[: p.channels], p.bits)


def pack_pair(x0: int, x1: int, elem_bits: int, role: str) -> int:
    """Pack a single (index0, index1) sub-operand pair into one element."""
    half = elem_bits // 2
    if not (0 <= x0 < 1 << half and 0 <= x1 < 1 << half):
        raise PackingRangeError(f"sub-operands must be < 2**{half}")
    if role == "activation":
        return x0 + (x1 << half)
    return x1 + (x0 << half)


def packed_product_fields(a: int, w: int, elem_bits: int) -> tuple[int, int]:
    """Split ``(a * w) mod 2**E`` into its low and middle half-width fields."""
    half = elem_bits // 2
    mask = (1 << half) - 1
    prod = (a * w) & ((1 << elem_bits) - 1)
    return prod & mask, prod >> half


def extract_accumulated(products, elem_bits: int) -> int:
    """Sum products modulo 2**E and read the middle field once.

    This is what a native kernel does between two extractions.
    """
    half = elem_bits // 2
    acc = 0
    for p in products:
        acc = (acc + p) & ((1 << elem_bits) - 1)
    return acc >> half


def within_design_condition(prec: Precision, elem_bits: int) -> bool:
    # Na + Nw + 1 <= E/2 : the dot-product field always has one spare bit
    return prec.act_bits + prec.wgt_bits + 1 <= elem_bits // 2


def field_bounds(prec: Precision, elem_bits: int) -> dict[str, tuple[int, int]]:
    """Worst-case (value, limit) pairs for the low and mid fields of one product."""
    limit = (1 << (elem_bits // 2)) - 1
    cross = prec.act_max * prec.wgt_max
    return {"low": (cross, limit), "mid": (2 * cross, limit)}


def fields_exact(prec: Precision, elem_bits: int) -> bool:
    return all(v <= lim for v, lim in field_bounds(prec, elem_bits).values())


def paper_budget(elem_bits: int) -> int:
    return (1 << (elem_bits // 2)) // 2


def safe_accum_budget(prec: Precision, elem_bits: int, mode: str = "native",
                      policy: str = "conservative"):
    """Number of packed products that may be summed before extracting.

    Returns ``UNBOUNDED`` in vmacsr mode, where every product is shifted
    before it reaches the accumulator.  Returns 0 when ``prec`` lies
    outside the overflow-free region for ``elem_bits``.
    """
    _check_elem_bits(elem_bits)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if policy not in BUDGET_POLICIES:
        raise ValueError(f"budget policy must be one of {BUDGET_POLICIES}, got {policy!r}")
    if mode == "vmacsr":
        return UNBOUNDED
    if not within_design_condition(prec, elem_bits):
        return 0
    if policy == "paper":
        return paper_budget(elem_bits)
    limit = (1 << (elem_bits // 2)) - 1
    return limit // (2 * prec.act_max * prec.wgt_max)


def admissible(prec: Precision, elem_bits: int, mode: str = "vmacsr") -> bool:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    ok = within_design_condition(prec, elem_bits) and fields_exact(prec, elem_bits)
    if mode == "native":
        ok = ok and safe_accum_budget(prec, elem_bits, "native") >= 1
    return ok


def region_map(elem_bits: int, mode: str = "vmacsr") -> np.ndarray:
    """8x8 boolean grid; entry ``[Na-1, Nw-1]`` is True when admissible."""
    _check_elem_bits(elem_bits)
    grid = np.zeros((8, 8), dtype=bool)
    for na in range(1, 9):
        for nw in range(1, 9):
            grid[na - 1, nw - 1] = admissible(Precision(na, nw), elem_bits, mode)
    return grid


def region_violation(prec: Precision, elem_bits: int, mode: str = "vmacsr") -> str | None:
    """Human-readable description of the first violated bound, or None."""
    half = elem_bits // 2
    if elem_bits not in ELEM_WIDTHS:
        return f"element width {elem_bits} not in {ELEM_WIDTHS}"
    ma, mw = prec.act_max, prec.wgt_max
    if 2 * ma * mw > (1 << half) - 1:
        return (f"dot-product field overflow: 2*{ma * mw} = {2 * ma * mw} > "
                f"{(1 << half) - 1} (2^{half}-1)")
    if ma * mw > (1 << half) - 1:
        return f"low field overflow: {ma}*{mw} = {ma * mw} > {(1 << half) - 1}"
    if not within_design_condition(prec, elem_bits):
        return (f"precision condition Na+Nw+1 <= E/2 violated: "
                f"{prec.act_bits}+{prec.wgt_bits}+1 = {prec.act_bits + prec.wgt_bits + 1} > {half}")
    if mode == "native" and safe_accum_budget(prec, elem_bits, "native") < 1:
        return "no local accumulation possible (budget 0)"
    return None
