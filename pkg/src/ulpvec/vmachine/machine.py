"""Bit-exact functional model of a vector register machine.

All element arithmetic wraps modulo 2**SEW.  Elements at or beyond VL are
left undisturbed, except that ``vslidedown`` zero-fills the positions it
vacates inside ``[0, VL)``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .isa import SEWS, Instruction, FAMILY

_DTYPES = {8: np.uint8, 16: np.uint16, 32: np.uint32, 64: np.uint64}
XLEN_MASK = (1 << 64) - 1


class SimulatorError(Exception):
    pass


class TrapError(SimulatorError):
    """Misaligned or out-of-bounds memory access."""


class MachineConfigError(SimulatorError, ValueError):
    pass


class ExecutionError(SimulatorError):
    def __init__(self, pc: int, instruction: Instruction, cause: Exception):
        super().__init__(f"pc={pc}: {instruction}: {cause}")
        self.pc = pc
        self.instruction = instruction
        self.cause = cause


@dataclass(frozen=True)
class MachineConfig:
    vlen_bits: int = 4096
    lanes: int = 4
    datapath_bits_per_lane: int = 64

    def __post_init__(self):
        if self.vlen_bits <= 0 or self.vlen_bits % (self.lanes * self.datapath_bits_per_lane):
            raise MachineConfigError(
                f"vlen_bits={self.vlen_bits} must be a positive multiple of "
                f"lanes*datapath ({self.lanes}*{self.datapath_bits_per_lane})"
            )
        if self.vlen_bits % 64:
            raise MachineConfigError("vlen_bits must be a multiple of 64")

    def vlmax(self, sew: int) -> int:
        return self.vlen_bits // sew


@dataclass
class PerfCounters:
    """Issue counts keyed by ``(phase, op, vl, sew)``.

    Keeping VL and SEW per entry lets the performance model charge each
    vector instruction by its own element count.
    """

    shapes: Counter = field(default_factory=Counter)

    def record(self, phase: str, op: str, vl: int, sew: int) -> None:
        self.shapes[(phase, op, vl, sew)] += 1

    def count(self, op: str | None = None, phase: str | None = None,
              family: str | None = None) -> int:
        total = 0
        for (ph, o, _, _), n in self.shapes.items():
            if op is not None and o != op:
                continue
            if phase is not None and ph != phase:
                continue
            if family is not None and FAMILY[o] != family:
                continue
            total += n
        return total

    @property
    def instructions(self) -> int:
        return sum(self.shapes.values())

    @property
    def elements(self) -> int:
        """Element operations issued by vector instructions."""
        return sum(vl * n for (_, _, vl, _), n in self.shapes.items())

    def by_op(self, phase: str | None = None) -> Counter:
        out = Counter()
        for (ph, o, _, _), n in self.shapes.items():
            if phase is None or ph == phase:
                out[o] += n
        return out

    def phases(self) -> set[str]:
        return {k[0] for k in self.shapes}

    def only(self, phase: str) -> "PerfCounters":
        return PerfCounters(Counter({k: n for k, n in self.shapes.items() if k[0] == phase}))

    def copy(self) -> "PerfCounters":
        return PerfCounters(Counter(self.shapes))

    def __add__(self, other: "PerfCounters") -> "PerfCounters":
        return PerfCounters(self.shapes + other.shapes)

    def reset(self) -> None:
        self.shapes.clear()


class VectorMachine:
    """Architectural state plus the execute loop.

    >>> m = VectorMachine()
    >>> m.execute(Instruction("vsetivli", imm=4, width=8))
    >>> m.vl
    4
    """

    NREGS = 32

    def __init__(self, config: MachineConfig | None = None, mem_bytes: int = 1 << 16):
        self.config = config or MachineConfig()
        self.vlenb = self.config.vlen_bits // 8
        self.vregs = np.zeros((self.NREGS, self.vlenb), dtype=np.uint8)
        self._views = {sew: self.vregs.view(dt) for sew, dt in _DTYPES.items()}
        self.x = [0] * self.NREGS
        self.mem = np.zeros(mem_bytes, dtype=np.uint8)
        self.sew = 8
        self.vl = 0
        self.counters = PerfCounters()
        self.phase = "main"
        self._dispatch = {
            "vsetvli": self._vsetvl,
            "vsetivli": self._vsetvl,
            "vle": self._vle,
            "vse": self._vse,
            "vmv.v.v": self._vmv_vv,
            "vmv.v.i": self._vmv_vi,
            "vslidedown.vi": self._vslidedown,
            "vadd.vv": self._vadd,
            "vmul.vv": self._vmul,
            "vsrl.vi": self._vsrl,
            "vmacc.vv": self._vmacc_vv,
            "vmacc.vx": self._vmacc_vx,
            "vmacsr.vv": self._vmacsr_vv,
            "vmacsr.vx": self._vmacsr_vx,
            "sload": self._sload,
            "sstore": self._sstore,
        }

    # -- state helpers -------------------------------------------------------

    @property
    def vlmax(self) -> int:
        return self.config.vlmax(self.sew)

    def vreg(self, r: int, sew: int | None = None) -> np.ndarray:
        """Writable element view of the whole register ``r``."""
        return self._views[sew or self.sew][r]

    def ensure_memory(self, nbytes: int) -> None:
        if nbytes > self.mem.size:
            grown = np.zeros(nbytes, dtype=np.uint8)
            grown[: self.mem.size] = self.mem
            self.mem = grown

    def _check_range(self, addr: int, nbytes: int, align: int) -> None:
        if addr % align:
            raise TrapError(f"misaligned access at {addr:#x} (alignment {align})")
        if addr < 0 or addr + nbytes > self.mem.size:
            raise TrapError(f"access [{addr:#x}, {addr + nbytes:#x}) outside memory of {self.mem.size} bytes")

    def write_array(self, addr: int, values, width: int) -> None:
        arr = np.asarray(values).astype(_DTYPES[width], copy=False).reshape(-1)
        self._check_range(addr, arr.nbytes, width // 8)
        self.mem[addr: addr + arr.nbytes] = arr.view(np.uint8)

    def read_array(self, addr: int, count: int, width: int) -> np.ndarray:
        nbytes = count * width // 8
        self._check_range(addr, nbytes, width // 8)
        return self.mem[addr: addr + nbytes].view(_DTYPES[width]).copy()

    def reset_counters(self) -> None:
        self.counters.reset()

    # -- execution -----------------------------------------------------------

    def execute(self, ins: Instruction) -> None:
        handler = self._dispatch.get(ins.op)
        if handler is None:
            raise SimulatorError(f"undefined opcode {ins.op!r}")
        if ins.masked:
            raise SimulatorError(f"masked execution is not implemented ({ins})")
        handler(ins)
        if ins.op in ("sload", "sstore"):
            self.counters.record(self.phase, ins.op, 0, 0)
        else:
            self.counters.record(self.phase, ins.op, self.vl, self.sew)

    def run(self, program: Iterable[Instruction]) -> PerfCounters:
        for pc, ins in enumerate(program):
            try:
                self.execute(ins)
            except SimulatorError as err:
                raise ExecutionError(pc, ins, err) from err
        return self.counters

    def _vsetvl(self, ins):
        if ins.width not in SEWS:
            raise MachineConfigError(f"unsupported SEW {ins.width}")
        avl = ins.imm if ins.op == "vsetivli" else self.x[ins.rs1]
        self.sew = ins.width
        self.vl = min(avl, self.vlmax)
        if ins.rd:
            self.x[ins.rd] = self.vl

    def _vle(self, ins):
        self._check_eew(ins)
        nbytes = self.vl * self.sew // 8
        addr = (self.x[ins.rs1] + ins.imm) & XLEN_MASK
        self._check_range(addr, nbytes, self.sew // 8)
        self.vregs[ins.vd, :nbytes] = self.mem[addr: addr + nbytes]

    def _vse(self, ins):
        self._check_eew(ins)
        nbytes = self.vl * self.sew // 8
        addr = (self.x[ins.rs1] + ins.imm) & XLEN_MASK
        self._check_range(addr, nbytes, self.sew // 8)
        self.mem[addr: addr + nbytes] = self.vregs[ins.vd, :nbytes]

    def _check_eew(self, ins):
        if ins.width != self.sew:
            raise MachineConfigError(f"element width {ins.width} differs from SEW {self.sew}")

    def _vmv_vv(self, ins):
        v = self._views[self.sew]
        v[ins.vd, :self.vl] = v[ins.vs1, :self.vl]

    def _vmv_vi(self, ins):
        self._views[self.sew][ins.vd, :self.vl] = ins.imm & ((1 << self.sew) - 1)

    def _vslidedown(self, ins):
        v, vl, off = self._views[self.sew], self.vl, ins.imm
        keep = max(vl - off, 0)
        src = v[ins.vs2, off: off + keep].copy()
        v[ins.vd, :keep] = src
        v[ins.vd, keep:vl] = 0

    def _vadd(self, ins):
        v, vl = self._views[self.sew], self.vl
        v[ins.vd, :vl] = v[ins.vs2, :vl] + v[ins.vs1, :vl]

    def _vmul(self, ins):
        v, vl = self._views[self.sew], self.vl
        v[ins.vd, :vl] = v[ins.vs2, :vl] * v[ins.vs1, :vl]

    def _vsrl(self, ins):
        v, vl = self._views[self.sew], self.vl
        v[ins.vd, :vl] = v[ins.vs2, :vl] >> (ins.imm & (self.sew - 1))

    def _scalar(self, rs1):
        return _DTYPES[self.sew](self.x[rs1] & ((1 << self.sew) - 1))

    def _vmacc_vv(self, ins):
        v, vl = self._views[self.sew], self.vl
        prod = v[ins.vs1, :vl] * v[ins.vs2, :vl]
        v[ins.vd, :vl] += prod

    def _vmacc_vx(self, ins):
        v, vl = self._views[self.sew], self.vl
        prod = v[ins.vs2, :vl] * self._scalar(ins.rs1)
        v[ins.vd, :vl] += prod

    # vmacsr: non-widening product, logical shift by SEW/2, then accumulate
    def _vmacsr_vv(self, ins):
        v, vl = self._views[self.sew], self.vl
        prod = v[ins.vs1, :vl] * v[ins.vs2, :vl]
        v[ins.vd, :vl] += prod >> (self.sew // 2)

    def _vmacsr_vx(self, ins):
        v, vl = self._views[self.sew], self.vl
        prod = v[ins.vs2, :vl] * self._scalar(ins.rs1)
        v[ins.vd, :vl] += prod >> (self.sew // 2)

    def _sload(self, ins):
        nbytes = ins.width // 8
        addr = (self.x[ins.rs1] + ins.imm) & XLEN_MASK
        self._check_range(addr, nbytes, nbytes)
        if ins.rd:
            self.x[ins.rd] = int.from_bytes(self.mem[addr: addr + nbytes].tobytes(), "little")

    def _sstore(self, ins):
        nbytes = ins.width // 8
        addr = (self.x[ins.rs1] + ins.imm) & XLEN_MASK
        self._check_range(addr, nbytes, nbytes)
        val = self.x[ins.rs2] & ((1 << ins.width) - 1)
        self.mem[addr: addr + nbytes] = np.frombuffer(val.to_bytes(nbytes, "little"), dtype=np.uint8)


def run_program(machine: VectorMachine, program: Iterable[Instruction]):
    """Execute ``program`` in order; returns ``(machine, counters)``."""
    counters = machine.run(program)
    return machine, counters
