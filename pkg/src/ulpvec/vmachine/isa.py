"""Instruction representation and 32-bit encoder/decoder.

Covers exactly the subset the simulator executes: unit-stride vector
loads/stores, ``vsetvli``/``vsetivli``, a handful of integer vector
arithmetic ops, the scalar loads/stores used to fetch kernel weights, and
the custom ``vmacsr`` in its OPMVV and OPMVX forms.  ``vmacsr`` takes the
funct6 slot immediately after ``vmacc``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields

OPCODE_V = 0b1010111
OPCODE_LOAD_FP = 0b0000111
OPCODE_STORE_FP = 0b0100111
OPCODE_LOAD = 0b0000011
OPCODE_STORE = 0b0100011

OPIVV, OPFVV, OPMVV, OPIVI, OPIVX, OPFVF, OPMVX, OPCFG = range(8)

FUNCT6_VMACC = 0b101101
FUNCT6_VMACSR = FUNCT6_VMACC + 1

SEWS = (8, 16, 32, 64)

# (funct3 category, funct6) -> op name
_ARITH = {
    (OPIVV, 0b000000): "vadd.vv",
    (OPIVV, 0b010111): "vmv.v.v",
    (OPIVI, 0b010111): "vmv.v.i",
    (OPIVI, 0b101000): "vsrl.vi",
    (OPIVI, 0b001111): "vslidedown.vi",
    (OPMVV, 0b100101): "vmul.vv",
    (OPMVV, FUNCT6_VMACC): "vmacc.vv",
    (OPMVX, FUNCT6_VMACC): "vmacc.vx",
    (OPMVV, FUNCT6_VMACSR): "vmacsr.vv",
    (OPMVX, FUNCT6_VMACSR): "vmacsr.vx",
}
_ARITH_ENC = {name: key for key, name in _ARITH.items()}

VECTOR_MEM_WIDTH = {8: 0b000, 16: 0b101, 32: 0b110, 64: 0b111}
_VECTOR_MEM_WIDTH_DEC = {v: k for k, v in VECTOR_MEM_WIDTH.items()}
SCALAR_LOAD_FUNCT3 = {8: 0b100, 16: 0b101, 32: 0b110, 64: 0b011}  # lbu lhu lwu ld
SCALAR_STORE_FUNCT3 = {8: 0b000, 16: 0b001, 32: 0b010, 64: 0b011}
_SCALAR_LOAD_DEC = {v: k for k, v in SCALAR_LOAD_FUNCT3.items()}
_SCALAR_STORE_DEC = {v: k for k, v in SCALAR_STORE_FUNCT3.items()}

VECTOR_OPS = frozenset(_ARITH.values()) | {"vle", "vse", "vsetvli", "vsetivli"}
SCALAR_OPS = frozenset({"sload", "sstore"})
ALL_OPS = VECTOR_OPS | SCALAR_OPS

# opcode families used for counter reports
FAMILY = {
    "vsetvli": "vsetvl", "vsetivli": "vsetvl",
    "vle": "vload", "vse": "vstore",
    "vmv.v.v": "vmv", "vmv.v.i": "vmv",
    "vslidedown.vi": "vslidedown",
    "vadd.vv": "vadd.vv", "vmul.vv": "vmul.vv", "vsrl.vi": "vsrl.vi",
    "vmacc.vv": "vmacc.vv", "vmacc.vx": "vmacc.vx",
    "vmacsr.vv": "vmacsr.vv", "vmacsr.vx": "vmacsr.vx",
    "sload": "scalar-load", "sstore": "scalar-store",
}


class DecodeError(ValueError):
    """Instruction word (or instruction) outside the implemented subset."""


class EncodeError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Instruction:
    """One decoded operation.

    Vector ops use ``vd``/``vs1``/``vs2``; the ``.vx`` forms put the scalar
    source in ``rs1``.  Memory ops address ``x[rs1] + imm``.  ``width`` is
    the element width for memory ops and the SEW for ``vsetvl``.
    """

    op: str
    vd: int = 0
    vs1: int = 0
    vs2: int = 0
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    width: int = 0
    masked: bool = False

    @property
    def family(self) -> str:
        return FAMILY[self.op]

    @property
    def is_vector(self) -> bool:
        return self.op in VECTOR_OPS

    def __str__(self):
        m = ", v0.t" if self.masked else ""
        op = self.op
        if op in ("vadd.vv", "vmul.vv"):
            return f"{op} v{self.vd}, v{self.vs2}, v{self.vs1}{m}"
        if op in ("vmacc.vv", "vmacsr.vv"):
            return f"{op} v{self.vd}, v{self.vs1}, v{self.vs2}{m}"
        if op in ("vmacc.vx", "vmacsr.vx"):
            return f"{op} v{self.vd}, x{self.rs1}, v{self.vs2}{m}"
        if op in ("vsrl.vi", "vslidedown.vi"):
            return f"{op} v{self.vd}, v{self.vs2}, {self.imm}{m}"
        if op == "vmv.v.v":
            return f"vmv.v.v v{self.vd}, v{self.vs1}"
        if op == "vmv.v.i":
            return f"vmv.v.i v{self.vd}, {self.imm}"
        if op == "vle":
            return f"vle{self.width}.v v{self.vd}, {self.imm}(x{self.rs1}){m}"
        if op == "vse":
            return f"vse{self.width}.v v{self.vd}, {self.imm}(x{self.rs1}){m}"
        if op == "vsetvli":
            return f"vsetvli x{self.rd}, x{self.rs1}, e{self.width}, m1"
        if op == "vsetivli":
            return f"vsetivli x{self.rd}, {self.imm}, e{self.width}, m1"
        if op == "sload":
            return f"l{self.width}u x{self.rd}, {self.imm}(x{self.rs1})"
        if op == "sstore":
            return f"s{self.width} x{self.rs2}, {self.imm}(x{self.rs1})"
        return f"{op} ?"


def _reg(name, v):
    if not 0 <= v <= 31:
        raise EncodeError(f"{name} must be in [0, 31], got {v}")
    return v


def _bits(word, hi, lo):
    return (word >> lo) & ((1 << (hi - lo + 1)) - 1)


def _simm(v, nbits):
    if v & (1 << (nbits - 1)):
        return v - (1 << nbits)
    return v


def _vtype(sew):
    if sew not in SEWS:
        raise EncodeError(f"SEW must be one of {SEWS}, got {sew}")
    return SEWS.index(sew) << 3  # LMUL=1, tu, mu


def encode(ins: Instruction) -> int:
    op = ins.op
    vm = 0 if ins.masked else 1
    if op in _ARITH_ENC:
        cat, funct6 = _ARITH_ENC[op]
        if cat == OPIVI:
            imm = ins.imm
            if op == "vmv.v.i":
                if not -16 <= imm <= 15:
                    raise EncodeError(f"simm5 out of range: {imm}")
                src1 = imm & 0x1F
            else:
                if not 0 <= imm <= 31:
                    raise EncodeError(f"uimm5 out of range: {imm}")
                src1 = imm
        elif cat == OPMVX:
            src1 = _reg("rs1", ins.rs1)
        else:
            src1 = _reg("vs1", ins.vs1)
        vs2 = _reg("vs2", ins.vs2)
        if op.startswith("vmv."):
            if ins.masked or vs2:
                raise EncodeError("vmv.v.* requires vm=1 and vs2=0")
        return ((funct6 << 26) | (vm << 25) | (vs2 << 20) | (src1 << 15)
                | (cat << 12) | (_reg("vd", ins.vd) << 7) | OPCODE_V)
    if op == "vsetvli":
        return ((_vtype(ins.width) << 20) | (_reg("rs1", ins.rs1) << 15) | (OPCFG << 12)
                | (_reg("rd", ins.rd) << 7) | OPCODE_V)
    if op == "vsetivli":
        if not 0 <= ins.imm <= 31:
            raise EncodeError(f"vsetivli AVL must fit uimm5, got {ins.imm}")
        return ((0b11 << 30) | (_vtype(ins.width) << 20) | (ins.imm << 15) | (OPCFG << 12)
                | (_reg("rd", ins.rd) << 7) | OPCODE_V)
    if op in ("vle", "vse"):
        if ins.imm:
            raise EncodeError("unit-stride vector memory ops have no address offset")
        if ins.width not in VECTOR_MEM_WIDTH:
            raise EncodeError(f"unsupported element width {ins.width}")
        opcode = OPCODE_LOAD_FP if op == "vle" else OPCODE_STORE_FP
        return ((vm << 25) | (_reg("rs1", ins.rs1) << 15) | (VECTOR_MEM_WIDTH[ins.width] << 12)
                | (_reg("vd", ins.vd) << 7) | opcode)
    if op in ("sload", "sstore"):
        if not -2048 <= ins.imm <= 2047:
            raise EncodeError(f"imm12 out of range: {ins.imm}")
        imm = ins.imm & 0xFFF
        if op == "sload":
            if ins.width not in SCALAR_LOAD_FUNCT3:
                raise EncodeError(f"unsupported load width {ins.width}")
            return ((imm << 20) | (_reg("rs1", ins.rs1) << 15)
                    | (SCALAR_LOAD_FUNCT3[ins.width] << 12) | (_reg("rd", ins.rd) << 7) | OPCODE_LOAD)
        if ins.width not in SCALAR_STORE_FUNCT3:
            raise EncodeError(f"unsupported store width {ins.width}")
        return (((imm >> 5) << 25) | (_reg("rs2", ins.rs2) << 20) | (_reg("rs1", ins.rs1) << 15)
                | (SCALAR_STORE_FUNCT3[ins.width] << 12) | ((imm & 0x1F) << 7) | OPCODE_STORE)
    raise EncodeError(f"cannot encode op {op!r}")


def encode_vmacsr(form: str, vd: int, src1: int, vs2: int, masked: bool = False) -> int:
    """Encode ``vmacsr.vv vd, vs1, vs2`` or ``vmacsr.vx vd, rs1, vs2``."""
    if form == "vv":
        ins = Instruction("vmacsr.vv", vd=vd, vs1=src1, vs2=vs2, masked=masked)
    elif form == "vx":
        ins = Instruction("vmacsr.vx", vd=vd, rs1=src1, vs2=vs2, masked=masked)
    else:
        raise EncodeError(f"form must be 'vv' or 'vx', got {form!r}")
    return encode(ins)


def decode(word: int) -> Instruction:
    if not 0 <= word < 1 << 32:
        raise DecodeError(f"not a 32-bit word: {word:#x}")
    opcode = word & 0x7F
    rd = _bits(word, 11, 7)
    funct3 = _bits(word, 14, 12)
    rs1 = _bits(word, 19, 15)
    vs2 = _bits(word, 24, 20)
    masked = not _bits(word, 25, 25)

    if opcode == OPCODE_V:
        if funct3 == OPCFG:
            if _bits(word, 31, 31) == 0:
                zimm = _bits(word, 30, 20)
                kind, avl = "vsetvli", None
            elif _bits(word, 31, 30) == 0b11:
                zimm = _bits(word, 29, 20)
                kind, avl = "vsetivli", rs1
            else:
                raise DecodeError("vsetvl (register vtype) form not implemented")
            if zimm & 0b111:
                raise DecodeError(f"vtype field: LMUL encoding {zimm & 0b111:#05b} not implemented")
            vsew = (zimm >> 3) & 0b111
            if vsew >= len(SEWS) or zimm >> 8:
                raise DecodeError(f"vtype field: unsupported value {zimm:#x}")
            if kind == "vsetvli":
                return Instruction("vsetvli", rd=rd, rs1=rs1, width=SEWS[vsew])
            return Instruction("vsetivli", rd=rd, imm=avl, width=SEWS[vsew])
        funct6 = _bits(word, 31, 26)
        name = _ARITH.get((funct3, funct6))
        if name is None:
            raise DecodeError(f"funct6 field: {funct6:#08b} not implemented for funct3 {funct3:#05b}")
        if name.startswith("vmv."):
            if masked or vs2:
                raise DecodeError("vs2/vm fields: vmv.v.* requires vs2=0, vm=1")
            if name == "vmv.v.v":
                return Instruction(name, vd=rd, vs1=rs1)
            return Instruction(name, vd=rd, imm=_simm(rs1, 5))
        if funct3 == OPIVI:
            return Instruction(name, vd=rd, vs2=vs2, imm=rs1, masked=masked)
        if funct3 == OPMVX:
            return Instruction(name, vd=rd, rs1=rs1, vs2=vs2, masked=masked)
        return Instruction(name, vd=rd, vs1=rs1, vs2=vs2, masked=masked)

    if opcode in (OPCODE_LOAD_FP, OPCODE_STORE_FP):
        if funct3 not in _VECTOR_MEM_WIDTH_DEC:
            raise DecodeError(f"width field: {funct3:#05b} is not a vector element width")
        if _bits(word, 31, 26) or vs2:
            raise DecodeError("nf/mew/mop/lumop fields: only unit-stride accesses are implemented")
        op = "vle" if opcode == OPCODE_LOAD_FP else "vse"
        return Instruction(op, vd=rd, rs1=rs1, width=_VECTOR_MEM_WIDTH_DEC[funct3], masked=masked)

    if opcode == OPCODE_LOAD:
        if funct3 not in _SCALAR_LOAD_DEC:
            raise DecodeError(f"funct3 field: load {funct3:#05b} not implemented")
        return Instruction("sload", rd=rd, rs1=rs1, imm=_simm(_bits(word, 31, 20), 12),
                           width=_SCALAR_LOAD_DEC[funct3])
    if opcode == OPCODE_STORE:
        if funct3 not in _SCALAR_STORE_DEC:
            raise DecodeError(f"funct3 field: store {funct3:#05b} not implemented")
        imm = (_bits(word, 31, 25) << 5) | rd
        return Instruction("sstore", rs2=vs2, rs1=rs1, imm=_simm(imm, 12),
                           width=_SCALAR_STORE_DEC[funct3])

    raise DecodeError(f"opcode field: {opcode:#09b} not implemented")


def to_bytes(word: int) -> bytes:
    """Serialize as a little-endian 32-bit word (memory order)."""
    return struct.pack("<I", word)


def field_table(word: int) -> list[tuple[str, str]]:
    """Labelled R-type vector fields, most significant first."""
    return [
        ("funct6", f"0b{_bits(word, 31, 26):06b}"),
        ("vm", f"{_bits(word, 25, 25)}"),
        ("vs2", f"{_bits(word, 24, 20)}"),
        ("vs1/rs1", f"{_bits(word, 19, 15)}"),
        ("funct3", f"0b{_bits(word, 14, 12):03b}"),
        ("vd", f"{_bits(word, 11, 7)}"),
        ("opcode", f"0b{word & 0x7F:07b}"),
    ]


def instruction_fields(ins: Instruction) -> dict:
    return {f.name: getattr(ins, f.name) for f in fields(ins)}
