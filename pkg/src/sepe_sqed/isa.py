"""RV32IM-subset instruction semantics and the 29-entry synthesis component library.

Everything is parametric in the register width ``xlen`` so the same
definitions can be checked exhaustively at 4 bits. At ``xlen=32`` immediates
are 12 bits and shift amounts 5 bits, as in RV32I.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cache, cached_property
from typing import Sequence

from . import bv
from .bv import Expr

R_TYPE = ("ADD", "SUB", "AND", "OR", "XOR", "SLT", "SLTU", "SLL", "SRL", "SRA", "MUL", "MULH", "MULHU")
I_TYPE = ("ADDI", "XORI", "ORI", "ANDI", "SLTI", "SLTIU")
SHIFT_I_TYPE = ("SLLI", "SRLI", "SRAI")
MNEMONICS = R_TYPE + I_TYPE + SHIFT_I_TYPE
MULTIPLY = ("MUL", "MULH", "MULHU")

# numeric id per mnemonic, used by the checker's history window
MNEMONIC_ID = {m: i for i, m in enumerate(MNEMONICS)}
NO_MNEMONIC = 31


class UnknownInstructionError(KeyError):
    pass


class ArityError(ValueError):
    pass


def imm_width(xlen: int) -> int:
    return min(12, xlen)


def shamt_width(xlen: int) -> int:
    return (xlen - 1).bit_length()


@dataclass(frozen=True)
class InstructionSpec:
    mnemonic: str
    inputs: tuple[tuple[str, int], ...]
    attrs: tuple[tuple[str, int], ...]
    output: tuple[str, int]
    semantics: Expr

    @property
    def params(self) -> tuple[tuple[str, int], ...]:
        """Register inputs followed by immediate attributes."""
        return self.inputs + self.attrs

    def apply(self, args: Sequence[Expr]) -> Expr:
        """Instantiate the semantics with one expression per parameter."""
        params = self.params
        if len(args) != len(params):
            raise ArityError(f"{self.mnemonic} takes {len(params)} operands, got {len(args)}")
        mapping = {}
        for (name, width), arg in zip(params, args):
            if arg.width != width:
                raise bv.WidthError(f"{self.mnemonic}.{name} expects {width} bits, got {arg.width}")
            mapping[name] = arg
        return bv.substitute(self.semantics, mapping)

    def evaluate(self, *values: int) -> int:
        params = self.params
        if len(values) != len(params):
            raise ArityError(f"{self.mnemonic} takes {len(params)} operands, got {len(values)}")
        return bv.eval_expr(self.semantics, {n: v for (n, _), v in zip(params, values)})


def _semantics(mnemonic: str, xlen: int) -> InstructionSpec:
    a = bv.var("rs1", xlen)
    b = bv.var("rs2", xlen)
    imm = bv.var("imm", imm_width(xlen))
    sh = bv.var("shamt", shamt_width(xlen))
    low = bv.const(xlen - 1, xlen)
    rtype = (("rs1", xlen), ("rs2", xlen))
    itype = (("rs1", xlen),)

    def flag(bit: Expr) -> Expr:
        return bv.zext(bit, xlen)

    def high(signed: bool) -> Expr:
        ext = bv.sext if signed else bv.zext
        return bv.extract(bv.mul(ext(a, 2 * xlen), ext(b, 2 * xlen)), 2 * xlen - 1, xlen)

    simm = bv.sext(imm, xlen)
    zsh = bv.zext(sh, xlen)
    table = {
        "ADD": (rtype, (), a + b),
        "SUB": (rtype, (), a - b),
        "AND": (rtype, (), a & b),
        "OR": (rtype, (), a | b),
        "XOR": (rtype, (), a ^ b),
        "SLT": (rtype, (), flag(bv.slt(a, b))),
        "SLTU": (rtype, (), flag(bv.ult(a, b))),
        "SLL": (rtype, (), bv.shl(a, b & low)),
        "SRL": (rtype, (), bv.lshr(a, b & low)),
        "SRA": (rtype, (), bv.ashr(a, b & low)),
        "MUL": (rtype, (), a * b),
        "MULH": (rtype, (), high(True)),
        "MULHU": (rtype, (), high(False)),
        "ADDI": (itype, (("imm", imm.width),), a + simm),
        "XORI": (itype, (("imm", imm.width),), a ^ simm),
        "ORI": (itype, (("imm", imm.width),), a | simm),
        "ANDI": (itype, (("imm", imm.width),), a & simm),
        "SLTI": (itype, (("imm", imm.width),), flag(bv.slt(a, simm))),
        "SLTIU": (itype, (("imm", imm.width),), flag(bv.ult(a, simm))),
        "SLLI": (itype, (("shamt", sh.width),), bv.shl(a, zsh)),
        "SRLI": (itype, (("shamt", sh.width),), bv.lshr(a, zsh)),
        "SRAI": (itype, (("shamt", sh.width),), bv.ashr(a, zsh)),
    }
    try:
        inputs, attrs, expr = table[mnemonic]
    except KeyError:
        raise UnknownInstructionError(mnemonic) from None
    return InstructionSpec(mnemonic, inputs, attrs, ("rd", xlen), expr)


@cache
def instruction_semantics(mnemonic: str, xlen: int = 32) -> InstructionSpec:
    return _semantics(mnemonic.upper(), xlen)


# Operand bindings inside a component. One per instruction parameter.
IN, ATTR, TMP, ZERO = "in", "attr", "tmp", "zero"


@dataclass(frozen=True)
class MicroOp:
    """One underlying instruction of a component and where its operands come from."""

    mnemonic: str
    operands: tuple[tuple, ...]


@dataclass(frozen=True)
class Component:
    id: int
    cls: str
    name: str
    ops: tuple[MicroOp, ...]
    input_widths: tuple[int, ...]
    attr_widths: tuple[int, ...]
    xlen: int = 32
    commutative: bool = False
    doc: str = field(default="", compare=False)

    @property
    def mnemonics(self) -> tuple[str, ...]:
        return tuple(op.mnemonic for op in self.ops)

    @property
    def output_width(self) -> int:
        return self.xlen

    @cached_property
    def register_inputs(self) -> tuple[bool, ...]:
        """Per input: does it feed a register operand (as opposed to an immediate field)?"""
        roles = [False] * len(self.input_widths)
        for op in self.ops:
            n_regs = len(instruction_semantics(op.mnemonic, self.xlen).inputs)
            for pos, binding in enumerate(op.operands):
                if binding[0] == IN and pos < n_regs:
                    roles[binding[1]] = True
        return tuple(roles)

    @cached_property
    def effective_order(self) -> tuple[str, tuple[int, ...]] | None:
        """``(mnemonic, input permutation)`` when the component is one instruction fed only by its inputs."""
        if len(self.ops) != 1:
            return None
        op = self.ops[0]
        if not all(b[0] == IN for b in op.operands):
            return None
        return op.mnemonic, tuple(b[1] for b in op.operands)

    def semantics(self, inputs: Sequence[Expr], attrs: Sequence[Expr] = ()) -> Expr:
        """Compose the underlying instructions along the wiring; the last one is the output."""
        if len(inputs) != len(self.input_widths) or len(attrs) != len(self.attr_widths):
            raise ArityError(
                f"{self.name} takes {len(self.input_widths)} inputs and {len(self.attr_widths)} attributes")
        for value, width in zip(list(inputs) + list(attrs), self.input_widths + self.attr_widths):
            if value.width != width:
                raise bv.WidthError(f"{self.name}: operand of width {value.width}, expected {width}")
        temps: list[Expr] = []
        for op in self.ops:
            spec = instruction_semantics(op.mnemonic, self.xlen)
            args = []
            for (_, width), binding in zip(spec.params, op.operands):
                kind = binding[0]
                if kind == IN:
                    value = inputs[binding[1]]
                elif kind == ATTR:
                    value = attrs[binding[1]]
                elif kind == TMP:
                    value = temps[binding[1]]
                else:
                    value = bv.const(0, width)
                if value.width < width:
                    value = bv.zext(value, width)
                args.append(value)
            temps.append(spec.apply(args))
        return temps[-1]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "class": self.cls,
            "mnemonics": list(self.mnemonics),
            "input_widths": list(self.input_widths),
            "attr_widths": list(self.attr_widths),
        }


def eval_component(comp: Component, inputs: Sequence[int], attributes: Sequence[int] = ()) -> int:
    if len(inputs) != len(comp.input_widths) or len(attributes) != len(comp.attr_widths):
        raise ArityError(f"{comp.name}: expected {len(comp.input_widths)} inputs, {len(comp.attr_widths)} attributes")
    args = []
    for value, width in zip(list(inputs) + list(attributes), comp.input_widths + comp.attr_widths):
        if not 0 <= value <= bv.mask(width):
            raise bv.WidthError(f"{comp.name}: value {value:#x} does not fit {width} bits")
        args.append(bv.const(value, width))
    n = len(comp.input_widths)
    return comp.semantics(args[:n], args[n:]).value


def _library(xlen: int) -> list[Component]:
    iw, sw = imm_width(xlen), shamt_width(xlen)
    r = (xlen, xlen)
    comps: list[Component] = []

    def add(cls, name, ops, inputs, attrs=(), commutative=False, doc=""):
        ops = tuple(MicroOp(m, tuple(o)) for m, o in ops)
        comps.append(Component(len(comps) + 1, cls, name, ops, tuple(inputs), tuple(attrs), xlen, commutative, doc))

    for m in ("ADD", "SUB", "AND", "OR", "XOR", "SLT", "SLTU", "SLL", "SRL", "SRA"):
        add("NIC", m, [(m, [(IN, 0), (IN, 1)])], r, commutative=m in ("ADD", "AND", "OR", "XOR"))

    for m in ("ADDI", "XORI", "ORI", "ANDI", "SLTI", "SLTIU"):
        add("DIC", m, [(m, [(IN, 0), (ATTR, 0)])], (xlen,), (iw,))
    for m in ("SLLI", "SRLI", "SRAI"):
        add("DIC", m, [(m, [(IN, 0), (ATTR, 0)])], (xlen,), (sw,))
    add("DIC", "LI", [("ADDI", [(ZERO,), (ATTR, 0)])], (), (iw,),
        doc="ADDI with its register source fixed to zero: loads a sign-extended constant")

    add("CIC", "MULI", [("ADDI", [(ZERO,), (ATTR, 0)]), ("MUL", [(IN, 0), (TMP, 0)])], (xlen,), (iw,),
        doc="multiply by a sign-extended constant")
    add("CIC", "MULHI", [("ADDI", [(ZERO,), (ATTR, 0)]), ("MULH", [(IN, 0), (TMP, 0)])], (xlen,), (iw,),
        doc="signed high multiply by a sign-extended constant")
    add("CIC", "MULR", [("MUL", [(IN, 1), (IN, 0)])], r,
        doc="multiply with the operand order reversed")
    add("CIC", "SLLIOR", [("SLLI", [(IN, 0), (ATTR, 0)]), ("OR", [(TMP, 0), (IN, 1)])], r, (sw,),
        doc="shift left by a constant then or")
    add("CIC", "SRLIOR", [("SRLI", [(IN, 0), (ATTR, 0)]), ("OR", [(TMP, 0), (IN, 1)])], r, (sw,),
        doc="logical shift right by a constant then or")
    add("CIC", "LIMM", [("ADDI", [(ZERO,), (IN, 0)])], (iw,),
        doc="materialise an immediate operand into a register")
    add("CIC", "LISH", [("ADDI", [(ZERO,), (IN, 0)])], (sw,),
        doc="materialise a shift amount into a register")
    add("CIC", "MULHR", [("MULH", [(IN, 1), (IN, 0)])], r,
        doc="signed high multiply with the operand order reversed")
    add("CIC", "MULHUR", [("MULHU", [(IN, 1), (IN, 0)])], r,
        doc="unsigned high multiply with the operand order reversed")
    return comps


@cache
def _library_cached(xlen: int) -> tuple[Component, ...]:
    return tuple(_library(xlen))


def component_library(xlen: int = 32) -> list[Component]:
    """The fixed 10 NIC + 10 DIC + 9 CIC library, ids 1..29."""
    return list(_library_cached(xlen))


def component_by_id(cid: int, xlen: int = 32) -> Component:
    lib = _library_cached(xlen)
    if not 1 <= cid <= len(lib):
        raise KeyError(f"no component with id {cid}")
    return lib[cid - 1]


def component_by_name(name: str, xlen: int = 32) -> Component:
    for comp in _library_cached(xlen):
        if comp.name == name:
            return comp
    raise KeyError(f"no component named {name!r}")


def library_json(xlen: int = 32) -> str:
    return json.dumps([c.to_json() for c in component_library(xlen)], indent=2) + "\n"
