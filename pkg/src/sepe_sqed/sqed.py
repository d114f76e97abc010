"""Bounded self-consistency checking of an ISA-level machine with injected bugs.

Two transformations are compared:

* ``EDSEP-V``: every original instruction (registers 0..12) is followed by its
  synthesized equivalent sequence on the mirrored registers 13..25, using
  26..31 as scratch.
* ``EDDI-V``: every original instruction (registers 0..15) is duplicated on
  registers 16..31.

Both start from a state where mirrored registers agree. Once the writeback
counters of both halves match, any disagreement is a bug trace.

Concrete and symbolic execution share one code path: register values are
:class:`~sepe_sqed.bv.Expr` nodes, which fold to constants when every input is
concrete.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from . import bv, smt
from .bv import Expr
from .edsep import (EDDI_PARTITION, EDSEP_PARTITION, ConcreteInstruction, RegisterPartition, TemplateOp, expand,
                    select_program)
from .isa import MNEMONIC_ID, NO_MNEMONIC, instruction_semantics

log = logging.getLogger(__name__)

XLEN = 32
NUM_REGS = 32
EDSEP, EDDI = "EDSEP-V", "EDDI-V"
MODES = (EDSEP, EDDI)
PAIRWISE, INTERLEAVED = "pairwise", "interleaved"
POLICIES = (PAIRWISE, INTERLEAVED)
HOLDS, VIOLATED, UNKNOWN = "holds", "violated", "unknown"
CONFIRMED, REFUTED = "confirmed", "refuted"
SINGLE, MULTIPLE = "single", "multiple"

TABLE_MNEMONICS = ("ADD", "SUB", "XOR", "OR", "AND", "SLT", "SLTU", "SRA", "MULH", "XORI", "SLLI", "SRAI")
DEFAULT_ENABLED = tuple(m for m in TABLE_MNEMONICS if m != "MULH")

IDX = 5  # register index width


class UnsupportedInstruction(ValueError):
    pass


def partition_for(mode: str) -> RegisterPartition:
    if mode == EDSEP:
        return EDSEP_PARTITION
    if mode == EDDI:
        return EDDI_PARTITION
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------- mutations

@dataclass(frozen=True)
class Operands:
    """What a mutation guard sees when one instruction executes."""

    mnemonic: str
    args: tuple[Expr, ...]
    imm: Expr | None
    result: Expr
    rd: Expr
    sources: tuple[Expr, ...]
    prev_op: Expr
    prev_rd: Expr

    @property
    def rs1(self) -> Expr:
        return self.args[0]

    @property
    def rs2(self) -> Expr:
        return self.args[1]

    @property
    def shamt(self) -> Expr:
        if self.imm is not None:
            return bv.zext(self.imm, XLEN)
        return self.rs2 & (XLEN - 1)

    def prev_is(self, mnemonic: str) -> Expr:
        return bv.eq(self.prev_op, bv.const(MNEMONIC_ID[mnemonic], IDX))


@dataclass(frozen=True)
class BugMutation:
    id: str
    kind: str
    targets: tuple[str, ...]
    guard: Callable[[Operands], Expr]
    effect: Callable[[Operands], Expr]
    doc: str = ""

    def apply(self, ops: Operands) -> Expr:
        if ops.mnemonic not in self.targets:
            return ops.result
        return bv.ite(self.guard(ops), self.effect(ops), ops.result)


def _c(value: int) -> Expr:
    return bv.const(value, XLEN)


def _neg(x: Expr) -> Expr:
    return bv.extract(x, XLEN - 1, XLEN - 1)


def mutation_catalog() -> list[BugMutation]:
    """Single-instruction bugs guarded on operand values, and history-dependent bugs."""
    one = _c(1)
    single = [
        BugMutation("add_rs1_5", SINGLE, ("ADD",), lambda o: bv.eq(o.rs1, _c(5)), lambda o: o.result + one,
                    "ADD yields one too many when its first operand is 5"),
        BugMutation("sub_low_ones", SINGLE, ("SUB",),
                    lambda o: bv.eq(bv.extract(o.rs2, 15, 0), bv.const(0xFFFF, 16)), lambda o: o.result + one,
                    "SUB is off by one when the low half of the subtrahend is all ones"),
        BugMutation("xor_both_negative", SINGLE, ("XOR",), lambda o: _neg(o.rs1) & _neg(o.rs2),
                    lambda o: o.result | _c(0x80000000), "XOR keeps the sign bit set when both operands are negative"),
        BugMutation("or_rs2_zero", SINGLE, ("OR",), lambda o: bv.eq(o.rs2, _c(0)), lambda o: _c(0),
                    "OR with a zero second operand returns zero"),
        BugMutation("and_rs1_ones", SINGLE, ("AND",), lambda o: bv.eq(o.rs1, _c(0xFFFFFFFF)),
                    lambda o: o.result ^ one, "AND flips bit 0 when the first operand is all ones"),
        BugMutation("slt_equal", SINGLE, ("SLT",), lambda o: bv.eq(o.rs1, o.rs2), lambda o: one,
                    "SLT reports less-than for equal operands"),
        BugMutation("sltu_sign_mix", SINGLE, ("SLTU",), lambda o: _neg(o.rs1) ^ _neg(o.rs2),
                    lambda o: o.result ^ one, "SLTU inverts its answer when the operands' top bits differ"),
        BugMutation("sra_by_31", SINGLE, ("SRA",), lambda o: bv.eq(o.shamt, _c(31)),
                    lambda o: bv.lshr(o.rs1, o.shamt), "SRA by 31 shifts logically"),
        BugMutation("mulh_max_positive", SINGLE, ("MULH",), lambda o: bv.eq(o.rs1, _c(0x7FFFFFFF)),
                    lambda o: o.result ^ one, "MULH flips bit 0 when the first operand is the largest positive value"),
        BugMutation("xori_imm_800", SINGLE, ("XORI",), lambda o: bv.eq(o.imm, bv.const(0x800, 12)),
                    lambda o: o.rs1 ^ bv.zext(o.imm, XLEN), "XORI forgets to sign-extend the immediate 0x800"),
        BugMutation("slli_16", SINGLE, ("SLLI",), lambda o: bv.eq(o.imm, bv.const(16, 5)),
                    lambda o: bv.shl(o.rs1, _c(15)), "SLLI by 16 shifts by 15"),
        BugMutation("srai_negative_wide", SINGLE, ("SRAI",),
                    lambda o: _neg(o.rs1) & bv.uge(o.imm, bv.const(16, 5)),
                    lambda o: bv.lshr(o.rs1, o.shamt), "SRAI of a negative value by 16 or more shifts logically"),
    ]
    multiple = [
        BugMutation("xor_after_add", MULTIPLE, ("XOR",), lambda o: o.prev_is("ADD"), lambda o: o.result ^ one,
                    "XOR directly after ADD flips bit 0"),
        BugMutation("add_after_xori", MULTIPLE, ("ADD",), lambda o: o.prev_is("XORI"), lambda o: o.result + one,
                    "ADD directly after XORI is off by one"),
        BugMutation("and_after_andi", MULTIPLE, ("AND",), lambda o: o.prev_is("ANDI"), lambda o: o.result ^ one,
                    "AND directly after ANDI flips bit 0"),
        BugMutation("xor_after_addi", MULTIPLE, ("XOR",), lambda o: o.prev_is("ADDI"), lambda o: o.result ^ one,
                    "XOR directly after ADDI flips bit 0"),
        BugMutation("add_after_sub", MULTIPLE, ("ADD",), lambda o: o.prev_is("SUB"), lambda o: o.result + one,
                    "ADD directly after SUB is off by one"),
        BugMutation("add_raw_hazard", MULTIPLE, ("ADD",), lambda o: bv.eq(o.sources[0], o.prev_rd),
                    lambda o: o.result + one, "ADD reading the register the previous instruction wrote is off by one"),
    ]
    return single + multiple


def mutation_by_id(mid: str) -> BugMutation:
    for m in mutation_catalog():
        if m.id == mid:
            return m
    raise KeyError(f"unknown mutation {mid!r}")


# ---------------------------------------------------------------- machine

@dataclass(frozen=True)
class MachineState:
    regs: tuple[Expr, ...]
    count_orig: int = 0
    count_mirror: int = 0
    prev_op: Expr = bv.const(NO_MNEMONIC, IDX)
    prev_rd: Expr = bv.const(0, IDX)

    @classmethod
    def concrete(cls, values: Sequence[int]) -> "MachineState":
        if len(values) != NUM_REGS:
            raise ValueError("need 32 register values")
        return cls(tuple(bv.const(v, XLEN) for v in values))

    @property
    def values(self) -> list[int]:
        return [r.value for r in self.regs]


# A register operand is ``(base, offset)``: a constant base names one register,
# a symbolic base ranges over the originals and is shifted by ``offset``.
Reg = tuple[Expr, int]


def _reg(index: int) -> Reg:
    return bv.const(index, IDX), 0


def _actual(reg: Reg) -> Expr:
    base, off = reg
    return bv.const(base.value + off, IDX) if base.is_const else base + off


def _read(regs: Sequence[Expr], reg: Reg, originals: range) -> Expr:
    base, off = reg
    if base.is_const:
        return regs[base.value + off]
    domain = list(originals)
    out = regs[domain[-1] + off]
    for r in reversed(domain[:-1]):
        out = bv.ite(bv.eq(base, bv.const(r, IDX)), regs[r + off], out)
    return out


def _write(regs: list[Expr], reg: Reg, value: Expr, originals: range) -> None:
    base, off = reg
    if base.is_const:
        regs[base.value + off] = value
        return
    for r in originals:
        regs[r + off] = bv.ite(bv.eq(base, bv.const(r, IDX)), value, regs[r + off])


def _execute(state: MachineState, mnemonic: str, rd: Reg, sources: Sequence[Reg], imm: Expr | None,
             mutation: BugMutation | None, partition: RegisterPartition,
             result: Expr | None = None) -> MachineState:
    """One instruction; ``result`` replaces the computed value when the caller knows an equal term."""
    try:
        spec = instruction_semantics(mnemonic, XLEN)
    except KeyError:
        raise UnsupportedInstruction(mnemonic) from None
    args = tuple(_read(state.regs, s, partition.original) for s in sources)
    if result is None:
        result = spec.apply(list(args) + ([imm] if imm is not None else []))
    rd_index = _actual(rd)
    if mutation is not None:
        result = mutation.apply(Operands(mnemonic, args, imm, result, rd_index,
                                         tuple(_actual(s) for s in sources), state.prev_op, state.prev_rd))
    regs = list(state.regs)
    _write(regs, rd, result, partition.original)
    base, off = rd
    if base.is_const:
        r = base.value + off
        to_orig, to_image = r in partition.original, r in partition.image
    else:
        to_orig, to_image = off == 0, off != 0
    return MachineState(tuple(regs), state.count_orig + to_orig, state.count_mirror + to_image,
                        bv.const(MNEMONIC_ID[mnemonic], IDX), rd_index)


def step(state: MachineState, instr: ConcreteInstruction, mutation: BugMutation | None = None,
         partition: RegisterPartition = EDSEP_PARTITION) -> MachineState:
    """Execute one concrete instruction, applying ``mutation`` where its guard holds."""
    imm = None
    if instr.imm is not None:
        imm = bv.const(instr.imm, instruction_semantics(instr.mnemonic).attrs[0][1])
    return _execute(state, instr.mnemonic, _reg(instr.rd), [_reg(s) for s in instr.sources], imm,
                    mutation, partition)


def consistent(state: MachineState, partition: RegisterPartition) -> Expr:
    return bv.all_of(bv.eq(state.regs[o], state.regs[e]) for o, e in partition.pairs())


def ready(state: MachineState) -> bool:
    return state.count_orig == state.count_mirror and state.count_orig >= 1


# ---------------------------------------------------------------- traces

@dataclass
class QedTrace:
    mode: str
    bound: int
    initial: list[int]
    instructions: list[ConcreteInstruction]
    pair: tuple[int, int]
    policy: str = PAIRWISE
    mutation: str = ""
    checkpoints: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.instructions)

    def text(self) -> str:
        lines = [f"mode {self.mode}", f"bound {self.bound}", f"policy {self.policy}",
                 f"mutation {self.mutation or '-'}", "initial"]
        for i in range(0, NUM_REGS, 8):
            lines.append("  " + " ".join(f"{v:08x}" for v in self.initial[i:i + 8]))
        lines.append("instructions")
        lines += ["  " + ins.text() for ins in self.instructions]
        lines.append("checkpoints " + " ".join(str(c) for c in self.checkpoints))
        lines.append(f"violated regs[{self.pair[0]}] regs[{self.pair[1]}]")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "QedTrace":
        rows = [l.rstrip() for l in text.strip().splitlines()]
        head = dict(r.split(" ", 1) for r in rows[:4])
        it = iter(rows[4:])
        if next(it) != "initial":
            raise ValueError("expected 'initial' section")
        initial: list[int] = []
        row = next(it)
        while row != "instructions":
            initial += [int(v, 16) for v in row.split()]
            row = next(it)
        instructions = []
        row = next(it)
        while not row.startswith("checkpoints"):
            instructions.append(_parse_instruction(row.strip()))
            row = next(it)
        checkpoints = [int(v) for v in row.split()[1:]]
        violated = next(it).split()
        pair = tuple(int(t[5:-1]) for t in violated[1:3])
        mutation = head["mutation"]
        return cls(head["mode"], int(head["bound"]), initial, instructions, pair, head["policy"],
                   "" if mutation == "-" else mutation, checkpoints)


def _parse_instruction(text: str) -> ConcreteInstruction:
    parts = text.split()
    regs = [int(p[5:p.index("]")]) for p in parts[1:] if p.startswith("regs[")]
    imm = next((int(p, 16) for p in parts[1:] if p.startswith("0x")), None)
    return ConcreteInstruction(parts[0], regs[0], tuple(regs[1:]), imm)


def replay(trace: QedTrace, mutation: BugMutation | None) -> str:
    """Run the trace concretely; confirmed iff a ready checkpoint shows the claimed pair differing."""
    partition = partition_for(trace.mode)
    state = MachineState.concrete(trace.initial)
    marks = set(trace.checkpoints) or {len(trace.instructions)}
    for i, ins in enumerate(trace.instructions, 1):
        state = step(state, ins, mutation, partition)
        if i in marks and ready(state):
            o, e = trace.pair
            if state.regs[o].value != state.regs[e].value:
                return CONFIRMED
    return REFUTED


# ---------------------------------------------------------------- bmc

@dataclass
class Slot:
    selector: Expr
    rd: Expr
    rs1: Expr
    rs2: Expr
    imm: Expr


@dataclass
class CheckResult:
    verdict: str
    mode: str
    bound: int
    mutation: str = ""
    trace: QedTrace | None = None
    wall_ms: float = 0.0
    reason: str = ""

    @property
    def violated(self) -> bool:
        return self.verdict == VIOLATED

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS


def _schedule(bound: int, policy: str) -> list[tuple[str, int]]:
    if policy == PAIRWISE:
        return [ev for i in range(bound) for ev in (("orig", i), ("copy", i))]
    if policy == INTERLEAVED:
        events = [("orig", 0)]
        for i in range(1, bound):
            events += [("orig", i), ("copy", i - 1)]
        return events + [("copy", bound - 1)]
    raise ValueError(f"unknown scheduling policy {policy!r}")


class Checker:
    """Builds the unrolled symbolic machine for one mode, policy and enabled set."""

    def __init__(self, mode: str, correspondences=None, enabled: Sequence[str] = DEFAULT_ENABLED,
                 policy: str = PAIRWISE, program_index: dict[str, int] | None = None, min_len: int = 3,
                 summarize: bool = True):
        self.mode = mode
        self.summarize = summarize
        self.partition = partition_for(mode)
        self.policy = policy
        self.enabled = list(enabled)
        if not self.enabled:
            raise ValueError("no instructions enabled")
        for m in self.enabled:
            instruction_semantics(m)
        self.templates: dict[str, list[TemplateOp]] = {}
        if mode == EDSEP:
            if correspondences is None:
                raise ValueError("EDSEP-V mode needs correspondences")
            program_index = program_index or {}
            for m in self.enabled:
                progs = correspondences.programs.get(m) if m in correspondences else None
                prog = select_program(progs or [], min_len, program_index.get(m))
                if prog is None:
                    raise ValueError(f"no correspondence for {m}")
                self.templates[m] = expand(prog)
        self.sel_width = max(1, (len(self.enabled) - 1).bit_length())

    # instruction instances -------------------------------------------------

    def _ops(self, kind: str, mnemonic: str, rd: Expr, sources: Sequence[Expr], imm: Expr | None):
        """(mnemonic, rd, sources, imm) for one original or for its counterpart; registers as :data:`Reg`."""
        spec = instruction_semantics(mnemonic)
        sources = sources[:len(spec.inputs)]
        if kind == "orig":
            return [(mnemonic, (rd, 0), [(s, 0) for s in sources], imm)]
        off = self.partition.offset
        if self.mode == EDDI:
            return [(mnemonic, (rd, off), [(s, off) for s in sources], imm)]
        temps = list(self.partition.temp)

        def reg(o) -> Reg:
            if o[0] == "ext":
                return sources[o[1]], off
            if o[0] == "tmp":
                return _reg(temps[o[1]])
            return rd, off

        out = []
        for op in self.templates[mnemonic]:
            op_imm = None
            if op.imm is not None:
                w = instruction_semantics(op.mnemonic).attrs[0][1]
                if op.imm[0] == "const":
                    op_imm = bv.const(op.imm[1], w)
                else:
                    op_imm = imm if imm.width == w else bv.zext(imm, w)
            out.append((op.mnemonic, reg(op.dst), [reg(s) for s in op.sources], op_imm))
        return out

    @staticmethod
    def _imm_for(mnemonic: str, imm12: Expr) -> Expr | None:
        spec = instruction_semantics(mnemonic)
        if not spec.attrs:
            return None
        w = spec.attrs[0][1]
        return bv.extract(imm12, w - 1, 0) if w < imm12.width else imm12

    def _run_event(self, state: MachineState, kind: str, slot: Slot, mutation) -> MachineState:
        branches = []
        for m in self.enabled:
            imm = self._imm_for(m, slot.imm)
            ops = self._ops(kind, m, slot.rd, [slot.rs1, slot.rs2], imm)
            summary = None
            if kind == "copy" and self.summarize and not (mutation and {op[0] for op in ops} & set(mutation.targets)):
                # the stored sequence is proven equal to m, and nothing in it is mutated
                off = self.partition.offset
                spec = instruction_semantics(m)
                args = [_read(state.regs, (r, off), self.partition.original) for r in (slot.rs1, slot.rs2)]
                summary = spec.apply(args[:len(spec.inputs)] + ([imm] if imm is not None else []))
            s = state
            for i, (mn, rd, sources, op_imm) in enumerate(ops):
                s = _execute(s, mn, rd, sources, op_imm, mutation, self.partition,
                             summary if i == len(ops) - 1 else None)
            branches.append(s)
        return self._merge(slot.selector, branches)

    def _merge(self, selector: Expr, branches: list[MachineState]) -> MachineState:
        if len(branches) == 1:
            return branches[0]
        counts = {(b.count_orig, b.count_mirror) for b in branches}
        if len(counts) != 1:
            raise AssertionError("writeback counts must not depend on the selected instruction")

        def pick(values: list[Expr]) -> Expr:
            out = values[-1]
            for k in range(len(values) - 2, -1, -1):
                out = bv.ite(bv.eq(selector, bv.const(k, self.sel_width)), values[k], out)
            return out

        regs = tuple(pick([b.regs[r] for b in branches]) for r in range(NUM_REGS))
        co, cm = counts.pop()
        return MachineState(regs, co, cm, pick([b.prev_op for b in branches]), pick([b.prev_rd for b in branches]))

    # unrolling -------------------------------------------------------------

    def slots(self, bound: int) -> list[Slot]:
        out = []
        for i in range(bound):
            out.append(Slot(bv.var(f"sel{i}", self.sel_width), bv.var(f"rd{i}", IDX), bv.var(f"rs1_{i}", IDX),
                            bv.var(f"rs2_{i}", IDX), bv.var(f"imm{i}", 12)))
        return out

    def domain_constraints(self, slots: Sequence[Slot]) -> Expr:
        top = bv.const(len(self.partition.original), IDX)
        terms = []
        for s in slots:
            terms.append(bv.ult(s.selector, bv.const(len(self.enabled), self.sel_width))
                         if len(self.enabled) < (1 << self.sel_width) else bv.TRUE)
            for r in (s.rd, s.rs1, s.rs2):
                terms.append(bv.ult(r, top))
        return bv.all_of(terms)

    def initial_state(self) -> MachineState:
        regs = [bv.var(f"r{i}", XLEN) for i in range(NUM_REGS)]
        for o, e in self.partition.pairs():
            regs[e] = regs[o]
        return MachineState(tuple(regs))

    def unroll(self, bound: int, mutation: BugMutation | None):
        slots = self.slots(bound)
        state = self.initial_state()
        checks: list[Expr] = []
        for kind, i in _schedule(bound, self.policy):
            state = self._run_event(state, kind, slots[i], mutation)
            if ready(state):
                checks.append(bv.not_(consistent(state, self.partition)))
        return slots, bv.any_of(checks)

    def concretize(self, bound: int, slots: Sequence[Slot], model: dict[str, int]) -> tuple[list, list[int]]:
        """Concrete committed instructions for a model, with ready checkpoint positions."""
        out: list[ConcreteInstruction] = []
        marks: list[int] = []
        co = cm = 0
        for kind, i in _schedule(bound, self.policy):
            s = slots[i]
            m = self.enabled[model.get(s.selector.name, 0)]
            rd = bv.const(model.get(s.rd.name, 0), IDX)
            srcs = [bv.const(model.get(s.rs1.name, 0), IDX), bv.const(model.get(s.rs2.name, 0), IDX)]
            imm = self._imm_for(m, bv.const(model.get(s.imm.name, 0), 12))
            for mn, r, ss, op_imm in self._ops(kind, m, rd, srcs, imm):
                index = _actual(r).value
                out.append(ConcreteInstruction(mn, index, tuple(_actual(x).value for x in ss),
                                               None if op_imm is None else op_imm.value))
                co += index in self.partition.original
                cm += index in self.partition.image
            if co == cm and co >= 1:
                marks.append(len(out))
        return out, marks


def bmc_check(mode: str, mutation: BugMutation | None, bound: int, correspondences=None,
              session: smt.SmtSession | None = None, policy: str = PAIRWISE,
              enabled: Sequence[str] | None = None, program_index: dict[str, int] | None = None,
              summarize: bool = True) -> CheckResult:
    """Look for a ready-but-inconsistent state within ``bound`` original instructions.

    With ``summarize`` a counterpart sequence that contains no mutated
    mnemonic contributes its target's semantics instead of the unrolled
    sequence. The stored programs are verified equivalent, so this leaves the
    verdict unchanged while keeping the bug-free parts of the formula small.
    """
    if bound < 1:
        raise ValueError("bound must be at least 1")
    if enabled is None:
        enabled = list(DEFAULT_ENABLED)
        if mutation is not None:
            enabled += [m for m in mutation.targets if m not in enabled]
    checker = Checker(mode, correspondences, enabled, policy, program_index, summarize=summarize)
    start = time.perf_counter()
    mid = mutation.id if mutation else ""
    slots, bad = checker.unroll(bound, mutation)
    query = bv.all_of([checker.domain_constraints(slots), bad])
    if query.is_const and not query.value:
        return CheckResult(HOLDS, mode, bound, mid, wall_ms=(time.perf_counter() - start) * 1000)
    own = session is None
    if own:
        session = smt.SmtSession()
    try:
        names = [v for s in slots for v in (s.selector.name, s.rd.name, s.rs1.name, s.rs2.name, s.imm.name)]
        names += [f"r{i}" for i in range(NUM_REGS)]
        result = session.query([query], names)
    except smt.SmtError as exc:
        return CheckResult(UNKNOWN, mode, bound, mid, wall_ms=(time.perf_counter() - start) * 1000, reason=str(exc))
    finally:
        if own:
            session.close()
    elapsed = (time.perf_counter() - start) * 1000
    if result.unsat:
        return CheckResult(HOLDS, mode, bound, mid, wall_ms=elapsed)
    if result.unknown:
        return CheckResult(UNKNOWN, mode, bound, mid, wall_ms=elapsed, reason=result.reason)
    model = result.model
    initial = [model[f"r{i}"] for i in range(NUM_REGS)]
    for o, e in checker.partition.pairs():
        initial[e] = initial[o]
    instructions, marks = checker.concretize(bound, slots, model)
    trace = QedTrace(mode, bound, initial, instructions, (0, 0), policy, mid, marks)
    trace.pair = _violated_pair(trace, mutation)
    if replay(trace, mutation) != CONFIRMED:
        raise AssertionError("solver trace does not replay")
    return CheckResult(VIOLATED, mode, bound, mid, trace, elapsed)


def _violated_pair(trace: QedTrace, mutation: BugMutation | None) -> tuple[int, int]:
    partition = partition_for(trace.mode)
    state = MachineState.concrete(trace.initial)
    marks = set(trace.checkpoints)
    for i, ins in enumerate(trace.instructions, 1):
        state = step(state, ins, mutation, partition)
        if i in marks and ready(state):
            for o, e in partition.pairs():
                if state.regs[o].value != state.regs[e].value:
                    return (o, e)
    return (0, 0)


def find_violation(mode: str, mutation: BugMutation | None, max_bound: int, correspondences=None,
                   session: smt.SmtSession | None = None, **kwargs) -> CheckResult:
    """Increase the bound from 1 until a violation appears or ``max_bound`` holds."""
    result = None
    for b in range(1, max_bound + 1):
        result = bmc_check(mode, mutation, b, correspondences, session, **kwargs)
        if not result.holds:
            return result
    return result


RESULT_COLUMNS = ("mutation_id", "mode", "bound", "verdict", "wall_ms", "trace_len")


def write_results_csv(path, results: Iterable[CheckResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for r in results:
            w.writerow([r.mutation or "-", r.mode, r.bound, r.verdict, f"{r.wall_ms:.1f}",
                        len(r.trace) if r.trace else ""])
