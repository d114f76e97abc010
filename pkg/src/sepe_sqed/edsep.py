"""Register allocation of synthesized programs into EDSEP-V instruction pairs.

The register file is split into originals ``O``, their images ``E`` (index +13)
and scratch ``T``. An original instruction uses only ``O``; its equivalent
sequence reads the ``E`` images of the original sources, keeps intermediates in
``T`` and writes its result to the ``E`` image of the original destination.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from . import bv
from .cegis import SynthesizedProgram
from .isa import ATTR, IN, TMP, ZERO, instruction_semantics

NUM_REGS = 32


class PartitionViolation(ValueError):
    pass


class TempExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class RegisterPartition:
    original: range
    image: range
    temp: range

    def __post_init__(self):
        regs = list(self.original) + list(self.image) + list(self.temp)
        if sorted(regs) != list(range(NUM_REGS)) or len(self.original) != len(self.image):
            raise ValueError("partition must split 0..31 with |O| == |E|")

    @property
    def offset(self) -> int:
        return self.image.start - self.original.start

    def mirror(self, reg: int) -> int:
        if reg not in self.original:
            raise PartitionViolation(f"regs[{reg}] is not an original register")
        return reg + self.offset

    def pairs(self) -> list[tuple[int, int]]:
        return [(r, r + self.offset) for r in self.original]


EDSEP_PARTITION = RegisterPartition(range(0, 13), range(13, 26), range(26, 32))
EDDI_PARTITION = RegisterPartition(range(0, 16), range(16, 32), range(0))


@dataclass(frozen=True)
class ConcreteInstruction:
    mnemonic: str
    rd: int
    sources: tuple[int, ...] = ()
    imm: int | None = None
    labels: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        spec = instruction_semantics(self.mnemonic)
        if len(self.sources) != len(spec.inputs):
            raise ValueError(f"{self.mnemonic} takes {len(spec.inputs)} register sources")
        for r in (self.rd, *self.sources):
            if not 0 <= r < NUM_REGS:
                raise ValueError(f"register index {r} out of range")
        if spec.attrs:
            if self.imm is None or not 0 <= self.imm <= bv.mask(spec.attrs[0][1]):
                raise ValueError(f"{self.mnemonic} needs a {spec.attrs[0][1]}-bit immediate, got {self.imm}")
        elif self.imm is not None:
            raise ValueError(f"{self.mnemonic} takes no immediate")

    @property
    def registers(self) -> tuple[int, ...]:
        return (self.rd, *self.sources)

    def text(self) -> str:
        labels = self.labels or ("",) * (1 + len(self.sources))
        parts = [self.mnemonic]
        for reg, label in zip(self.registers, labels):
            parts.append(f"regs[{reg}]({label})" if label else f"regs[{reg}]")
        if self.imm is not None:
            parts.append(f"{self.imm:#x}")
        return " ".join(parts)

    def execute(self, regs: list[int]) -> None:
        spec = instruction_semantics(self.mnemonic)
        args = [regs[r] for r in self.sources] + ([self.imm] if self.imm is not None else [])
        regs[self.rd] = spec.evaluate(*args)


# Template operands: a register operand is ("ext", input index), ("tmp", temp index)
# or ("dst",); an immediate operand is ("ext", input index) or ("const", value).
Operand = tuple


@dataclass(frozen=True)
class TemplateOp:
    mnemonic: str
    dst: Operand
    sources: tuple[Operand, ...]
    imm: Operand | None = None


def expand(program: SynthesizedProgram) -> list[TemplateOp]:
    """Flatten a program into single instructions with symbolic register roles.

    Each component output gets a fresh temporary except the very last
    instruction, which writes the destination. A register-valued zero is
    produced once, on demand, as ``ANDI tmp, <first register input>, 0``.
    """
    target = program.spec
    m = len(target.params)
    n_regs = len(target.inputs)
    if n_regs == 0:
        raise ValueError("program has no register input to derive a zero from")
    ops: list[TemplateOp] = []
    temps = 0
    zero: Operand | None = None
    line_out: list[Operand] = []

    def fresh() -> Operand:
        nonlocal temps
        temps += 1
        return ("tmp", temps - 1)

    def zero_reg() -> Operand:
        nonlocal zero
        if zero is None:
            zero = fresh()
            ops.append(TemplateOp("ANDI", zero, (("ext", 0),), ("const", 0)))
        return zero

    last_line = len(program.lines) - 1
    for li, (line, comp) in enumerate(zip(program.lines, program.components())):
        micro_out: list[Operand] = []
        for oi, op in enumerate(comp.ops):
            spec = instruction_semantics(op.mnemonic, program.xlen)
            srcs: list[Operand] = []
            imm: Operand | None = None
            for pi, binding in enumerate(op.operands):
                is_reg = pi < len(spec.inputs)
                kind = binding[0]
                if kind == IN:
                    slot = line.sources[binding[1]]
                    if slot < m:
                        if (slot < n_regs) != is_reg:
                            raise ValueError(f"{comp.name}: input {slot} crosses register/immediate roles")
                        operand = ("ext", slot)
                    else:
                        if not is_reg:
                            raise ValueError(f"{comp.name}: register value used as an immediate")
                        operand = line_out[slot - m]
                elif kind == TMP:
                    operand = micro_out[binding[1]]
                elif kind == ATTR:
                    operand = ("const", line.attrs[binding[1]])
                elif kind == ZERO:
                    operand = zero_reg() if is_reg else ("const", 0)
                else:
                    raise ValueError(f"unknown operand binding {binding!r}")
                if is_reg:
                    if operand[0] == "const":
                        raise ValueError(f"{comp.name}: constant in a register operand")
                    srcs.append(operand)
                else:
                    if operand[0] not in ("const", "ext"):
                        raise ValueError(f"{comp.name}: register in an immediate operand")
                    imm = operand
            final = li == last_line and oi == len(comp.ops) - 1
            dst = ("dst",) if final else fresh()
            ops.append(TemplateOp(op.mnemonic, dst, tuple(srcs), imm))
            micro_out.append(dst)
        line_out.append(micro_out[-1])
    return ops


def template_mnemonics(program: SynthesizedProgram) -> list[str]:
    return [op.mnemonic for op in expand(program)]


@dataclass(frozen=True)
class EdsepPair:
    original: ConcreteInstruction
    equivalent: tuple[ConcreteInstruction, ...]

    def text(self) -> str:
        lines = ["#Original instruction", self.original.text(), "",
                 "#Semantically equivalent instruction sequence"]
        lines += [i.text() for i in self.equivalent]
        return "\n".join(lines) + "\n"


def _check_original(original: ConcreteInstruction, partition: RegisterPartition) -> None:
    bad = [r for r in original.registers if r not in partition.original]
    if bad:
        raise PartitionViolation(f"original {original.mnemonic} uses non-original registers {bad}")


def allocate(original: ConcreteInstruction, program: SynthesizedProgram,
             partition: RegisterPartition = EDSEP_PARTITION) -> EdsepPair:
    if original.mnemonic != program.target:
        raise ValueError(f"program implements {program.target}, not {original.mnemonic}")
    _check_original(original, partition)
    target = program.spec
    reg_names = [n for n, _ in target.inputs]
    ext_regs = [partition.mirror(r) for r in original.sources]
    temps = list(partition.temp)
    template = expand(program)
    n_temps = 1 + max((op.dst[1] for op in template if op.dst[0] == "tmp"), default=-1)
    if n_temps > len(temps):
        raise TempExhausted(f"{n_temps} temporaries needed, {len(temps)} available")

    def reg(operand: Operand) -> tuple[int, str]:
        if operand[0] == "ext":
            return ext_regs[operand[1]], reg_names[operand[1]]
        if operand[0] == "tmp":
            return temps[operand[1]], f"t{operand[1] + 1}"
        return partition.mirror(original.rd), "rd"

    def immediate(operand: Operand | None) -> int | None:
        if operand is None:
            return None
        if operand[0] == "ext":
            return original.imm
        return operand[1]

    out = []
    for op in template:
        dst = reg(op.dst)
        srcs = [reg(s) for s in op.sources]
        out.append(ConcreteInstruction(op.mnemonic, dst[0], tuple(r for r, _ in srcs), immediate(op.imm),
                                       (dst[1], *(lab for _, lab in srcs))))
    labelled = ConcreteInstruction(original.mnemonic, original.rd, original.sources, original.imm,
                                   ("rd", *reg_names))
    return EdsepPair(labelled, tuple(out))


def select_program(programs: Sequence[SynthesizedProgram], min_len: int = 3,
                   index: int | None = None) -> SynthesizedProgram | None:
    """Pick the program used as the equivalent of its target.

    Preference: at least ``min_len`` lines, fewest executions of the target's
    own mnemonic, fewest concrete instructions; ties keep database order.
    """
    if not programs:
        return None
    if index is not None:
        return programs[index]

    def key(p: SynthesizedProgram) -> tuple[bool, int, int]:
        names = template_mnemonics(p)
        return len(p) < min_len, names.count(p.target), len(names)

    return min(programs, key=key)


def _original(mnemonic: str, rd: int, sources: Sequence[int], imm: int | None) -> ConcreteInstruction:
    spec = instruction_semantics(mnemonic)
    return ConcreteInstruction(mnemonic, rd, tuple(sources[:len(spec.inputs)]), imm if spec.attrs else None)


def enumerate_pairs(correspondences, operands: dict | None = None, registers: Iterable[int] | None = None,
                    immediates: Iterable[int] = (0,), all_programs: bool = False,
                    coverage: dict | None = None,
                    partition: RegisterPartition = EDSEP_PARTITION) -> Iterator[EdsepPair]:
    """Concrete pairs for every stored target.

    With ``operands`` (keys ``rd``, ``rs1``, ``rs2``, ``imm``) each target is
    instantiated once; otherwise every assignment over ``registers`` (and
    ``immediates`` for I-type targets) is produced. ``coverage`` collects the
    number of pairs per mnemonic, zero for targets without a program.
    """
    for mnemonic, programs in correspondences.programs.items():
        chosen = programs if all_programs else [p for p in [select_program(programs)] if p is not None]
        if coverage is not None:
            coverage.setdefault(mnemonic, 0)
        spec = instruction_semantics(mnemonic)
        if operands is not None:
            assignments = [(operands.get("rd", 1), (operands.get("rs1", 2), operands.get("rs2", 3)),
                            operands.get("imm", 0))]
        else:
            regs = list(registers if registers is not None else partition.original)
            srcs = [(a, b) for a in regs for b in (regs if len(spec.inputs) > 1 else regs[:1])]
            imms = list(immediates) if spec.attrs else [None]
            assignments = [(rd, s, i) for rd in regs for s in srcs for i in imms]
        for program in chosen:
            for rd, srcs, imm in assignments:
                pair = allocate(_original(mnemonic, rd, srcs, imm), program, partition)
                if coverage is not None:
                    coverage[mnemonic] += 1
                yield pair


def dump_pairs(pairs: Iterable[EdsepPair]) -> str:
    return "\n".join(p.text() for p in pairs)
