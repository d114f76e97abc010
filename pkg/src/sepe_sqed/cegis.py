"""Component-based CEGIS over a fixed multiset of library components.

Locations follow the usual linear-order encoding: slots ``0..m-1`` hold the
program inputs (the target's operands, immediates included) and slots
``m..m+n-1`` hold the outputs of the ``n`` components. Every component is
used exactly once, the last slot is the program output and every other
output must feed some later input.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import bv, smt
from .bv import Expr
from .isa import Component, InstructionSpec, component_by_id, instruction_semantics

log = logging.getLogger(__name__)

MAX_ITERATIONS = 64

FOUND, UNSAT, ITERATION_CAP, UNKNOWN = "found", "unsat", "iteration_cap", "unknown"


class EncodingError(RuntimeError):
    """A solver model contradicts the well-formedness constraints."""


@dataclass(frozen=True)
class Line:
    component: int
    sources: tuple[int, ...]
    attrs: tuple[int, ...] = ()


@dataclass(frozen=True)
class SynthesizedProgram:
    """A loop-free program equivalent to ``target``.

    ``sources`` index the slot space: values below the number of program
    inputs name an input, ``m + i`` names the output of line ``i``.
    """

    target: str
    lines: tuple[Line, ...]
    xlen: int = 32

    @property
    def spec(self) -> InstructionSpec:
        return instruction_semantics(self.target, self.xlen)

    @property
    def inputs(self) -> tuple[tuple[str, int], ...]:
        return self.spec.params

    def __len__(self) -> int:
        return len(self.lines)

    def components(self) -> list[Component]:
        return [component_by_id(line.component, self.xlen) for line in self.lines]

    def validate(self) -> None:
        m = len(self.inputs)
        widths = [w for _, w in self.inputs]
        n_regs = len(self.spec.inputs)
        for i, (line, comp) in enumerate(zip(self.lines, self.components())):
            if len(line.sources) != len(comp.input_widths) or len(line.attrs) != len(comp.attr_widths):
                raise EncodingError(f"line {i}: arity mismatch for {comp.name}")
            for src, width, is_reg in zip(line.sources, comp.input_widths, comp.register_inputs):
                if not 0 <= src < m + i:
                    raise EncodingError(f"line {i}: source {src} is not an input or earlier line")
                src_width = widths[src] if src < m else self.xlen
                if src_width != width:
                    raise EncodingError(f"line {i}: width {src_width} source feeds width {width} input")
                if (src < n_regs or src >= m) != is_reg:
                    raise EncodingError(f"line {i}: source {src} crosses the register/immediate roles")
            for value, width in zip(line.attrs, comp.attr_widths):
                if not 0 <= value <= bv.mask(width):
                    raise EncodingError(f"line {i}: attribute {value:#x} does not fit {width} bits")

    def expr(self, inputs: Sequence[Expr] | None = None) -> Expr:
        """Flattened semantics over the program inputs."""
        if inputs is None:
            inputs = [bv.var(n, w) for n, w in self.inputs]
        slots = list(inputs)
        for line, comp in zip(self.lines, self.components()):
            attrs = [bv.const(a, w) for a, w in zip(line.attrs, comp.attr_widths)]
            slots.append(comp.semantics([slots[s] for s in line.sources], attrs))
        return slots[-1]

    def evaluate(self, *values: int) -> int:
        return self.expr([bv.const(v, w) for v, (_, w) in zip(values, self.inputs)]).value

    def is_identity(self) -> bool:
        """True for the one-line program that is the target itself on its inputs in order."""
        if len(self.lines) != 1:
            return False
        comp = self.components()[0]
        order = comp.effective_order
        if order is None or order[0] != self.target:
            return False
        mnemonic, perm = order
        return len(perm) == len(self.inputs) and all(
            self.lines[0].sources[perm[i]] == i for i in range(len(perm)))

    def source_name(self, slot: int) -> str:
        m = len(self.inputs)
        return self.inputs[slot][0] if slot < m else f"L{slot - m}"

    def to_json(self) -> dict:
        return {
            "components": [line.component for line in self.lines],
            "wiring": [[self.source_name(s) for s in line.sources] for line in self.lines],
            "attributes": [list(line.attrs) for line in self.lines],
            "verified": True,
        }

    @classmethod
    def from_json(cls, target: str, data: dict, xlen: int = 32) -> "SynthesizedProgram":
        names = [n for n, _ in instruction_semantics(target, xlen).params]
        m = len(names)

        def slot(name: str) -> int:
            return m + int(name[1:]) if name.startswith("L") and name[1:].isdigit() else names.index(name)

        lines = tuple(
            Line(cid, tuple(slot(s) for s in wiring), tuple(attrs))
            for cid, wiring, attrs in zip(data["components"], data["wiring"], data["attributes"]))
        prog = cls(target, lines, xlen)
        prog.validate()
        return prog

    def listing(self) -> str:
        rows = []
        for i, (line, comp) in enumerate(zip(self.lines, self.components())):
            args = [self.source_name(s) for s in line.sources] + [f"{a:#x}" for a in line.attrs]
            rows.append(f"L{i} = {comp.name} {', '.join(args)}")
        return "\n".join(rows)


class ExampleSet:
    """Counterexample inputs gathered during one CEGIS run; no duplicates, append-only."""

    def __init__(self, examples: Iterable[tuple[int, ...]] = ()):
        self._items: list[tuple[int, ...]] = []
        for e in examples:
            self.add(e)

    def add(self, example: Sequence[int]) -> bool:
        example = tuple(example)
        if example in self._items:
            return False
        self._items.append(example)
        return True

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __contains__(self, example):
        return tuple(example) in self._items


class Encoding:
    """Location, attribute and value variables for one (target, multiset) pair."""

    def __init__(self, target: InstructionSpec, multiset: Sequence[Component]):
        if not multiset:
            raise ValueError("multiset must not be empty")
        self.target = target
        self.multiset = list(multiset)
        self.xlen = target.output[1]
        self.m = len(target.params)
        self.n = len(multiset)
        self.widths = [w for _, w in target.params]
        self.n_regs = len(target.inputs)
        self.lw = (self.m + self.n).bit_length()
        self.l_out = [bv.var(f"lo{j}", self.lw) for j in range(self.n)]
        self.l_in = [[bv.var(f"li{j}_{k}", self.lw) for k in range(len(c.input_widths))]
                     for j, c in enumerate(multiset)]
        self.attrs = [[bv.var(f"at{j}_{t}", w) for t, w in enumerate(c.attr_widths)]
                      for j, c in enumerate(multiset)]
        self.last = self.loc(self.m + self.n - 1)

    def loc(self, value: int) -> Expr:
        return bv.const(value, self.lw)

    def _sources(self, j: int, k: int):
        """Candidate (location term, program input index or component index) pairs for input ``k`` of line ``j``.

        Sources must match in width and in role: register values (register
        operands and component outputs) never feed immediate fields and vice versa.
        """
        comp = self.multiset[j]
        width, is_reg = comp.input_widths[k], comp.register_inputs[k]
        for p, w in enumerate(self.widths):
            if w == width and (p < self.n_regs) == is_reg:
                yield self.loc(p), ("in", p)
        if is_reg:
            for i, other in enumerate(self.multiset):
                if i != j and other.output_width == width:
                    yield self.l_out[i], ("out", i)

    def wfp(self) -> Expr:
        m, n = self.m, self.n
        terms = []
        for j in range(n):
            terms.append(bv.uge(self.l_out[j], self.loc(m)))
            terms.append(bv.ult(self.l_out[j], self.loc(m + n)))
            for i in range(j):
                terms.append(bv.ne(self.l_out[i], self.l_out[j]))
                if self.multiset[i].id == self.multiset[j].id:
                    terms.append(bv.ult(self.l_out[i], self.l_out[j]))
        for j, comp in enumerate(self.multiset):
            for k, width in enumerate(comp.input_widths):
                li = self.l_in[j][k]
                terms.append(bv.ult(li, self.l_out[j]))
                terms.append(bv.any_of(bv.eq(li, src) for src, _ in self._sources(j, k)))
            if comp.commutative:
                terms.append(bv.uge(self.l_in[j][0], self.l_in[j][1]))
            used = [bv.eq(self.l_out[j], self.last)]
            for i, other in enumerate(self.multiset):
                if i != j:
                    for k, width in enumerate(other.input_widths):
                        if width == comp.output_width and other.register_inputs[k]:
                            used.append(bv.eq(self.l_in[i][k], self.l_out[j]))
            terms.append(bv.any_of(used))
            terms.append(self._input_constraint(j, comp))
        return bv.all_of(terms)

    def _input_constraint(self, j: int, comp: Component) -> Expr:
        order = comp.effective_order
        if order is None or order[0] != self.target.mnemonic or len(order[1]) != self.m:
            return bv.TRUE
        perm = order[1]
        return bv.not_(bv.all_of(bv.eq(self.l_in[j][perm[i]], self.loc(i)) for i in range(self.m)))

    def conn(self, example: Sequence[int], tag: int) -> Expr:
        """Connection, library and specification constraints for one concrete input."""
        inputs = [bv.const(v, w) for v, w in zip(example, self.widths)]
        expected = bv.const(self.target.evaluate(*example), self.xlen)
        v_out = [bv.var(f"vo{j}_e{tag}", c.output_width) for j, c in enumerate(self.multiset)]
        terms = []
        for j, comp in enumerate(self.multiset):
            v_in = [bv.var(f"vi{j}_{k}_e{tag}", w) for k, w in enumerate(comp.input_widths)]
            for k, width in enumerate(comp.input_widths):
                for src, (kind, idx) in self._sources(j, k):
                    value = inputs[idx] if kind == "in" else v_out[idx]
                    terms.append(bv.implies(bv.eq(self.l_in[j][k], src), bv.eq(v_in[k], value)))
            terms.append(bv.eq(v_out[j], comp.semantics(v_in, self.attrs[j])))
            terms.append(bv.implies(bv.eq(self.l_out[j], self.last), bv.eq(v_out[j], expected)))
        return bv.all_of(terms)

    def decode(self, model: dict[str, int]) -> SynthesizedProgram:
        try:
            outs = [model[v.name] for v in self.l_out]
            ins = [[model[v.name] for v in row] for row in self.l_in]
            attrs = [[model[v.name] for v in row] for row in self.attrs]
        except KeyError as exc:
            raise EncodingError(f"model lacks {exc}") from None
        if sorted(outs) != list(range(self.m, self.m + self.n)):
            raise EncodingError(f"output locations {outs} are not a permutation of the line slots")
        order = sorted(range(self.n), key=lambda j: outs[j])
        lines = tuple(Line(self.multiset[j].id, tuple(ins[j]), tuple(attrs[j])) for j in order)
        prog = SynthesizedProgram(self.target.mnemonic, lines, self.xlen)
        prog.validate()
        return prog

    def assignment(self, program: SynthesizedProgram) -> dict[str, int]:
        """Location and attribute values that reproduce ``program`` (inverse of :meth:`decode`)."""
        free = list(range(self.n))
        values: dict[str, int] = {}
        for pos, line in enumerate(program.lines):
            j = next(j for j in free if self.multiset[j].id == line.component)
            free.remove(j)
            values[self.l_out[j].name] = self.m + pos
            for v, src in zip(self.l_in[j], line.sources):
                values[v.name] = src
            for v, a in zip(self.attrs[j], line.attrs):
                values[v.name] = a
        return values


def build_wfp(multiset: Sequence[Component], target: InstructionSpec) -> Expr:
    return Encoding(target, multiset).wfp()


def build_conn(multiset: Sequence[Component], target: InstructionSpec, examples: Iterable[Sequence[int]]) -> Expr:
    enc = Encoding(target, multiset)
    examples = list(ExampleSet(examples))
    if not examples:
        raise ValueError("example set must not be empty")
    return bv.all_of(enc.conn(e, i) for i, e in enumerate(examples))


def decode_program(model: dict[str, int], multiset: Sequence[Component], target: InstructionSpec) -> SynthesizedProgram:
    return Encoding(target, multiset).decode(model)


EQUIVALENT, COUNTEREXAMPLE = "equivalent", "counterexample"


@dataclass
class Verdict:
    status: str
    counterexample: tuple[int, ...] | None = None

    @property
    def equivalent(self) -> bool:
        return self.status == EQUIVALENT


def verify_equivalence(target: InstructionSpec, program: SynthesizedProgram, session: smt.SmtSession) -> Verdict:
    """Prove ``program`` equals ``target`` for all inputs, or return a witness input."""
    program.validate()
    inputs = [bv.var(n, w) for n, w in target.params]
    differ = bv.ne(program.expr(inputs), target.semantics)
    if differ.is_const:
        return Verdict(EQUIVALENT) if not differ.value else Verdict(COUNTEREXAMPLE, tuple(0 for _ in inputs))
    result = session.query([differ], [v.name for v in inputs])
    if result.unsat:
        return Verdict(EQUIVALENT)
    if result.unknown:
        return Verdict(UNKNOWN)
    values = result.model
    witness = tuple(values[v.name] for v in inputs)
    if program.evaluate(*witness) == target.evaluate(*witness):
        raise EncodingError(f"solver counterexample {witness} does not separate the programs")
    return Verdict(COUNTEREXAMPLE, witness)


def random_inputs(params: Sequence[tuple[str, int]], samples: int, seed: int = 0) -> dict[str, np.ndarray]:
    """Uniform operands with the edge values 0, 1, -1 and the sign boundaries mixed in."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, width in params:
        m = bv.mask(width)
        values = rng.integers(0, m, samples, dtype=np.uint64, endpoint=True)
        edges = np.array([0, 1, m, m >> 1, (m >> 1) + 1], dtype=np.uint64)
        pick = rng.random(samples) < 0.2
        values[pick] = rng.choice(edges, int(pick.sum()))
        out[name] = values
    return out


def differential_test(program: SynthesizedProgram, samples: int = 10_000, seed: int = 0) -> list[tuple[int, ...]]:
    """Inputs on which ``program`` and its target disagree, over ``samples`` random tuples."""
    spec = program.spec
    env = random_inputs(spec.params, samples, seed)
    diff = np.nonzero(bv.eval_batch(program.expr(), env, samples) != bv.eval_batch(spec.semantics, env, samples))[0]
    return [tuple(int(env[n][i]) for n, _ in spec.params) for i in diff]


@dataclass
class CegisResult:
    program: SynthesizedProgram | None
    status: str
    iterations: int = 0
    solver_calls: int = 0
    examples: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def found(self) -> bool:
        return self.program is not None


def cegis(target: InstructionSpec, multiset: Sequence[Component], session: smt.SmtSession | None = None,
          max_iterations: int = MAX_ITERATIONS, initial: Sequence[int] | None = None) -> CegisResult:
    """Synthesize a program over exactly the components of ``multiset`` that computes ``target``."""
    own = session is None
    if own:
        session = smt.SmtSession()
    calls_before = session.calls
    enc = Encoding(target, multiset)
    examples = ExampleSet([tuple(initial) if initial is not None else (0,) * enc.m])
    wfp = enc.wfp()
    conns: list[Expr] = []
    status, program, iterations = ITERATION_CAP, None, 0
    try:
        while iterations < max_iterations:
            iterations += 1
            for e in list(examples)[len(conns):]:
                conns.append(enc.conn(e, len(conns)))
            query = bv.all_of([wfp] + conns)
            if query.is_const and not query.value:
                status = UNSAT
                break
            names = [v.name for v in enc.l_out] + [v.name for row in enc.l_in for v in row] \
                + [v.name for row in enc.attrs for v in row]
            result = session.query([query], names)
            if result.unsat:
                status = UNSAT
                break
            if result.unknown:
                status = UNKNOWN
                break
            candidate = enc.decode(result.model)
            verdict = verify_equivalence(target, candidate, session)
            if verdict.equivalent:
                status, program = FOUND, candidate
                break
            if verdict.status == UNKNOWN:
                status = UNKNOWN
                break
            if not examples.add(verdict.counterexample):
                raise EncodingError(f"counterexample {verdict.counterexample} repeated")
    finally:
        if own:
            session.close()
    return CegisResult(program, status, iterations, session.calls - calls_before, list(examples))
