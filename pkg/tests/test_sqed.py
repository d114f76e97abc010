import csv
import random

import pytest

from sepe_sqed import bv
from sepe_sqed.cegis import Line, SynthesizedProgram
from sepe_sqed.edsep import EDDI_PARTITION, EDSEP_PARTITION, ConcreteInstruction, allocate
from sepe_sqed.hpf import CorrespondenceSet
from sepe_sqed.isa import MNEMONIC_ID, component_by_name, instruction_semantics
from sepe_sqed.sqed import (CONFIRMED, EDDI, EDSEP, HOLDS, INTERLEAVED, MULTIPLE, PAIRWISE, REFUTED, RESULT_COLUMNS,
                            SINGLE, VIOLATED, Checker, MachineState, Operands, QedTrace, _schedule, bmc_check,
                            find_violation, mutation_by_id, mutation_catalog, ready, replay, step,
                            write_results_csv)


def cid(name):
    return component_by_name(name).id


LISTING1 = SynthesizedProgram("SUB", (Line(cid("XORI"), (0,), (0xFFF,)), Line(cid("ADD"), (2, 1)),
                                      Line(cid("XORI"), (3,), (0xFFF,))))
XOR_VIA_OR = SynthesizedProgram("XOR", (Line(cid("OR"), (0, 1)), Line(cid("AND"), (0, 1)),
                                        Line(cid("SUB"), (2, 3))))
SMALL_DB = CorrespondenceSet({"SUB": [LISTING1], "XOR": [XOR_VIA_OR]})


def regs(seed=0):
    rng = random.Random(seed)
    values = [rng.getrandbits(32) for _ in range(32)]
    for o, e in EDSEP_PARTITION.pairs():
        values[e] = values[o]
    return values


def test_step_applies_mutation_only_under_its_guard():
    m = mutation_by_id("add_rs1_5")
    values = [0] * 32
    values[2], values[3] = 5, 10
    state = step(MachineState.concrete(values), ConcreteInstruction("ADD", 1, (2, 3)), m)
    assert state.values[1] == 16 and state.count_orig == 1 and state.count_mirror == 0
    state = step(state, ConcreteInstruction("ADD", 14, (3, 3)), m)
    assert state.values[14] == 20 and ready(state)
    assert state.prev_op.value == MNEMONIC_ID["ADD"] and state.prev_rd.value == 14


def test_catalog_shape():
    cat = mutation_catalog()
    ids = [m.id for m in cat]
    assert len(set(ids)) == len(ids)
    assert sum(m.kind == SINGLE for m in cat) >= 8 and sum(m.kind == MULTIPLE for m in cat) >= 4
    assert all(m.doc for m in cat)
    with pytest.raises(KeyError):
        mutation_by_id("nope")


# one operand tuple per mutation on which the guard fires and the effect differs
WITNESSES = {
    "add_rs1_5": ("ADD", (5, 1), None), "sub_low_ones": ("SUB", (0, 0xFFFF), None),
    "xor_both_negative": ("XOR", (0x80000000, 0x80000000), None), "or_rs2_zero": ("OR", (1, 0), None),
    "and_rs1_ones": ("AND", (0xFFFFFFFF, 1), None), "slt_equal": ("SLT", (3, 3), None),
    "sltu_sign_mix": ("SLTU", (0x80000000, 1), None), "sra_by_31": ("SRA", (0x80000000, 31), None),
    "mulh_max_positive": ("MULH", (0x7FFFFFFF, 2), None), "xori_imm_800": ("XORI", (0,), 0x800),
    "slli_16": ("SLLI", (1,), 16), "srai_negative_wide": ("SRAI", (0x80000000,), 16),
}
PREV = {"xor_after_add": ("XOR", "ADD"), "add_after_xori": ("ADD", "XORI"), "and_after_andi": ("AND", "ANDI"),
        "xor_after_addi": ("XOR", "ADDI"), "add_after_sub": ("ADD", "SUB"), "add_raw_hazard": ("ADD", None)}


def operands(mnemonic, args, imm, prev="ADD", src0=2, prev_rd=2):
    spec = instruction_semantics(mnemonic)
    a = tuple(bv.const(v, 32) for v in args)
    i = None if imm is None else bv.const(imm, spec.attrs[0][1])
    result = spec.apply(list(a) + ([i] if i is not None else []))
    return Operands(mnemonic, a, i, result, bv.const(1, 5), (bv.const(src0, 5),) * len(a),
                    bv.const(MNEMONIC_ID[prev], 5), bv.const(prev_rd, 5))


@pytest.mark.parametrize("mutation", mutation_catalog(), ids=lambda m: m.id)
def test_every_mutation_is_observable(mutation):
    if mutation.kind == SINGLE:
        mnemonic, args, imm = WITNESSES[mutation.id]
        fire = operands(mnemonic, args, imm)
        benign = operands(mnemonic, (0x1234, 0x10)[:len(args)], None if imm is None else 1)
    else:
        mnemonic, prev = PREV[mutation.id]
        fire = operands(mnemonic, (7, 9), None, prev or "OR", 2, 2)
        benign = operands(mnemonic, (7, 9), None, "OR", 2, 3)
    assert mutation.targets == (mnemonic,)
    assert mutation.apply(fire).value != fire.result.value
    assert mutation.apply(benign).value == benign.result.value
    other = operands("SLTU", (5, 5), None)
    assert mutation.apply(other) is other.result


def test_trace_text_round_trip_and_replay():
    pair = allocate(ConcreteInstruction("SUB", 1, (2, 3)), LISTING1)
    values = regs(3)
    values[3] = 0x0001FFFF
    values[16] = values[3]
    trace = QedTrace(EDSEP, 1, values, [pair.original, *pair.equivalent], (1, 14), PAIRWISE, "sub_low_ones", [4])
    assert QedTrace.parse(trace.text()) == trace
    m = mutation_by_id("sub_low_ones")
    assert replay(trace, m) == CONFIRMED
    assert replay(trace, None) == REFUTED
    # the guard does not fire on a different subtrahend
    values[3] = values[16] = 7
    assert replay(QedTrace(EDSEP, 1, values, trace.instructions, (1, 14), checkpoints=[4]), m) == REFUTED


def test_schedules():
    assert _schedule(2, PAIRWISE) == [("orig", 0), ("copy", 0), ("orig", 1), ("copy", 1)]
    assert _schedule(3, INTERLEAVED) == [("orig", 0), ("orig", 1), ("copy", 0), ("orig", 2), ("copy", 1),
                                         ("copy", 2)]
    with pytest.raises(ValueError):
        _schedule(1, "random")


def test_checker_requires_programs():
    with pytest.raises(ValueError):
        Checker(EDSEP, SMALL_DB, ["ADD"])
    with pytest.raises(ValueError):
        Checker(EDSEP, None, ["SUB"])
    Checker(EDDI, None, ["ADD"])


def test_edsep_detects_single_bug_that_eddi_misses(session):
    m = mutation_by_id("sub_low_ones")
    r = bmc_check(EDSEP, m, 1, SMALL_DB, session, enabled=["SUB", "XOR"])
    assert r.verdict == VIOLATED and replay(r.trace, m) == CONFIRMED
    # XOR's stored sequence runs SUB too, so either instruction can expose the bug
    assert any(i.mnemonic == "SUB" for i in r.trace.instructions)
    assert bmc_check(EDSEP, m, 2, SMALL_DB, session, enabled=["SUB", "XOR"]).violated
    assert bmc_check(EDDI, m, 2, session=session, enabled=["SUB", "XOR"]).verdict == HOLDS


def test_summarized_and_unrolled_encodings_agree(session):
    for mid in ("sub_low_ones", "xor_both_negative"):
        m = mutation_by_id(mid)
        a = bmc_check(EDSEP, m, 1, SMALL_DB, session, enabled=["SUB", "XOR"], summarize=True)
        b = bmc_check(EDSEP, m, 1, SMALL_DB, session, enabled=["SUB", "XOR"], summarize=False)
        assert a.verdict == b.verdict
    assert bmc_check(EDSEP, None, 1, SMALL_DB, session, enabled=["SUB", "XOR"], summarize=False).holds


def test_bug_free_holds(session):
    for mode in (EDSEP, EDDI):
        r = bmc_check(mode, None, 2, SMALL_DB, session, enabled=["SUB", "XOR"])
        assert r.holds and r.trace is None


def test_history_bug_detected_by_eddi(session):
    m = mutation_by_id("xor_after_add")
    eddi = find_violation(EDDI, m, 3, session=session, enabled=["ADD", "XOR"])
    assert eddi.violated and replay(eddi.trace, m) == CONFIRMED
    assert eddi.bound == 2


def test_results_csv(tmp_path, session):
    r = bmc_check(EDDI, None, 1, session=session, enabled=["ADD"])
    write_results_csv(tmp_path / "r.csv", [r])
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert tuple(rows[0]) == RESULT_COLUMNS and rows[1][:4] == ["-", EDDI, "1", HOLDS]


def test_eddi_partition_mirrors_sixteen():
    assert EDDI_PARTITION.pairs()[0] == (0, 16)
