import csv
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from sepe_sqed.hpf import (BENCH_COLUMNS, CorrespondenceSet, HpfParams, PriorityDict, _PriorityPool,
                           combinations_with_replacement, hpf_cegis, iterative_cegis_baseline, name_match, priority,
                           update_weights, write_bench_csv)
from sepe_sqed.isa import component_by_name, component_library, instruction_semantics


def test_combination_counts():
    lib = component_library()
    assert sum(1 for _ in combinations_with_replacement(lib, 6)) == math.comb(29 + 6 - 1, 6) == 1_344_904
    assert list(combinations_with_replacement(lib[:2], 2)) == [(1, 1), (1, 2), (2, 2)]
    with pytest.raises(ValueError):
        list(combinations_with_replacement(lib, 0))


def test_priority_examples():
    w = PriorityDict([1, 2, 3])
    chi = {1: 1, 2: 0, 3: 0}
    assert priority((2, 3), w, chi) == 1
    assert priority((1, 2), w, chi) == Fraction(1, 2)
    assert priority((1, 1), w, chi, alpha=Fraction(1, 2)) == Fraction(1, 2)
    update_weights(w, (2, 2), success=True)
    assert w.c[2] == 3
    update_weights(w, (3,), success=False, delta=2)
    assert w.e[3] == 3
    assert priority((2, 3), w, chi) == Fraction(4, 4)


def test_name_match():
    sub = instruction_semantics("SUB")
    assert name_match(component_by_name("SUB"), sub) == 1
    assert name_match(component_by_name("XORI"), sub) == 0


def test_params_validation():
    with pytest.raises(ValueError):
        HpfParams(k=0)
    with pytest.raises(ValueError):
        HpfParams(min_len=4, n_max=3)
    assert HpfParams(alpha=1).alpha == Fraction(1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 6), st.booleans()), max_size=25), st.integers(0, 5))
def test_pool_always_pops_the_current_maximum(updates, chi_seed):
    lib = component_library()[:6]
    bags = list(combinations_with_replacement(lib, 3))
    weights = PriorityDict(c.id for c in lib)
    chi = {c.id: int(c.id == chi_seed) for c in lib}
    pool = _PriorityPool(bags, weights, chi, Fraction(1))
    remaining = set(bags)
    for cid, ok in updates:
        if not remaining:
            break
        bag = pool.pop()
        best = max(priority(b, weights, chi) for b in remaining)
        assert priority(bag, weights, chi) == best
        assert bag == min(b for b in remaining if priority(b, weights, chi) == best)
        remaining.remove(bag)
        update_weights(weights, (cid,), ok)
        pool.touched((cid,))
    assert len(pool) == len(remaining)


SMALL_LIB = [component_by_name(n) for n in ("ADD", "AND", "OR", "XOR", "XORI", "ADDI")]


def test_hpf_finds_listing1_on_a_small_library(session):
    params = HpfParams(k=1, min_len=3, n_max=3)
    result = hpf_cegis([instruction_semantics("SUB")], SMALL_LIB, params, session)
    progs = result["SUB"]
    assert result.counted("SUB", 3) == 2
    assert any(p.listing() == "L0 = XORI rs1, 0xfff\nL1 = ADD L0, rs2\nL2 = XORI L1, 0xfff" for p in progs)
    assert all(not p.is_identity() for p in progs)
    stats = result.stats["SUB"]
    assert stats.programs_found == len(progs) and stats.solver_calls > 0


def test_hpf_is_deterministic_and_round_trips(session, tmp_path):
    params = HpfParams(k=1, min_len=2, n_max=2)
    targets = [instruction_semantics("XOR"), instruction_semantics("OR")]
    a = hpf_cegis(targets, SMALL_LIB, params, session)
    b = hpf_cegis(targets, SMALL_LIB, params, session)
    assert a.to_json() == b.to_json()
    a.save(tmp_path / "c.json")
    assert CorrespondenceSet.load(tmp_path / "c.json").to_json() == a.to_json()
    assert a.verify(session, samples=2000) == []


def test_baseline_and_bench_csv(session, tmp_path):
    params = HpfParams(k=1, min_len=2, n_max=2)
    targets = [instruction_semantics("OR")]
    base = iterative_cegis_baseline(targets, SMALL_LIB, params, seed=7, session=session)
    assert base.counted("OR", 2) == 2
    assert iterative_cegis_baseline(targets, SMALL_LIB, params, seed=7, session=session).to_json() == base.to_json()
    hpf = hpf_cegis(targets, SMALL_LIB, params, session)
    write_bench_csv(tmp_path / "bench.csv", [hpf, base])
    rows = list(csv.reader(open(tmp_path / "bench.csv")))
    assert tuple(rows[0]) == BENCH_COLUMNS
    assert [r[1] for r in rows[1:]] == ["hpf", "baseline"]
