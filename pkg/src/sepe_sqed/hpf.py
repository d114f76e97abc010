"""Highest-priority-first multiset scheduling around :func:`cegis`, and the shuffled baseline."""
from __future__ import annotations

import csv
import heapq
import itertools
import json
import logging
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

from . import smt
from .cegis import EQUIVALENT, FOUND, SynthesizedProgram, cegis, differential_test, verify_equivalence
from .isa import Component, InstructionSpec

log = logging.getLogger(__name__)

Multiset = tuple[int, ...]

# per-query solver work budget for synthesis; a few multiply-heavy bags otherwise
# dominate the run, and unlike a wall-clock timeout the cut-off is reproducible
SYNTH_RLIMIT = 20_000_000


@dataclass(frozen=True)
class HpfParams:
    k: int = 20
    min_len: int = 3
    n_max: int = 3
    alpha: Fraction = Fraction(1)
    delta: int = 1
    max_iterations: int = 64
    credit_filter: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.min_len < 1 or self.n_max < self.min_len:
            raise ValueError("need 1 <= min_len <= n_max")
        if self.delta < 1:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "alpha", Fraction(self.alpha))


def combinations_with_replacement(library: Sequence[Component], n: int) -> Iterator[Multiset]:
    """Sorted id bags of size ``n``, lexicographic, generated lazily."""
    if n < 1:
        raise ValueError("multiset size must be at least 1")
    ids = sorted(c.id for c in library)
    return itertools.combinations_with_replacement(ids, n)


class PriorityDict:
    """Choice weight ``c`` and exclusion weight ``e`` per component id; both start at 1 and only grow."""

    def __init__(self, ids: Sequence[int] = ()):
        self.c: dict[int, int] = {}
        self.e: dict[int, int] = {}
        for cid in ids:
            self.add(cid)

    def add(self, cid: int) -> None:
        self.c.setdefault(cid, 1)
        self.e.setdefault(cid, 1)

    def __contains__(self, cid: int) -> bool:
        return cid in self.c

    def copy(self) -> "PriorityDict":
        out = PriorityDict()
        out.c, out.e = dict(self.c), dict(self.e)
        return out

    def as_dict(self) -> dict[int, tuple[int, int]]:
        return {cid: (self.c[cid], self.e[cid]) for cid in sorted(self.c)}

    def __eq__(self, other) -> bool:
        return isinstance(other, PriorityDict) and self.as_dict() == other.as_dict()


def name_match(comp: Component, target: InstructionSpec) -> int:
    return int(target.mnemonic in comp.mnemonics)


def priority(multiset: Multiset, weights: PriorityDict, chi: dict[int, int], alpha=1) -> Fraction:
    """Exact ``sum(c_j - alpha * chi_j) / sum(e_j)`` over the bag, with multiplicity."""
    alpha = Fraction(alpha)
    num = sum(weights.c[j] - alpha * chi.get(j, 0) for j in multiset)
    den = sum(weights.e[j] for j in multiset)
    return Fraction(num) / den


def update_weights(weights: PriorityDict, multiset: Multiset, success: bool, delta: int = 1) -> PriorityDict:
    table = weights.c if success else weights.e
    for j in multiset:
        table[j] += delta
    return weights


@dataclass
class InstructionStats:
    mnemonic: str
    algorithm: str
    wall_ms: float = 0.0
    solver_calls: int = 0
    attempts: int = 0
    programs_found: int = 0
    failures: int = 0


@dataclass
class CorrespondenceSet:
    """Verified programs per target mnemonic, plus per-target run statistics."""

    programs: dict[str, list[SynthesizedProgram]] = field(default_factory=dict)
    stats: dict[str, InstructionStats] = field(default_factory=dict)
    xlen: int = 32

    def __getitem__(self, mnemonic: str) -> list[SynthesizedProgram]:
        return self.programs[mnemonic]

    def __contains__(self, mnemonic: str) -> bool:
        return mnemonic in self.programs

    def counted(self, mnemonic: str, min_len: int) -> int:
        return sum(len(p) >= min_len for p in self.programs.get(mnemonic, []))

    def verify(self, session: smt.SmtSession, samples: int = 10_000, seed: int = 0) -> list[str]:
        """Re-check every stored program by SMT and random differential testing; returns problems found."""
        problems = []
        for g, progs in self.programs.items():
            for i, p in enumerate(progs):
                verdict = verify_equivalence(p.spec, p, session)
                if verdict.status != EQUIVALENT:
                    problems.append(f"{g}[{i}]: solver verdict {verdict.status}")
                bad = differential_test(p, samples, seed)
                if bad:
                    problems.append(f"{g}[{i}]: {len(bad)} random mismatches, first {bad[0]}")
        return problems

    def to_json(self) -> dict:
        return {g: [p.to_json() for p in progs] for g, progs in self.programs.items()}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def from_json(cls, data: dict, xlen: int = 32) -> "CorrespondenceSet":
        return cls({g: [SynthesizedProgram.from_json(g, p, xlen) for p in progs] for g, progs in data.items()},
                   xlen=xlen)

    @classmethod
    def load(cls, path, xlen: int = 32) -> "CorrespondenceSet":
        return cls.from_json(json.loads(Path(path).read_text()), xlen)


BENCH_COLUMNS = ("instruction", "algorithm", "wall_ms", "solver_calls", "programs_found")


def write_bench_csv(path, runs: Sequence[CorrespondenceSet]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_COLUMNS)
        for run in runs:
            for s in run.stats.values():
                writer.writerow([s.mnemonic, s.algorithm, f"{s.wall_ms:.1f}", s.solver_calls, s.programs_found])


class _PriorityPool:
    """Remaining multisets of one size class, always yielding the current maximum.

    Entries carry a version; when weights of a component change every pooled
    multiset containing it is pushed again and older entries become stale.
    The head therefore always matches a full re-sort.
    """

    def __init__(self, bags: Sequence[Multiset], weights: PriorityDict, chi: dict[int, int], alpha: Fraction):
        self.weights, self.chi, self.alpha = weights, chi, alpha
        self.version = {bag: 0 for bag in bags}
        self.by_component: dict[int, list[Multiset]] = {}
        for bag in bags:
            for cid in set(bag):
                self.by_component.setdefault(cid, []).append(bag)
        self.heap = [(-priority(bag, weights, chi, alpha), bag, 0) for bag in bags]
        heapq.heapify(self.heap)

    def __len__(self) -> int:
        return len(self.version)

    def pop(self) -> Multiset:
        while True:
            _, bag, ver = heapq.heappop(self.heap)
            if self.version.get(bag) == ver:
                del self.version[bag]
                return bag

    def touched(self, cids) -> None:
        stale = {bag for cid in set(cids) for bag in self.by_component.get(cid, ()) if bag in self.version}
        for bag in stale:
            self.version[bag] += 1
            heapq.heappush(self.heap, (-priority(bag, self.weights, self.chi, self.alpha), bag, self.version[bag]))
        if len(self.heap) > 4 * len(self.version) + 64:
            self.heap = [(-priority(b, self.weights, self.chi, self.alpha), b, v) for b, v in self.version.items()]
            heapq.heapify(self.heap)


def _run(targets: Sequence[InstructionSpec], library: Sequence[Component], params: HpfParams,
         algorithm: str, session: smt.SmtSession | None, seed: int = 0,
         weights: PriorityDict | None = None) -> CorrespondenceSet:
    by_id = {c.id: c for c in library}
    weights = weights if weights is not None else PriorityDict(sorted(by_id))
    for cid in by_id:
        weights.add(cid)
    rng = random.Random(seed)
    own = session is None
    if own:
        session = smt.SmtSession(rlimit=SYNTH_RLIMIT)
    xlen = targets[0].output[1] if targets else 32
    result = CorrespondenceSet(xlen=xlen)
    try:
        for g in targets:
            found: list[SynthesizedProgram] = result.programs.setdefault(g.mnemonic, [])
            stats = InstructionStats(g.mnemonic, algorithm)
            result.stats[g.mnemonic] = stats
            chi = {cid: name_match(c, g) for cid, c in by_id.items()}
            start, calls0 = time.perf_counter(), session.calls
            done = False
            for n in range(1, params.n_max + 1):
                bags = list(combinations_with_replacement(library, n))
                if algorithm == "hpf":
                    pool = _PriorityPool(bags, weights, chi, params.alpha)
                    take = pool.pop
                else:
                    rng.shuffle(bags)
                    queue = iter(bags)
                    take = lambda: next(queue)
                for _ in range(len(bags)):
                    bag = take()
                    stats.attempts += 1
                    t0 = time.perf_counter()
                    try:
                        res = cegis(g, [by_id[j] for j in bag], session, params.max_iterations)
                        ok = res.status == FOUND
                    except smt.SmtError as exc:
                        log.warning("%s %s: solver failure %s", g.mnemonic, bag, exc)
                        session.restart()
                        ok = False
                    log.debug("%s %s n=%d %s ok=%s %.0f ms", algorithm, g.mnemonic, n, bag, ok,
                              (time.perf_counter() - t0) * 1000)
                    if ok:
                        found.append(res.program)
                    else:
                        stats.failures += 1
                    # a success does not reward components named like the target:
                    # programs built around g itself are what the penalty steers away from
                    credited = tuple(j for j in bag if not (ok and chi[j])) if params.credit_filter else bag
                    update_weights(weights, credited, ok, params.delta)
                    if algorithm == "hpf":
                        pool.touched(credited)
                    if result.counted(g.mnemonic, params.min_len) > params.k:
                        done = True
                        break
                if done:
                    break
            stats.wall_ms = (time.perf_counter() - start) * 1000
            stats.solver_calls = session.calls - calls0
            stats.programs_found = len(found)
            log.info("%s %s: %d programs, %d attempts, %d solver calls, %.0f ms", algorithm, g.mnemonic,
                     len(found), stats.attempts, stats.solver_calls, stats.wall_ms)
    finally:
        if own:
            session.close()
    return result


def hpf_cegis(targets: Sequence[InstructionSpec], library: Sequence[Component], params: HpfParams = HpfParams(),
              session: smt.SmtSession | None = None, weights: PriorityDict | None = None) -> CorrespondenceSet:
    """Synthesize correspondences trying multisets in descending priority; weights carry across targets."""
    return _run(targets, library, params, "hpf", session, weights=weights)


def iterative_cegis_baseline(targets: Sequence[InstructionSpec], library: Sequence[Component],
                             params: HpfParams = HpfParams(), seed: int = 0,
                             session: smt.SmtSession | None = None) -> CorrespondenceSet:
    """Same search, but each size class is tried in a seeded random order."""
    return _run(targets, library, params, "baseline", session, seed=seed)
