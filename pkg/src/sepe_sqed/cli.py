"""Command-line entry point: ``synth``, ``transform``, ``check`` and ``report``.

Exit codes: 0 success, 1 a check found a property violation, 2 usage or
environment error (missing solver, unreadable input).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from statistics import mean
from typing import Sequence

from . import smt, sqed
from .edsep import EDSEP_PARTITION, EdsepPair, PartitionViolation, TempExhausted, enumerate_pairs
from .hpf import (BENCH_COLUMNS, SYNTH_RLIMIT, CorrespondenceSet, HpfParams, hpf_cegis, iterative_cegis_baseline,
                  write_bench_csv)
from .isa import component_library, instruction_semantics

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VIOLATION, EXIT_ERROR = 0, 1, 2
CORRESPONDENCES = "correspondences.json"
BENCH_CSV = "synth_bench.csv"
PAIRS = "pairs.txt"
RESULTS_CSV = "results.csv"


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    solver: str | None = None
    timeout_ms: int = smt.DEFAULT_TIMEOUT_MS
    rlimit: int = SYNTH_RLIMIT
    alpha: Fraction = Fraction(1)
    delta: int = 1
    k: int = 20
    min_len: int = 3
    n_max: int = 3
    instructions: tuple[str, ...] = sqed.TABLE_MNEMONICS
    policy: str = sqed.PAIRWISE
    seed: int | None = None
    out: Path = Path(".")

    def __post_init__(self):
        for name in ("timeout_ms", "rlimit", "delta", "k", "min_len", "n_max"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive")
        self.alpha = Fraction(self.alpha)
        if self.alpha <= 0:
            raise UsageError("alpha must be positive")
        if self.n_max < self.min_len:
            raise UsageError("n_max must be at least min_len")
        if self.policy not in sqed.POLICIES:
            raise UsageError(f"policy must be one of {', '.join(sqed.POLICIES)}")
        self.instructions = tuple(m.upper() for m in self.instructions)
        for m in self.instructions:
            try:
                instruction_semantics(m)
            except KeyError:
                raise UsageError(f"unknown instruction {m}") from None
        self.out = Path(self.out)

    @property
    def params(self) -> HpfParams:
        return HpfParams(k=self.k, min_len=self.min_len, n_max=self.n_max, alpha=self.alpha, delta=self.delta)

    def session(self, rlimit: int | None = None) -> smt.SmtSession:
        return smt.SmtSession(self.solver, self.timeout_ms, rlimit=rlimit)


_CONVERTERS = {"timeout_ms": int, "rlimit": int, "alpha": Fraction, "delta": int, "k": int, "min_len": int,
               "n_max": int, "seed": int, "out": Path, "solver": str, "policy": str,
               "instructions": lambda v: tuple(_split_names([v]))}


def _split_names(values: Sequence[str]) -> list[str]:
    return [n for v in values for n in v.replace(",", " ").split()]


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _CONVERTERS:
            raise UsageError(f"config line {lineno}: expected one of {', '.join(_CONVERTERS)} = value")
        try:
            out[key] = _CONVERTERS[key](value.strip())
        except ValueError as exc:
            raise UsageError(f"config line {lineno}: {exc}") from None
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = parse_config(Path(args.config).read_text()) if args.config else {}
    for f in dataclasses.fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = tuple(_split_names(flag)) if f.name == "instructions" else flag
    return RunConfig(**values)


# ---------------------------------------------------------------- synth

def cmd_synth(config: RunConfig, baseline: str = "hpf") -> int:
    if baseline == "iterative" and config.seed is None:
        raise UsageError("--baseline iterative needs --seed")
    targets = [instruction_semantics(m) for m in config.instructions]
    library = component_library()
    config.out.mkdir(parents=True, exist_ok=True)
    with config.session(config.rlimit) as session:
        if baseline == "hpf":
            result = hpf_cegis(targets, library, config.params, session)
        else:
            result = iterative_cegis_baseline(targets, library, config.params, config.seed, session)
    with config.session() as session:
        problems = result.verify(session)
    if problems:
        for p in problems:
            log.error("re-verification failed: %s", p)
        return EXIT_ERROR
    result.save(config.out / CORRESPONDENCES)
    write_bench_csv(config.out / BENCH_CSV, [result])
    for s in result.stats.values():
        print(f"{s.mnemonic:6} {s.algorithm:9} {s.programs_found:3} programs {s.solver_calls:5} calls "
              f"{s.wall_ms / 1000:8.1f} s")
    return EXIT_OK


# ---------------------------------------------------------------- transform

@dataclass
class TransformResult:
    pairs: list[EdsepPair] = field(default_factory=list)
    uncovered: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    def text(self) -> str:
        blocks = [p.text() for p in self.pairs]
        tail = [f"#Uncovered {m}" for m in self.uncovered] + [f"#Error {e}" for e in self.errors]
        if tail:
            blocks.append("\n".join(tail) + "\n")
        return "\n".join(blocks)


def transform(correspondences: CorrespondenceSet, mnemonics: Sequence[str], operands: dict | None,
              all_programs: bool = False) -> TransformResult:
    """Pairs per requested mnemonic; failures are recorded without stopping the others."""
    out = TransformResult()
    for m in mnemonics:
        if not correspondences.programs.get(m):
            out.uncovered.append(m)
            continue
        single = CorrespondenceSet({m: correspondences.programs[m]}, xlen=correspondences.xlen)
        try:
            out.pairs += enumerate_pairs(single, operands, all_programs=all_programs, partition=EDSEP_PARTITION)
        except (TempExhausted, PartitionViolation) as exc:
            out.errors.append(f"{m}: {type(exc).__name__}: {exc}")
    return out


def _load_correspondences(path: Path) -> CorrespondenceSet:
    try:
        return CorrespondenceSet.load(path)
    except FileNotFoundError:
        raise UsageError(f"correspondence file {path} not found") from None
    except (ValueError, KeyError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def cmd_transform(config: RunConfig, corr_path: Path, operands: dict | None, all_programs: bool = False) -> int:
    result = transform(_load_correspondences(corr_path), config.instructions, operands, all_programs)
    config.out.mkdir(parents=True, exist_ok=True)
    (config.out / PAIRS).write_text(result.text())
    print(f"{len(result.pairs)} pairs, {len(result.uncovered)} uncovered, {len(result.errors)} errors")
    return EXIT_OK


# ---------------------------------------------------------------- check

MODE_FLAGS = {"edsep": (sqed.EDSEP,), "eddi": (sqed.EDDI,), "both": sqed.MODES}


def resolve_mutations(ids: Sequence[str]) -> list[sqed.BugMutation | None]:
    catalog = sqed.mutation_catalog()
    out: list[sqed.BugMutation | None] = []
    for mid in _split_names(ids) or ["all"]:
        if mid == "none":
            out.append(None)
        elif mid in ("all", "single", "multiple"):
            out += [m for m in catalog if mid == "all" or m.kind == mid]
        else:
            try:
                out.append(sqed.mutation_by_id(mid))
            except KeyError:
                raise UsageError(f"unknown mutation {mid}") from None
    return out


def cmd_check(config: RunConfig, corr_path: Path | None, modes: Sequence[str], mutations, bound: int,
              fixed_bound: bool = False) -> int:
    """Sweep bounds 1..``bound`` per (mutation, mode), stopping at the first violation."""
    corr = _load_correspondences(corr_path) if sqed.EDSEP in modes else None
    config.out.mkdir(parents=True, exist_ok=True)
    trace_dir = config.out / "traces"
    results: list[sqed.CheckResult] = []
    violated = False
    try:
        with config.session() as session:
            for mutation in mutations:
                # the default set leaves MULH out unless a mutation targets it; see sqed.DEFAULT_ENABLED
                enabled = None
                if config.instructions != sqed.TABLE_MNEMONICS:
                    enabled = list(config.instructions)
                    if mutation is not None:
                        enabled += [m for m in mutation.targets if m not in enabled]
                for mode in modes:
                    for b in ([bound] if fixed_bound else range(1, bound + 1)):
                        r = sqed.bmc_check(mode, mutation, b, corr, session, config.policy, enabled)
                        results.append(r)
                        print(f"{r.mutation or '-':20} {mode:8} bound {b}  {r.verdict:9} {r.wall_ms / 1000:7.1f} s")
                        if r.violated:
                            violated = True
                            trace_dir.mkdir(exist_ok=True)
                            (trace_dir / f"{r.mutation or 'none'}_{mode}.txt").write_text(r.trace.text())
                            break
    finally:
        sqed.write_results_csv(config.out / RESULTS_CSV, results)
    return EXIT_VIOLATION if violated else EXIT_OK


# ---------------------------------------------------------------- report

def _read_csv(path: Path) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            header = tuple(reader.fieldnames or ())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    if header not in (BENCH_COLUMNS, sqed.RESULT_COLUMNS):
        raise UsageError(f"{path}: unrecognized columns {header}")
    for row in rows:
        if None in row or any(v is None for v in row.values()):
            raise UsageError(f"{path}: ragged row {row}")
    return rows


def bench_report(rows: list[dict]) -> list[str]:
    table: dict[str, dict[str, tuple[float, int]]] = {}
    try:
        for r in rows:
            table.setdefault(r["instruction"], {})[r["algorithm"]] = (float(r["wall_ms"]), int(r["solver_calls"]))
    except ValueError as exc:
        raise UsageError(f"malformed benchmark row: {exc}") from None
    lines = ["instruction,hpf_ms,iterative_ms,time_ratio,hpf_calls,iterative_calls"]
    ratios = []
    for g in sorted(table):
        h, b = table[g].get("hpf"), table[g].get("baseline")
        ratio = h[0] / b[0] if h and b and b[0] else None
        if ratio is not None:
            ratios.append(ratio)
        lines.append(",".join([g, f"{h[0]:.1f}" if h else "", f"{b[0]:.1f}" if b else "",
                               f"{ratio:.3f}" if ratio is not None else "", str(h[1]) if h else "",
                               str(b[1]) if b else ""]))
    if ratios:
        lines.append(f"# mean time ratio {mean(ratios):.3f} (mean reduction {1 - mean(ratios):.1%})")
    return lines


def detection_report(rows: list[dict]) -> list[str]:
    best: dict[str, dict[str, dict]] = {}
    for r in rows:
        if r["mode"] not in sqed.MODES:
            raise UsageError(f"unknown mode {r['mode']!r}")
        cell = best.setdefault(r["mutation_id"], {})
        prev = cell.get(r["mode"])
        # one cell per mode: the first violation, otherwise the deepest bound checked
        if prev is None or (prev["verdict"] != sqed.VIOLATED and
                            (r["verdict"] == sqed.VIOLATED or int(r["bound"]) > int(prev["bound"]))):
            cell[r["mode"]] = r
    lines = ["mutation_id,edsep,eddi,edsep_trace_len,eddi_trace_len,trace_len_ratio"]
    for mid in sorted(best):
        e, d = best[mid].get(sqed.EDSEP), best[mid].get(sqed.EDDI)

        def verdict(r):
            return f"{r['verdict']}@{r['bound']}" if r else ""

        le = int(e["trace_len"]) if e and e["trace_len"] else None
        ld = int(d["trace_len"]) if d and d["trace_len"] else None
        ratio = f"{le / ld:.3f}" if le and ld else ""
        lines.append(",".join([mid, verdict(e), verdict(d), str(le or ""), str(ld or ""), ratio]))
    return lines


def cmd_report(paths: Sequence[Path], out: Path | None = None) -> int:
    bench, detect = [], []
    for p in paths:
        rows = _read_csv(Path(p))
        (bench if rows and "instruction" in rows[0] else detect).extend(rows)
        if not rows:
            log.info("%s has no rows", p)
    lines = []
    if bench:
        lines += bench_report(bench)
    if detect:
        lines += ([""] if lines else []) + detection_report(detect)
    text = "\n".join(lines) + ("\n" if lines else "")
    sys.stdout.write(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text)
    return EXIT_OK


# ---------------------------------------------------------------- argparse

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--solver", help="solver command line (default: $SEPE_SMT_SOLVER or z3)")
    common.add_argument("--timeout-ms", dest="timeout_ms", type=int)
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--instr", dest="instructions", action="append",
                        help="target mnemonics, comma separated or repeated")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="sepe-sqed", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="synthesize equivalent programs")
    s.add_argument("--k", type=int)
    s.add_argument("--min-len", dest="min_len", type=int)
    s.add_argument("--n-max", dest="n_max", type=int)
    s.add_argument("--alpha", type=Fraction)
    s.add_argument("--delta", type=int)
    s.add_argument("--rlimit", type=int, help="per-query solver work budget")
    s.add_argument("--baseline", choices=("hpf", "iterative"), default="hpf")
    s.add_argument("--seed", type=int)

    t = sub.add_parser("transform", parents=[common], help="emit EDSEP-V pairs")
    t.add_argument("--corr", type=Path, help=f"correspondence file (default <out>/{CORRESPONDENCES})")
    t.add_argument("--rd", type=int, default=1)
    t.add_argument("--rs1", type=int, default=2)
    t.add_argument("--rs2", type=int, default=3)
    t.add_argument("--imm", type=lambda v: int(v, 0), default=0)
    t.add_argument("--all", action="store_true", help="every operand assignment over the original registers")
    t.add_argument("--all-programs", action="store_true", help="one block per stored program")

    c = sub.add_parser("check", parents=[common], help="bounded self-consistency check")
    c.add_argument("--corr", type=Path, help=f"correspondence file (default <out>/{CORRESPONDENCES})")
    c.add_argument("--mode", choices=tuple(MODE_FLAGS), default="both")
    c.add_argument("--bound", type=int, default=3)
    c.add_argument("--fixed-bound", action="store_true", help="check only at --bound instead of sweeping up to it")
    c.add_argument("--mutation", action="append", default=[],
                   help="mutation ids, 'none', 'single', 'multiple' or 'all' (default)")
    c.add_argument("--policy", choices=sqed.POLICIES)

    r = sub.add_parser("report", help="summarize benchmark and detection CSVs")
    r.add_argument("csv", nargs="*", type=Path)
    r.add_argument("--out", type=Path)
    r.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.csv, args.out)
        config = build_config(args)
        if args.command == "synth":
            return cmd_synth(config, args.baseline)
        corr = args.corr or config.out / CORRESPONDENCES
        if args.command == "transform":
            operands = None if args.all else {"rd": args.rd, "rs1": args.rs1, "rs2": args.rs2, "imm": args.imm}
            return cmd_transform(config, corr, operands, args.all_programs)
        if args.bound < 1:
            raise UsageError("--bound must be at least 1")
        return cmd_check(config, corr, MODE_FLAGS[args.mode], resolve_mutations(args.mutation), args.bound,
                         args.fixed_bound)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except smt.SolverNotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
