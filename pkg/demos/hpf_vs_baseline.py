"""Compare highest-priority-first scheduling with the shuffled baseline on a few targets.

Writes one benchmark CSV per algorithm and prints the ratio table.

    python demos/hpf_vs_baseline.py [out_dir]
"""
import sys
from pathlib import Path

from sepe_sqed.cli import bench_report
from sepe_sqed.hpf import HpfParams, hpf_cegis, iterative_cegis_baseline, write_bench_csv
from sepe_sqed.isa import component_library, instruction_semantics

TARGETS = ["ADD", "SUB", "XOR", "OR", "AND"]
out = Path(sys.argv[1] if len(sys.argv) > 1 else "bench_out")
out.mkdir(parents=True, exist_ok=True)
targets = [instruction_semantics(m) for m in TARGETS]
params = HpfParams(k=3)
hpf = hpf_cegis(targets, component_library(), params)
base = iterative_cegis_baseline(targets, component_library(), params, seed=7)
write_bench_csv(out / "bench.csv", [hpf, base])
rows = [{"instruction": s.mnemonic, "algorithm": s.algorithm, "wall_ms": s.wall_ms, "solver_calls": s.solver_calls}
        for run in (hpf, base) for s in run.stats.values()]
print("\n".join(bench_report(rows)))
