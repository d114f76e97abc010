"""Run every bug in the catalog through both self-consistency modes on the shipped database.

Single-instruction bugs are invisible to plain duplication (both copies misbehave
alike) but show up against a synthesized sequence; history bugs are seen by both.

    python demos/detection_gap.py [max_bound]
"""
import sys
from importlib import resources

from sepe_sqed import sqed
from sepe_sqed.hpf import CorrespondenceSet
from sepe_sqed.smt import SmtSession

max_bound = int(sys.argv[1]) if len(sys.argv) > 1 else 3
db = CorrespondenceSet.load(resources.files("sepe_sqed") / "data" / "correspondences.json")
print(f"{'mutation':22} {'kind':8} {'EDSEP-V':14} {'EDDI-V':14} trace lengths")
with SmtSession() as session:
    for m in [None, *sqed.mutation_catalog()]:
        cells, lengths = [], []
        for mode in sqed.MODES:
            r = sqed.find_violation(mode, m, max_bound, db, session)
            cells.append(f"{r.verdict}@{r.bound}")
            lengths.append(str(len(r.trace)) if r.trace else "-")
        name, kind = (m.id, m.kind) if m else ("(none)", "-")
        print(f"{name:22} {kind:8} {cells[0]:14} {cells[1]:14} {'/'.join(lengths)}")
