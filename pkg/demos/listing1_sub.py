"""Synthesize SUB from the full library and print the program and its EDSEP-V pair.

    python demos/listing1_sub.py
"""
import time

from sepe_sqed.edsep import ConcreteInstruction, allocate, select_program
from sepe_sqed.hpf import HpfParams, hpf_cegis
from sepe_sqed.isa import component_library, instruction_semantics

start = time.perf_counter()
db = hpf_cegis([instruction_semantics("SUB")], component_library(), HpfParams(k=1))
programs = db["SUB"]
print(f"{len(programs)} SUB programs in {time.perf_counter() - start:.1f} s; the three-line ones:\n")
for p in programs:
    if len(p) == 3:
        print(p.listing(), end="\n\n")
chosen = select_program(programs)
print(allocate(ConcreteInstruction("SUB", 1, (2, 3)), chosen).text())
