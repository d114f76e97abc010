"""Equivalent-program synthesis for ISA self-consistency checking.

Modules: :mod:`bv` expressions, :mod:`isa` semantics and components,
:mod:`smt` solver session, :mod:`cegis` synthesis, :mod:`hpf` multiset
scheduling, :mod:`edsep` register allocation, :mod:`sqed` bounded checking.
"""
__version__ = "0.1.0"
