"""Nested-dataflow task graphs: partial-dependency composition via fire
rules, work/span and cache-complexity metrics, and a deterministic simulator
of a space-bounded scheduler on a parallel memory hierarchy."""

__version__ = "0.1.0"
