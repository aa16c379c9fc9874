"""Rehearsal-memory engine for class-incremental learning.

Compresses exemplar images into 1-bit edge maps plus class tags, accounts
for memory in per-class units, regenerates diverse exemplars through a
pluggable generation backend, and runs desk-scale class-incremental
experiments on top of that memory.
"""

__version__ = "0.1.0"
