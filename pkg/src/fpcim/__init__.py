"""Functional simulator of an FP16 compute-in-memory macro.

Subpackages cover the bit-exact FP16 datapath, deterministic bit-flip
injection, the row-based shared-exponent SECDED codec, exponent-alignment
of weight blocks, the tile-level macro model, a desk-scale MLP workload,
and the resilience-sweep driver.
"""

__version__ = "0.1.0"
