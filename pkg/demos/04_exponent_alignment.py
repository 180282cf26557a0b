"""Forcing every weight in a block to share one exponent: rank-based
selection, the affine rescale into [LL, UL], and the invariants that make
the shared storage lossless."""

import numpy as np

from fpcim import align, fp16

block = np.array([0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0])
print("block:", block)
bits = fp16.encode_array(block)
print("FP16 exponents (unbiased):", sorted((((bits >> 10) & 0x1F) - 15).tolist(), reverse=True))

for index in (1, 2, 4):
    spec = align.select_exponent(block, index)
    print(f"index={index}: e_shared={spec.e_shared}  LL={spec.ll}  UL={spec.ul}")

spec = align.select_exponent(block, 2)
out = align.rescale_block(block, spec)
print("\nrescaled with index=2:", out)
fields = (fp16.encode_array(out) >> 10) & 0x1F
print("exponent fields now:", np.unique(fields), f"(all equal {spec.e_shared} + 15)")

# Mixed signs rescale into mirrored ranges.
mixed = np.array([-3.0, -2.0, 1.0, 2.0])
spec_m = align.select_exponent(mixed, 2)
print("\nmixed block:", mixed, "->", align.rescale_block(mixed, spec_m),
      f"  (positives in [{spec_m.ll}, {spec_m.ul:.6f}], negatives mirrored)")

# Aligning a whole tensor: every block of n rows per column shares one
# exponent, and the transform is a fixed point (aligning twice is a no-op).
rng = np.random.default_rng(4)
w = rng.normal(0, 0.4, (16, 8))
aligned, table = align.align_tensor(w, n=8, index=2)
print("\ntensor 16x8, n=8 -> e_shared table (blocks x columns):")
print(table)
print("is_aligned:", align.is_aligned(aligned, 8, table))
again, table2 = align.align_tensor(aligned, n=8, index=2)
print("idempotent:", np.array_equal(aligned, again) and np.array_equal(table, table2))
print("max |w - aligned(w)|:", float(np.abs(w - aligned).max()))
