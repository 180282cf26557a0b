"""BER-driven bit flips: static one-shot corruption vs dynamic per-access
transients, field masks, and the keyed determinism that makes sweeps
reproducible."""

import numpy as np

from fpcim.inject import FieldMask, InjectionPlan, expected_flips, inject_static, sample_dynamic

words = np.full(10_000, 0x3C00, dtype=np.uint16)  # ten thousand stored 1.0s

# Static injection flips each exposed bit once with probability BER.
for mask in (FieldMask.SIGN, FieldMask.EXPONENT, FieldMask.MANTISSA, FieldMask.FULL):
    plan = InjectionPlan("static", 1e-3, mask, master_seed=42)
    corrupted, log = inject_static(words, plan)
    exposed = len(mask.positions) * words.size
    print(f"mask={mask.value:8s} exposed_bits={exposed:7d} flips={len(log):4d} "
          f"(expected {expected_flips(1e-3, exposed):.1f})")

# The flip log is deterministic: same plan, same flips, every time.
plan = InjectionPlan("static", 1e-3, FieldMask.EXPONENT, master_seed=42)
log1 = inject_static(words, plan)[1]
log2 = inject_static(words, plan)[1]
print(f"\nrerun reproduces the log exactly: {log1 == log2} ({len(log1)} records)")

# A single exponent flip can rescale a weight by 2^16.
_, log = inject_static(words, plan)
w, bit = log[0].word_index, log[0].bit_index
before, after = words[w], words[w] ^ (1 << bit)
from fpcim import fp16

print(f"word {w}: 0x{before:04x} ({fp16.to_real(int(before))}) -> "
      f"0x{after:04x} ({fp16.to_real(int(after))}) by flipping bit {bit}")

# Dynamic injection redraws per read access and never touches storage.
plan = InjectionPlan("dynamic", 5e-2, FieldMask.FULL, master_seed=7)
reads = [sample_dynamic(0x3C00, word_index=0, access_index=t, plan=plan) for t in range(8)]
print("\ndynamic reads of one stored word:", " ".join(f"{r:04x}" for r in reads))
print("re-reading access 3 gives the same transient:",
      sample_dynamic(0x3C00, 0, 3, plan) == reads[3])
