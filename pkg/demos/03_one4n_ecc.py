"""The row-based one-for-N codec: packing shared exponents + signs into
protected rows, SECDED encode/decode under flips, and the redundancy
accounting that motivates the scheme."""

import numpy as np

from fpcim import ecc

# A block of n=8 weight rows shares one 5-bit exponent per column; protecting
# a block means protecting 16 exponents plus all 8x16 sign bits.
n = 8
print(f"total protected bits per block (n={n}):", ecc.total_protected_bits(n), "-> rows of",
      ecc.row_sizes(ecc.total_protected_bits(n)))

rng = np.random.default_rng(3)
exponents = rng.integers(5, 25, 16).astype(np.uint8)
signs = rng.integers(0, 2, (n, 16)).astype(np.uint8)
rows = ecc.pack_block(exponents, signs, n=n)
for i, (data, k) in enumerate(rows):
    parity = ecc.secded_encode(data, k)
    print(f"row {i}: {k} data bits + 8 parity   hex={ecc.codeword_hex(data, k, parity)}")

# Any single flip is corrected; any double flip is detected, never miscorrected.
data, k = rows[0]
parity = ecc.secded_encode(data, k)
single = data ^ (1 << 37)
outcome, fixed = ecc.secded_decode(single, parity, k)
print(f"\nflip bit 37       -> {outcome.status.value} at position {outcome.position}, recovered={fixed == data}")
double = data ^ (1 << 37) ^ (1 << 90)
outcome, out = ecc.secded_decode(double, parity, k)
print(f"flip bits 37, 90  -> {outcome.status.value} (data passed through uncorrected)")

# Round trip through pack -> encode -> decode -> unpack.
decoded = []
for data, k in rows:
    p = ecc.secded_encode(data, k)
    _, d = ecc.secded_decode(data ^ 1, p, k)  # one flip per row, corrected
    decoded.append((d, k))
e2, s2 = ecc.unpack_block(decoded, n=n)
print("\npack/encode/corrupt/decode/unpack round trip exact:",
      np.array_equal(e2, exponents) and np.array_equal(s2, signs))

# Redundancy accounting for a 256x256-bit array (4096 FP16 weights).
print(f"\n{'scheme':22}{'redundant_bits':>16}{'exponent_cells':>16}")
for scheme in ("traditional_full", "traditional_exp_sign", "row_based_full", "one4n"):
    rep = ecc.overhead_accounting(scheme, n=8)
    print(f"{scheme:22}{rep.redundant_bits:>16}{rep.exponent_sram_cells:>16}")
