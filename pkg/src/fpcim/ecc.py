"""Row-based shared-exponent SECDED codec and redundancy accounting.

A protected storage row holds up to 104 data bits.  Encoding is systematic:
the data bits stay in place and 8 parity bits are appended (7 extended-Hamming
checks plus one overall even-parity bit, distance 4).  Row contents come from
pack_block, which lays 16 shared 5-bit exponents and all group sign bits into
a single bitstream and splits it across rows.

Bit conventions: inside a row int, stream bit j sits at 1 << j (bit 0 is the
first exponent's MSB).  The hex dump renders the stream MSB-first.
"""

from __future__ import annotations

import enum
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

HAMMING_CHECKS = 7
PARITY_BITS = 8  # 7 Hamming checks + 1 overall parity
MAX_DATA_BITS = 120  # 7 checks cover positions 1..127, minus the 7 check slots
ROW_DATA_BITS = 104  # capacity of one protected storage row
WEIGHTS_PER_ROW = 16
EXP_BITS = 5


class DecodeStatus(enum.Enum):
    NO_ERROR = "no_error"
    CORRECTED_SINGLE = "corrected_single"
    DETECTED_DOUBLE = "detected_double"


class DecodeOutcome(NamedTuple):
    status: DecodeStatus
    # classical Hamming position of the corrected bit (1..k+7); 0 means the
    # overall-parity bit itself; None when nothing was corrected
    position: int | None = None


@lru_cache(maxsize=None)
def _layout(k: int):
    """Classical Hamming layout for k data bits.

    Returns (data_positions, check_masks, pos_to_index):
      data_positions[j] = position of data bit j in 1..k+7 (non-powers of two,
      ascending); check_masks[i] = int mask over data bits whose position has
      bit i set; pos_to_index maps a position back to the data bit index.
    """
    if not 0 < k <= MAX_DATA_BITS:
        raise ValueError(f"data length {k} outside 1..{MAX_DATA_BITS}")
    positions = []
    pos = 1
    while len(positions) < k:
        if pos & (pos - 1):  # skip power-of-two parity slots
            positions.append(pos)
        pos += 1
    masks = [0] * HAMMING_CHECKS
    for j, p in enumerate(positions):
        for i in range(HAMMING_CHECKS):
            if p >> i & 1:
                masks[i] |= 1 << j
    pos_to_index = {p: j for j, p in enumerate(positions)}
    return tuple(positions), tuple(masks), pos_to_index


def secded_encode(data: int, k: int) -> int:
    """Compute the 8 parity bits for k data bits (bit 7 = overall parity)."""
    _, masks, _ = _layout(k)
    parity = 0
    for i, m in enumerate(masks):
        parity |= ((data & m).bit_count() & 1) << i
    overall = (data.bit_count() + (parity & 0x7F).bit_count()) & 1
    return parity | overall << 7


def secded_decode(data: int, parity: int, k: int) -> tuple[DecodeOutcome, int]:
    """Classify and, for a single flip, repair a received data+parity row.

    Syndrome r = recomputed checks XOR stored parity.  r == 0: no error.
    r[7] == 1: single error at classical position r[6:0] (0 = the overall
    parity bit itself), corrected.  r[7] == 0 with r[6:0] != 0: two or more
    errors, detected but left uncorrected.
    """
    _, masks, pos_to_index = _layout(k)
    syndrome = 0
    for i, m in enumerate(masks):
        syndrome |= (((data & m).bit_count() & 1) ^ (parity >> i & 1)) << i
    overall = (data.bit_count() + parity.bit_count()) & 1  # even parity holds if 0
    r = syndrome | overall << 7
    if r == 0:
        return DecodeOutcome(DecodeStatus.NO_ERROR), data
    if r >> 7:
        pos = r & 0x7F
        if pos == 0:
            return DecodeOutcome(DecodeStatus.CORRECTED_SINGLE, 0), data
        j = pos_to_index.get(pos)
        if j is not None:
            return DecodeOutcome(DecodeStatus.CORRECTED_SINGLE, pos), data ^ (1 << j)
        if pos & (pos - 1) == 0 and pos <= 64:
            # a flipped Hamming parity bit; data is intact
            return DecodeOutcome(DecodeStatus.CORRECTED_SINGLE, pos), data
        # syndrome points outside the codeword: >= 3 flips, report uncorrectable
        return DecodeOutcome(DecodeStatus.DETECTED_DOUBLE), data
    return DecodeOutcome(DecodeStatus.DETECTED_DOUBLE), data


def total_protected_bits(n: int) -> int:
    """Bits to protect per n-row block: 16 shared exponents + all sign bits."""
    return EXP_BITS * WEIGHTS_PER_ROW + n * WEIGHTS_PER_ROW


def row_sizes(total_bits: int) -> list[int]:
    """Split a block's bitstream into near-equal rows of at most 104 bits."""
    nrows = -(-total_bits // ROW_DATA_BITS)
    base, rem = divmod(total_bits, nrows)
    return [base + 1] * rem + [base] * (nrows - rem)


def pack_block(exponents, signs, n: int = 8) -> list[tuple[int, int]]:
    """Lay out shared exponents and sign bits into protected data rows.

    exponents: 16 five-bit fields, one per weight column, emitted MSB-first in
    column order.  signs: (n, 16) sign bits, emitted row-major after the
    exponents.  Returns [(data_int, nbits), ...] with stream bit j at 1 << j.
    """
    exponents = np.asarray(exponents, dtype=np.uint8)
    signs = np.asarray(signs, dtype=np.uint8)
    if exponents.shape != (WEIGHTS_PER_ROW,) or signs.shape != (n, WEIGHTS_PER_ROW):
        raise ValueError(f"expected 16 exponents and {n}x16 signs, got {exponents.shape} / {signs.shape}")
    bits = []
    for e in exponents.tolist():
        for b in range(EXP_BITS - 1, -1, -1):
            bits.append(e >> b & 1)
    bits.extend(int(s) & 1 for s in signs.reshape(-1).tolist())
    rows = []
    start = 0
    for size in row_sizes(len(bits)):
        data = 0
        for j in range(size):
            data |= bits[start + j] << j
        rows.append((data, size))
        start += size
    return rows


def unpack_block(rows: Sequence[tuple[int, int]], n: int = 8):
    """Inverse of pack_block: rows back to (exponents (16,), signs (n,16))."""
    bits = []
    for data, size in rows:
        bits.extend(data >> j & 1 for j in range(size))
    if len(bits) != total_protected_bits(n):
        raise ValueError(f"got {len(bits)} bits, expected {total_protected_bits(n)} for n={n}")
    exponents = np.zeros(WEIGHTS_PER_ROW, dtype=np.uint8)
    for w in range(WEIGHTS_PER_ROW):
        e = 0
        for b in range(EXP_BITS):
            e = e << 1 | bits[w * EXP_BITS + b]
        exponents[w] = e
    signs = np.array(bits[WEIGHTS_PER_ROW * EXP_BITS :], dtype=np.uint8).reshape(n, WEIGHTS_PER_ROW)
    return exponents, signs


def codeword_hex(data: int, k: int, parity: int) -> str:
    """Golden-test dump: data then parity, stream order, MSB-first, lowercase."""
    dbits = "".join(str(data >> j & 1) for j in range(k))
    pbits = "".join(str(parity >> j & 1) for j in range(PARITY_BITS))
    out = []
    for chunk, width in ((dbits, k), (pbits, PARITY_BITS)):
        # chunk is written first-stream-bit-first, i.e. already MSB-first
        out.append(format(int(chunk, 2), f"0{-(-width // 4)}x"))
    return "".join(out)


def secded_parity_count(k: int) -> int:
    """Redundant bits for SECDED over k data bits: min p with 2^p >= p+k+1, +1."""
    p = 1
    while (1 << p) < p + k + 1:
        p += 1
    return p + 1


class OverheadReport(NamedTuple):
    redundant_bits: int
    exponent_sram_cells: int


_SCHEMES = ("traditional_full", "traditional_exp_sign", "row_based_full", "one4n")


def overhead_accounting(
    scheme: str, n: int = 8, rows: int = 256, weights_per_row: int = WEIGHTS_PER_ROW
) -> OverheadReport:
    """Redundancy accounting for a 256x256-bit weight array (4096 FP16 weights).

    traditional_full protects exponent+sign (6 b) and mantissa (10 b) of every
    weight separately; traditional_exp_sign drops the mantissa code;
    row_based_full encodes whole rows (96 exponent+sign bits, 160 mantissa
    bits); one4n protects one shared exponent row plus sign bits per n-row
    block.  Exponent SRAM cells count the stored exponent bits.
    """
    weights = rows * weights_per_row
    baseline_cells = weights * EXP_BITS
    if scheme == "traditional_full":
        return OverheadReport(weights * (secded_parity_count(6) + secded_parity_count(10)), baseline_cells)
    if scheme == "traditional_exp_sign":
        return OverheadReport(weights * secded_parity_count(6), baseline_cells)
    if scheme == "row_based_full":
        exp_sign = (EXP_BITS + 1) * weights_per_row
        mant = 10 * weights_per_row
        return OverheadReport(rows * (secded_parity_count(exp_sign) + secded_parity_count(mant)), baseline_cells)
    if scheme == "one4n":
        full, rem = divmod(rows, n)
        redundant = full * len(row_sizes(total_protected_bits(n))) * PARITY_BITS
        blocks = full
        if rem:  # leftover rows form one additional smaller block
            redundant += len(row_sizes(total_protected_bits(rem))) * PARITY_BITS
            blocks += 1
        return OverheadReport(redundant, blocks * EXP_BITS * weights_per_row)
    raise ValueError(f"unknown scheme {scheme!r}, expected one of {_SCHEMES}")
