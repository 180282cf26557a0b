"""Bit-exact IEEE binary16 patterns and the multiply/align/accumulate datapath.

Half-precision values travel as plain ints holding the 16-bit pattern
(numpy uint16 arrays for the bulk helpers).  The datapath flushes subnormals
to zero on both decode and encode; exponent field 31 (Inf/NaN) is propagated,
never silently masked.  All scalar operations here are pure functions and
safe for concurrent use.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple

import numpy as np

EXP_BIAS = 15
MANT_BITS = 10
HIDDEN_ONE = 1 << MANT_BITS  # implicit leading 1 of a normal mantissa
POS_INF = 0x7C00
NEG_INF = 0xFC00
QNAN = 0x7E00  # canonical quiet NaN
MAX_FINITE = 65504.0
DEFAULT_FRAC_BITS = 14  # accumulator fraction width F (hidden + 10 mantissa + 3 guard)


def decompose(h: int) -> tuple[int, int, int]:
    """Split a pattern into (sign, exponent_field, mantissa_field).

    Bit layout: [15] = sign, [14:10] = exponent, [9:0] = mantissa.
    """
    return (h >> 15) & 0x1, (h >> 10) & 0x1F, h & 0x3FF


def compose(sign: int, exp_field: int, mant_field: int) -> int:
    return ((sign & 0x1) << 15) | ((exp_field & 0x1F) << 10) | (mant_field & 0x3FF)


def is_zero(h: int) -> bool:
    """Exponent field 0 decodes as zero (subnormals are flushed)."""
    return (h >> 10) & 0x1F == 0


def is_nan(h: int) -> bool:
    return (h >> 10) & 0x1F == 31 and h & 0x3FF != 0


def is_inf(h: int) -> bool:
    return h & 0x7FFF == POS_INF


def is_finite(h: int) -> bool:
    return (h >> 10) & 0x1F != 31


class FpProduct(NamedTuple):
    """One weight*activation product before alignment.

    mant_prod is the 22-bit fixed-point value (1024+Ma)*(1024+Mb) with
    20 fraction bits, i.e. 1.Ma * 1.Mb in [1, 4).  exp_sum is the unbiased
    exponent sum.  A zero operand yields the canonical zero product; an
    Inf/NaN operand yields a tagged special for the caller to propagate.
    """

    sign: int
    exp_sum: int
    mant_prod: int
    zero: bool = False
    special: str | None = None  # "inf" | "nan"


class MacResult(NamedTuple):
    bits: int
    overflow: bool = False
    invalid: bool = False  # NaN produced or propagated
    flushed: bool = False  # result underflowed and was flushed to zero


def fp_mul(a: int, b: int) -> FpProduct:
    """Multiply two patterns: sign XOR, exponent summation, mantissa product."""
    sa, ea, ma = decompose(a)
    sb, eb, mb = decompose(b)
    sign = sa ^ sb
    a_nan = ea == 31 and ma != 0
    b_nan = eb == 31 and mb != 0
    a_inf = ea == 31 and ma == 0
    b_inf = eb == 31 and mb == 0
    a_zero = ea == 0
    b_zero = eb == 0
    if a_nan or b_nan or (a_inf and b_zero) or (b_inf and a_zero):
        return FpProduct(sign, 0, 0, special="nan")
    if a_inf or b_inf:
        return FpProduct(sign, 0, 0, special="inf")
    if a_zero or b_zero:
        return FpProduct(sign, 0, 0, zero=True)
    return FpProduct(sign, ea + eb - 2 * EXP_BIAS, (HIDDEN_ONE + ma) * (HIDDEN_ONE + mb))


def mac(products: Iterable[FpProduct], frac_bits: int = DEFAULT_FRAC_BITS) -> MacResult:
    """Accumulate products into one Half.

    Steps: take the maximum exponent sum over live terms, right-shift each
    mantissa product by its exponent difference (truncating to frac_bits
    fraction bits), apply signs, sum exactly, then normalize and truncate
    the result back to the 16-bit format.  Shifted-out bits are dropped,
    never rounded.  Terms shifted past the accumulator window contribute
    exactly zero.
    """
    products = list(products)
    if not 1 <= len(products) <= 1 << 16:
        raise ValueError(f"mac needs 1..65536 products, got {len(products)}")
    pos_inf = neg_inf = invalid = False
    live = []
    for p in products:
        if p.special == "nan":
            invalid = True
        elif p.special == "inf":
            if p.sign:
                neg_inf = True
            else:
                pos_inf = True
        elif not p.zero:
            live.append(p)
    if invalid or (pos_inf and neg_inf):
        return MacResult(QNAN, invalid=True)
    if pos_inf or neg_inf:
        return MacResult(NEG_INF if neg_inf else POS_INF)
    if not live:
        return MacResult(0)

    e_max = max(p.exp_sum for p in live)
    base = 2 * MANT_BITS - frac_bits  # product carries 20 fraction bits
    acc = 0
    for p in live:  # fixed left-to-right order
        shift = base + (e_max - p.exp_sum)
        term = p.mant_prod >> shift if shift >= 0 else p.mant_prod << -shift
        acc += -term if p.sign else term
    if acc == 0:
        return MacResult(0)

    sign = 1 if acc < 0 else 0
    mag = -acc if acc < 0 else acc
    bitlen = mag.bit_length()
    exp_field = (e_max - frac_bits + bitlen - 1) + EXP_BIAS
    if exp_field >= 31:
        return MacResult(NEG_INF if sign else POS_INF, overflow=True)
    if exp_field <= 0:
        return MacResult(sign << 15, flushed=True)
    drop = bitlen - 1 - MANT_BITS
    mant = (mag >> drop if drop >= 0 else mag << -drop) & 0x3FF
    return MacResult(compose(sign, exp_field, mant))


def pack_product(p: FpProduct, frac_bits: int = DEFAULT_FRAC_BITS) -> int:
    """Normalize and truncate a single product down to a Half pattern."""
    return mac((p,), frac_bits).bits


def from_real(x: float) -> int:
    """Encode a real value with round-to-nearest-even; out-of-range gives Inf.

    Subnormal results flush to signed zero.
    """
    with np.errstate(over="ignore"):
        bits = int(np.float16(x).view(np.uint16))
    if bits & 0x7C00 == 0:
        return bits & 0x8000
    return bits


def to_real(h: int) -> float:
    """Exact value of a pattern under flush-to-zero decoding."""
    if h & 0x7C00 == 0:
        return -0.0 if h >> 15 else 0.0
    return float(np.uint16(h).view(np.float16))


def encode_array(values) -> np.ndarray:
    """Vector from_real: float array -> uint16 patterns (RNE, flush-to-zero)."""
    with np.errstate(over="ignore"):
        bits = np.asarray(values, dtype=np.float64).astype(np.float16).view(np.uint16).copy()
    sub = (bits & 0x7C00) == 0
    bits[sub] &= 0x8000
    return bits


def decode_array(bits) -> np.ndarray:
    """Vector to_real: uint16 patterns -> float64 values (flush-to-zero)."""
    bits = np.ascontiguousarray(bits, dtype=np.uint16)
    vals = bits.view(np.float16).astype(np.float64)
    sub = (bits & 0x7C00) == 0
    return np.where(sub, np.copysign(0.0, vals), vals)
