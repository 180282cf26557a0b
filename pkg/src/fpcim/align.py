"""Shared-exponent alignment of weight blocks.

Weights are grouped n-at-a-time along the input-channel axis.  Each block
picks one exponent by rank from the descending-sorted exponent list of its
nonzero members, then rescales every member into the magnitude range that
exponent can represent: [LL, UL] for positives, [-UL, -LL] for negatives,
where LL = 2^e and UL = 2^e * (2 - 2^-10).  Positive and negative subsets are
rescaled independently.  Zero members cannot be represented under a shared
nonzero exponent; by default they map to +/-LL (an ablation flag keeps them
at zero on the algorithm side).  All-zero blocks are degenerate: they keep a
zero exponent field and are left untouched.

Block transforms are independent and side-effect free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fp16

UL_RATIO = 2.0 - 2.0**-10
DEGENERATE_E = -15  # unbiased sentinel: exponent field 0, zero semantics


@dataclass(frozen=True)
class AlignmentSpec:
    """Shared exponent choice for one block."""

    e_shared: int  # unbiased exponent; DEGENERATE_E marks an all-zero block
    index: int  # requested 1-based rank into the descending exponent list
    ll: float
    ul: float
    degenerate: bool = False

    @classmethod
    def for_exponent(cls, e: int, index: int) -> "AlignmentSpec":
        ll = 2.0**e
        return cls(e, index, ll, ll * UL_RATIO)

    @classmethod
    def degenerate_zero(cls, index: int) -> "AlignmentSpec":
        return cls(DEGENERATE_E, index, 0.0, 0.0, degenerate=True)


def _exponents(values: np.ndarray) -> np.ndarray:
    """FP16 unbiased exponents of the nonzero members (flush-to-zero encode)."""
    bits = fp16.encode_array(np.abs(values))
    fields = (bits >> 10) & 0x1F
    return fields[fields > 0].astype(np.int64) - 15


def select_exponent(values, index: int) -> AlignmentSpec:
    """Rank the block's exponents in descending order and pick the one at
    `index` (1-based, duplicates retained, clamped to the list length)."""
    if index < 1:
        raise ValueError(f"index must be >= 1, got {index}")
    values = np.asarray(values, dtype=np.float64)
    exps = _exponents(values)
    if exps.size == 0:
        return AlignmentSpec.degenerate_zero(index)
    order = np.sort(exps)[::-1]
    e = int(order[min(index, order.size) - 1])
    return AlignmentSpec.for_exponent(e, index)


def _affine_into(mags: np.ndarray, ll: float, ul: float) -> np.ndarray:
    lo, hi = mags.min(), mags.max()
    if hi == lo:
        return np.clip(mags, ll, ul)
    return (mags - lo) / (hi - lo) * (ul - ll) + ll


def _quantize_to_exponent(mags: np.ndarray, e: int) -> np.ndarray:
    """Round magnitudes onto the mantissa grid of 2^e (ties to even)."""
    mant = np.clip(np.round(mags * 2.0**-e * 1024.0 - 1024.0), 0, 1023)
    return (1024.0 + mant) * 2.0 ** (e - 10)


def rescale_block(values, spec: AlignmentSpec, zeros_to_limit: bool = True) -> np.ndarray:
    """Map a block into the representable range of its shared exponent.

    Zero members are placed on +/-LL first (exact zero takes +LL; the
    drop-to-zero ablation keeps them at zero instead).  Positives and
    negatives, including the just-placed limits, are then mapped by mirrored
    affine transforms using their own min/max and quantized to the
    fixed-exponent mantissa grid.  Folding the placed zeros into the subset
    statistics keeps the transform a fixed point: applying it twice changes
    nothing.
    """
    values = np.asarray(values, dtype=np.float64)
    if spec.degenerate:
        return values.copy()
    vals = values.copy()
    zero = vals == 0
    if zero.any():
        if zeros_to_limit:
            vals[zero] = np.where(np.signbit(values[zero]), -spec.ll, spec.ll)
        else:
            vals[zero] = 0.0
    out = vals.copy()
    pos = vals > 0
    neg = vals < 0
    if pos.any():
        out[pos] = _quantize_to_exponent(_affine_into(vals[pos], spec.ll, spec.ul), spec.e_shared)
    if neg.any():
        out[neg] = -_quantize_to_exponent(_affine_into(-vals[neg], spec.ll, spec.ul), spec.e_shared)
    return out


def block_count(in_dim: int, n: int) -> int:
    """Blocks along the input axis; a remainder shorter than n still forms one."""
    return -(-in_dim // n)


def align_tensor(weights, n: int, index: int, zeros_to_limit: bool = True):
    """Align one (in_dim, out_dim) tensor.

    Returns (aligned values, e_shared table of shape (blocks, out_dim), int8,
    with DEGENERATE_E marking all-zero blocks).
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError(f"expected a 2-D (in, out) tensor, got shape {w.shape}")
    in_dim, out_dim = w.shape
    blocks = block_count(in_dim, n)
    aligned = np.empty_like(w)
    table = np.full((blocks, out_dim), DEGENERATE_E, dtype=np.int8)
    for g in range(blocks):
        rows = slice(g * n, min((g + 1) * n, in_dim))
        for c in range(out_dim):
            spec = select_exponent(w[rows, c], index)
            aligned[rows, c] = rescale_block(w[rows, c], spec, zeros_to_limit)
            table[g, c] = spec.e_shared
    return aligned, table


def align_model(tensors, n: int, index: int, zeros_to_limit: bool = True):
    """align_tensor over a list of tensors; returns (aligned list, table list)."""
    aligned, tables = [], []
    for w in tensors:
        a, t = align_tensor(w, n, index, zeros_to_limit)
        aligned.append(a)
        tables.append(t)
    return aligned, tables


def spec_from_table(table: np.ndarray, g: int, c: int, index: int) -> AlignmentSpec:
    e = int(table[g, c])
    if e == DEGENERATE_E:
        return AlignmentSpec.degenerate_zero(index)
    return AlignmentSpec.for_exponent(e, index)


def is_aligned(weights, n: int, table) -> bool:
    """True when every block's nonzero members carry exactly the shared
    exponent field (and all-zero blocks are marked degenerate)."""
    w = np.asarray(weights, dtype=np.float64)
    bits = fp16.encode_array(w)
    fields = (bits >> 10) & 0x1F
    table = np.asarray(table)
    in_dim, out_dim = w.shape
    for g in range(block_count(in_dim, n)):
        rows = slice(g * n, min((g + 1) * n, in_dim))
        for c in range(out_dim):
            f = fields[rows, c]
            nz = f[f > 0]
            e = int(table[g, c])
            if e == DEGENERATE_E:
                if nz.size:
                    return False
            elif nz.size == 0 or not np.all(nz == e + 15):
                return False
    return True
