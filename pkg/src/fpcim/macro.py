"""Functional model of the FP16 compute-in-memory tile.

A tile is a 256x256-bit weight array: 256 rows of sixteen FP16 weights, each
row multiplied by the same input element, accumulated down every column.
Two storage modes exist:

* baseline - every weight keeps its own sign/exponent/mantissa, unprotected;
* one4n    - weights are exponent-aligned in blocks of n rows; each block
             stores 16 shared exponents plus all its sign bits in protected
             rows (8 SECDED parity bits per row), mantissas stay unprotected.

Reads optionally pass through bit-flip injection (static corruption happens
once via with_static_faults, dynamic corruption is sampled per access and
never touches storage) and, in one4n mode, through the SECDED decoder; a
detected-double row is used uncorrected and the event counted.  The
arithmetic follows the fp16 module's multiply/align/accumulate rules
bit-for-bit, so a tile column matches the straight-line fp16.mac oracle.

Tiles are immutable after load; concurrent matvec calls are safe, and the
keyed RNG makes injection independent of call interleaving.
"""

from __future__ import annotations

import dataclasses
from typing import NamedTuple

import numpy as np

from . import ecc, fp16
from .inject import (
    SURFACE_ROWS,
    SURFACE_WORDS,
    FieldMask,
    InjectionPlan,
    derive_seed,
    flip_grid,
    inject_static,
)

ROWS = 256
COLS = 16
EXPOSURES = ("exponent_sign", "mantissa", "all")
_NEG = -(1 << 20)  # sentinel exponent for "no valid term"
_DYN_CHUNK = 64  # batch chunk size when dynamic injection materializes per-sample fields


@dataclasses.dataclass(frozen=True)
class ReadPathConfig:
    """Read behavior: ECC on/off, injection plan, exposed storage surfaces."""

    ecc: bool = False
    injection: InjectionPlan | None = None
    exposure: str = "all"  # one4n surfaces; baseline exposure follows plan.mask
    frac_bits: int = fp16.DEFAULT_FRAC_BITS
    trace: bool = False

    def __post_init__(self):
        if self.exposure not in EXPOSURES:
            raise ValueError(f"exposure must be one of {EXPOSURES}")
        if self.injection is not None:
            self.injection.validate()


@dataclasses.dataclass
class CallStats:
    """Per-call event counts (dynamic decode events; output specials)."""

    corrected_singles: int = 0
    detected_doubles: int = 0
    flips: int = 0
    nan_outputs: int = 0
    inf_outputs: int = 0
    overflows: int = 0
    trace: "PipelineTrace | None" = None

    def merge(self, other: "CallStats"):
        self.corrected_singles += other.corrected_singles
        self.detected_doubles += other.detected_doubles
        self.flips += other.flips
        self.nan_outputs += other.nan_outputs
        self.inf_outputs += other.inf_outputs
        self.overflows += other.overflows
        return self


class PipelineTrace(NamedTuple):
    """Intermediates of the five-step exponent processing flow."""

    x_max: np.ndarray  # (G,) per-group max input exponent
    term_sums: np.ndarray  # (R, C) per-term X_E,i + W_E
    group_sums: np.ndarray  # (G, C) X_max + W_E
    e_max: np.ndarray  # (C,) overall maximum exponent sum
    e_diff: np.ndarray  # (R, C) term_sums - e_max (<= 0 where valid)
    shifts: np.ndarray  # (R, C) alignment shifts, saturated at frac_bits + 2
    valid: np.ndarray  # (R, C) terms that contribute


def exponent_pipeline(
    input_exps,
    weight_exps,
    n: int,
    input_valid=None,
    weight_valid=None,
    frac_bits: int = fp16.DEFAULT_FRAC_BITS,
) -> PipelineTrace:
    """Five-step exponent flow over groups of n inputs sharing one weight
    exponent per column: group input max and per-term sums, group sums,
    overall max, per-term differences, saturated shifts."""
    xe = np.asarray(input_exps, dtype=np.int64)
    we = np.asarray(weight_exps, dtype=np.int64)
    if we.ndim == 1:
        we = we[:, None]
    r = xe.shape[0]
    g = we.shape[0]
    if g != -(-r // n):
        raise ValueError(f"{r} inputs grouped by {n} need {-(-r // n)} weight-exponent groups, got {g}")
    xv = np.ones(r, dtype=bool) if input_valid is None else np.asarray(input_valid, dtype=bool)
    wv = np.ones_like(we, dtype=bool) if weight_valid is None else np.asarray(weight_valid, dtype=bool)

    pad = g * n - r
    xe_g = np.pad(xe, (0, pad), constant_values=_NEG).reshape(g, n)
    xv_g = np.pad(xv, (0, pad), constant_values=False).reshape(g, n)
    x_max = np.where(xv_g, xe_g, _NEG).max(axis=1)  # step 1 (max side)

    we_terms = np.repeat(we, n, axis=0)[:r]
    term_sums = xe[:, None] + we_terms  # step 1 (sum side)
    group_sums = x_max[:, None] + we  # step 2
    group_ok = (x_max > _NEG)[:, None] & wv
    e_max = np.where(group_ok, group_sums, _NEG).max(axis=0)  # step 3
    valid = xv[:, None] & np.repeat(wv, n, axis=0)[:r]
    e_diff = np.where(valid, term_sums - e_max[None, :], 0)  # step 4
    shifts = np.minimum(-e_diff, frac_bits + 2)  # step 5
    return PipelineTrace(x_max, term_sums, group_sums, e_max, e_diff, shifts, valid)


# ---------------------------------------------------------------------------
# tile storage


def _bits_from_int(value: int, nbits: int) -> np.ndarray:
    raw = np.frombuffer(value.to_bytes((nbits + 7) // 8, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:nbits]


def _int_from_bits(bits: np.ndarray) -> int:
    return int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")


@dataclasses.dataclass
class Tile:
    mode: str  # "baseline" | "one4n"
    n: int
    active_rows: int
    active_cols: int
    key_salt: int
    # baseline storage
    words: np.ndarray | None = None  # (256, 16) uint16
    # one4n storage
    mant: np.ndarray | None = None  # (256, 16) uint16, 10-bit mantissa fields
    row_data: np.ndarray | None = None  # (n_rows, k_max) uint8 data bits
    row_parity: np.ndarray | None = None  # (n_rows, 8) uint8 parity bits
    row_k: np.ndarray | None = None  # (n_rows,) data bits per row
    rows_per_block: int = 0
    static_flips: int = 0
    _field_cache: dict = dataclasses.field(default_factory=dict, repr=False)

    def block_rows(self, block_id: int) -> slice:
        return slice(block_id * self.rows_per_block, (block_id + 1) * self.rows_per_block)

    def storage_digest(self) -> dict:
        """Stable hashes of each storage surface (exposure-discipline checks)."""
        import hashlib

        out = {}
        if self.mode == "baseline":
            out["words"] = hashlib.sha256(self.words.tobytes()).hexdigest()
        else:
            out["mantissa"] = hashlib.sha256(self.mant.tobytes()).hexdigest()
            out["rows"] = hashlib.sha256(self.row_data.tobytes() + self.row_parity.tobytes()).hexdigest()
        return out


def derive_shared_fields(exp_fields: np.ndarray, n: int, spec_fields=None) -> np.ndarray:
    """Per-block shared exponent fields; field 0 marks an all-zero block.

    Rejects blocks mixing distinct exponents, Inf/NaN fields, or zero weights
    alongside nonzero ones (unrepresentable under a shared exponent).
    """
    nb = ROWS // n
    f = np.asarray(exp_fields, dtype=np.uint8).reshape(nb, n, COLS)
    fmax = f.max(axis=1)
    fmin_nz = np.where(f > 0, f, 99).min(axis=1)
    any_zero = (f == 0).any(axis=1)
    all_zero = fmax == 0
    bad = ~all_zero & ((fmax != fmin_nz) | any_zero)
    if bad.any():
        b, c = np.argwhere(bad)[0]
        fields = np.unique(f[b, :, c]).tolist()
        raise ValueError(f"block {b} column {c} has exponent fields {fields}; weights are not aligned for one4n")
    shared = np.where(all_zero, 0, fmax).astype(np.uint8)
    if spec_fields is not None:
        if not np.array_equal(np.asarray(spec_fields, dtype=np.uint8), shared):
            raise ValueError("provided alignment table disagrees with the stored weights")
    return shared


def _pack_all_blocks(shared: np.ndarray, signs: np.ndarray, n: int):
    """Vectorized pack_block over every block of a tile.

    Returns (row_data (nb*rpb, k_max) uint8, row_k (nb*rpb,)); bit-identical
    to ecc.pack_block applied per block.
    """
    nb = shared.shape[0]
    exp_bits = ((shared[:, :, None] >> np.arange(4, -1, -1)) & 1).reshape(nb, 80).astype(np.uint8)
    sign_bits = signs.reshape(nb, -1).astype(np.uint8)
    stream = np.concatenate([exp_bits, sign_bits], axis=1)
    sizes = ecc.row_sizes(stream.shape[1])
    k_max = max(sizes)
    row_data = np.zeros((nb * len(sizes), k_max), dtype=np.uint8)
    start = 0
    for j, k in enumerate(sizes):
        row_data[j :: len(sizes), :k] = stream[:, start : start + k]
        start += k
    row_k = np.tile(np.array(sizes, dtype=np.int64), nb)
    return row_data, row_k


def load_tile(
    weights,
    mode: str = "baseline",
    n: int = 8,
    spec_fields=None,
    active_rows: int = ROWS,
    active_cols: int = COLS,
    key_salt: int = 0,
) -> Tile:
    """Load a (256, 16) array of FP16 patterns into tile storage.

    one4n mode requires aligned weights and packs shared exponents plus sign
    bits into protected rows with precomputed SECDED parity.  active_rows /
    active_cols bound the region the caller drives (inputs beyond it must be
    zero); storage always covers the full tile.
    """
    words = np.ascontiguousarray(weights, dtype=np.uint16)
    if words.shape != (ROWS, COLS):
        raise ValueError(f"tile expects shape {(ROWS, COLS)}, got {words.shape}")
    if mode == "baseline":
        return Tile("baseline", n, active_rows, active_cols, key_salt, words=words.copy())
    if mode != "one4n":
        raise ValueError(f"unknown mode {mode!r}")
    if ROWS % n:
        raise ValueError(f"one4n tile needs {ROWS} % n == 0, got n={n}")

    sign = (words >> 15).astype(np.uint8)
    exp_fields = ((words >> 10) & 0x1F).astype(np.uint8)
    mant = (words & 0x3FF).astype(np.uint16)
    if np.any(exp_fields == 31):
        raise ValueError("one4n tile cannot store Inf/NaN weights")
    shared = derive_shared_fields(exp_fields, n, spec_fields)

    row_data, row_k = _pack_all_blocks(shared, sign.reshape(ROWS // n, n, COLS), n)
    row_parity = np.zeros((row_data.shape[0], 8), dtype=np.uint8)
    for i in range(row_data.shape[0]):
        k = int(row_k[i])
        row_parity[i] = _bits_from_int(ecc.secded_encode(_int_from_bits(row_data[i, :k]), k), 8)
    return Tile(
        "one4n",
        n,
        active_rows,
        active_cols,
        key_salt,
        mant=mant,
        row_data=row_data,
        row_parity=row_parity,
        row_k=row_k,
        rows_per_block=len(ecc.row_sizes(ecc.total_protected_bits(n))),
    )


def _tile_seed(tile: Tile, plan: InjectionPlan) -> int:
    # distinct tiles draw from distinct streams under one plan
    return derive_seed(plan.master_seed, tile.key_salt)


def with_static_faults(tile: Tile, plan: InjectionPlan, exposure: str = "all") -> Tile:
    """One-shot corruption of the stored bits; returns a new tile.

    baseline: plan.mask selects the exposed word bits.  one4n: exposure
    selects the protected rows (data and parity cells alike) and/or the
    mantissa storage.
    """
    plan.validate()
    if plan.mode != "static":
        raise ValueError("with_static_faults requires a static plan")
    seeded = plan._replace(master_seed=_tile_seed(tile, plan))
    if tile.mode == "baseline":
        corrupted, log = inject_static(tile.words, seeded)
        return dataclasses.replace(tile, words=corrupted, static_flips=len(log), _field_cache={})

    flips = 0
    mant, row_data, row_parity = tile.mant, tile.row_data, tile.row_parity
    if exposure in ("mantissa", "all"):
        mant, log = inject_static(mant, seeded._replace(mask=FieldMask.MANTISSA))
        flips += len(log)
    if exposure in ("exponent_sign", "all"):
        n_rows, k_max = tile.row_data.shape
        mask = flip_grid(
            seeded.master_seed,
            SURFACE_ROWS,
            np.arange(n_rows, dtype=np.uint64)[:, None],
            0,
            np.arange(k_max + 8, dtype=np.uint64)[None, :],
            seeded.ber,
        )
        mask[:, :k_max] &= np.arange(k_max)[None, :] < tile.row_k[:, None]
        row_data = tile.row_data ^ mask[:, :k_max].astype(np.uint8)
        row_parity = tile.row_parity ^ mask[:, k_max:].astype(np.uint8)
        flips += int(mask.sum())
    return dataclasses.replace(
        tile, mant=mant, row_data=row_data, row_parity=row_parity, static_flips=flips, _field_cache={}
    )


def _decode_all_rows(tile: Tile, use_ecc: bool):
    """Pass every stored row through the read path once; returns expanded
    per-weight (exp_field, sign) arrays and decode outcome counts."""
    n, rpb = tile.n, tile.rows_per_block
    exp_fields = np.zeros((ROWS, COLS), dtype=np.uint8)
    signs = np.zeros((ROWS, COLS), dtype=np.uint8)
    corrected = doubles = 0
    for b in range(ROWS // n):
        rows = []
        for j in range(rpb):
            idx = b * rpb + j
            k = int(tile.row_k[idx])
            data = _int_from_bits(tile.row_data[idx, :k])
            if use_ecc:
                outcome, data = ecc.secded_decode(data, _int_from_bits(tile.row_parity[idx]), k)
                if outcome.status is ecc.DecodeStatus.CORRECTED_SINGLE:
                    corrected += 1
                elif outcome.status is ecc.DecodeStatus.DETECTED_DOUBLE:
                    doubles += 1
            rows.append((data, k))
        exps, sgn = ecc.unpack_block(rows, n=n)
        exp_fields[b * n : (b + 1) * n] = exps[None, :]
        signs[b * n : (b + 1) * n] = sgn
    return exp_fields, signs, corrected, doubles


def _cached_fields(tile: Tile, use_ecc: bool):
    key = bool(use_ecc)
    if key not in tile._field_cache:
        tile._field_cache[key] = _decode_all_rows(tile, use_ecc)
    return tile._field_cache[key]


def static_decode_counts(tile: Tile, use_ecc: bool) -> tuple[int, int]:
    """(corrected_singles, detected_doubles) for the tile's stored rows."""
    if tile.mode != "one4n":
        return 0, 0
    _, _, corrected, doubles = _cached_fields(tile, use_ecc)
    return corrected, doubles


def read_exponent_rows(tile: Tile, block_id: int, config: ReadPathConfig, access: int = 0):
    """Read one block's protected rows: inject (dynamic mode), decode, unpack.

    Returns (shared exponent fields (16,), sign bits (n, 16), [DecodeOutcome]).
    A DetectedDouble row is used uncorrected and reported in the outcome list.
    """
    if tile.mode != "one4n":
        raise ValueError("read_exponent_rows applies to one4n tiles")
    plan = config.injection
    dynamic = plan is not None and plan.mode == "dynamic" and plan.ber > 0 and config.exposure != "mantissa"
    seed = _tile_seed(tile, plan) if dynamic else 0
    rows, outcomes = [], []
    for j in range(tile.rows_per_block):
        idx = block_id * tile.rows_per_block + j
        k = int(tile.row_k[idx])
        data_bits = tile.row_data[idx, :k]
        parity_bits = tile.row_parity[idx]
        if dynamic:
            mask = flip_grid(seed, SURFACE_ROWS, idx, access, np.arange(k + 8, dtype=np.uint64), plan.ber)
            data_bits = data_bits ^ mask[:k].astype(np.uint8)
            parity_bits = parity_bits ^ mask[k:].astype(np.uint8)
        data = _int_from_bits(data_bits)
        if config.ecc:
            outcome, data = ecc.secded_decode(data, _int_from_bits(parity_bits), k)
        else:
            outcome = ecc.DecodeOutcome(ecc.DecodeStatus.NO_ERROR)
        outcomes.append(outcome)
        rows.append((data, k))
    exps, signs = ecc.unpack_block(rows, n=tile.n)
    return exps, signs, outcomes


def reconstruct_words(tile: Tile, use_ecc: bool = True) -> np.ndarray:
    """Patterns produced by a clean (no-injection) read; round-trip checks."""
    if tile.mode == "baseline":
        return tile.words.copy()
    exp_fields, signs, _, _ = _cached_fields(tile, use_ecc)
    return (signs.astype(np.uint16) << 15) | (exp_fields.astype(np.uint16) << 10) | tile.mant


# ---------------------------------------------------------------------------
# matvec datapath


def _split_words(words):
    s = (words >> 15).astype(np.int64)
    e = ((words >> 10) & 0x1F).astype(np.int64)
    m = (words & 0x3FF).astype(np.int64)
    return s, e, m


def _weight_views(tile: Tile, config: ReadPathConfig, batch: int, access0: int):
    """Weight fields for one read: (sign, exp_field, mant) as (R, C) arrays
    when storage is shared across the batch, or (B, R, C) under dynamic
    injection.  Stats cover only dynamic events."""
    stats = CallStats()
    r = tile.active_rows
    plan = config.injection
    dynamic = plan is not None and plan.mode == "dynamic" and plan.ber > 0

    if tile.mode == "baseline":
        words = tile.words[:r]
        if not dynamic:
            return (*_split_words(words), stats)
        seed = _tile_seed(tile, plan)
        positions = np.array(plan.mask.positions, dtype=np.uint64)
        word_idx = (np.arange(r)[:, None] * COLS + np.arange(COLS)[None, :]).astype(np.uint64)
        acc_idx = (access0 + np.arange(batch, dtype=np.uint64))[:, None, None, None]
        flips = flip_grid(seed, SURFACE_WORDS, word_idx[None, :, :, None], acc_idx, positions, plan.ber)
        xor = (flips.astype(np.uint32) << positions.astype(np.uint32)).sum(axis=-1, dtype=np.uint32)
        stats.flips += int(flips.sum())
        return (*_split_words(words[None, :, :] ^ xor.astype(np.uint16)), stats)

    exp_fields, signs, _, _ = _cached_fields(tile, config.ecc)
    if not dynamic:
        return (
            signs[:r].astype(np.int64),
            exp_fields[:r].astype(np.int64),
            tile.mant[:r].astype(np.int64),
            stats,
        )

    seed = _tile_seed(tile, plan)
    rpb = tile.rows_per_block
    n_rows = -(-r // tile.n) * rpb  # rows of blocks overlapping the active region
    k_max = tile.row_data.shape[1]

    wm = np.broadcast_to(tile.mant[:r].astype(np.int64), (batch, r, COLS)).copy()
    if config.exposure in ("mantissa", "all"):
        positions = np.arange(10, dtype=np.uint64)
        word_idx = (np.arange(r)[:, None] * COLS + np.arange(COLS)[None, :]).astype(np.uint64)
        acc_idx = (access0 + np.arange(batch, dtype=np.uint64))[:, None, None, None]
        flips = flip_grid(seed, SURFACE_WORDS, word_idx[None, :, :, None], acc_idx, positions, plan.ber)
        stats.flips += int(flips.sum())
        wm ^= (flips.astype(np.int64) << positions.astype(np.int64)).sum(axis=-1)

    we = np.broadcast_to(exp_fields[:r].astype(np.int64), (batch, r, COLS)).copy()
    ws = np.broadcast_to(signs[:r].astype(np.int64), (batch, r, COLS)).copy()
    if config.exposure in ("exponent_sign", "all"):
        acc_idx = (access0 + np.arange(batch, dtype=np.uint64))[:, None, None]
        mask = flip_grid(
            seed,
            SURFACE_ROWS,
            np.arange(n_rows, dtype=np.uint64)[None, :, None],
            acc_idx,
            np.arange(k_max + 8, dtype=np.uint64)[None, None, :],
            plan.ber,
        )
        mask[:, :, :k_max] &= np.arange(k_max)[None, None, :] < tile.row_k[None, :n_rows, None]
        stats.flips += int(mask.sum())
        hit_blocks = mask.any(axis=2).reshape(batch, -1, rpb).any(axis=2)
        for b_i, block in zip(*np.nonzero(hit_blocks)):
            rows = []
            for j in range(rpb):
                idx = block * rpb + j
                k = int(tile.row_k[idx])
                data_bits = tile.row_data[idx, :k] ^ mask[b_i, idx, :k].astype(np.uint8)
                data = _int_from_bits(data_bits)
                if config.ecc:
                    parity_bits = tile.row_parity[idx] ^ mask[b_i, idx, k_max:].astype(np.uint8)
                    outcome, data = ecc.secded_decode(data, _int_from_bits(parity_bits), k)
                    if outcome.status is ecc.DecodeStatus.CORRECTED_SINGLE:
                        stats.corrected_singles += 1
                    elif outcome.status is ecc.DecodeStatus.DETECTED_DOUBLE:
                        stats.detected_doubles += 1
                rows.append((data, k))
            exps, sgn = ecc.unpack_block(rows, n=tile.n)
            lo = block * tile.n
            hi = min(lo + tile.n, r)
            we[b_i, lo:hi] = exps[None, :]
            ws[b_i, lo:hi] = sgn[: hi - lo]
    return ws, we, wm, stats


def _pack_columns(acc, e_max, any_valid, col_nan, col_inf_neg, col_inf, frac_bits, stats: CallStats):
    """Vectorized normalize/truncate of per-column accumulators to patterns."""
    out = np.zeros(acc.shape, dtype=np.uint16)
    sign = acc < 0
    mag = np.abs(acc)
    finite = any_valid & ~col_nan & ~col_inf & (mag > 0)
    if finite.any():
        m = mag[finite]
        _, e2 = np.frexp(m.astype(np.float64))
        bitlen = e2.astype(np.int64)
        exp_field = e_max[finite] - frac_bits + bitlen - 1 + 15
        drop = bitlen - 1 - 10
        mant = np.where(drop >= 0, m >> np.maximum(drop, 0), m << np.maximum(-drop, 0)) & 0x3FF
        sbit = sign[finite].astype(np.uint16) << 15
        bits = sbit | (exp_field.astype(np.uint16) << 10) | mant.astype(np.uint16)
        over = exp_field >= 31
        bits = np.where(over, sbit | fp16.POS_INF, bits)
        bits = np.where(exp_field <= 0, sbit, bits)
        stats.overflows += int(over.sum())
        out[finite] = bits
    out[col_nan] = fp16.QNAN
    out[col_inf] = np.where(col_inf_neg[col_inf], fp16.NEG_INF, fp16.POS_INF).astype(np.uint16)
    stats.nan_outputs += int(col_nan.sum())
    stats.inf_outputs += int(col_inf.sum())
    return out


def tile_matvec_batch(tile: Tile, inputs, config: ReadPathConfig, access0: int = 0):
    """Multiply a batch of input vectors through the tile.

    inputs: (B, 256) patterns; entries beyond tile.active_rows must be zero.
    Sample i reads at access index access0 + i, so one batch call is
    bit-identical to B sequential single calls.  Returns ((B, 16) uint16
    outputs, CallStats).
    """
    inputs = np.asarray(inputs, dtype=np.uint16)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    b, width = inputs.shape
    if width != ROWS:
        raise ValueError(f"inputs must have {ROWS} entries per vector")
    plan = config.injection
    if plan is not None and plan.mode == "dynamic" and plan.ber > 0 and b > _DYN_CHUNK:
        outs, stats = [], CallStats()
        for lo in range(0, b, _DYN_CHUNK):
            o, s = tile_matvec_batch(tile, inputs[lo : lo + _DYN_CHUNK], config, access0 + lo)
            outs.append(o)
            stats.merge(s)
        return np.concatenate(outs, axis=0), stats

    r, c_active = tile.active_rows, tile.active_cols
    frac = config.frac_bits

    xs, xe, xm = _split_words(inputs[:, :r])
    x_zero = xe == 0
    x_nan = (xe == 31) & (xm != 0)
    x_inf = (xe == 31) & (xm == 0)
    x_valid = (xe > 0) & (xe < 31)

    ws, we, wm, stats = _weight_views(tile, config, b, access0)
    per_sample = ws.ndim == 3

    out = np.zeros((b, COLS), dtype=np.uint16)
    for c in range(c_active):
        if per_sample:
            wsc, wec, wmc = ws[:, :, c], we[:, :, c], wm[:, :, c]
        else:
            wsc, wec, wmc = ws[None, :, c], we[None, :, c], wm[None, :, c]
        w_zero = wec == 0
        w_nan = (wec == 31) & (wmc != 0)
        w_inf = (wec == 31) & (wmc == 0)
        w_valid = (wec > 0) & (wec < 31)

        nan_term = x_nan | w_nan | (x_inf & w_zero) | (w_inf & x_zero)
        inf_term = ((x_inf & ~w_zero & ~w_nan) | (w_inf & ~x_zero & ~x_nan)) & ~nan_term
        term_sign = xs ^ wsc
        pos_inf = (inf_term & (term_sign == 0)).any(axis=1)
        neg_inf = (inf_term & (term_sign == 1)).any(axis=1)
        col_nan = nan_term.any(axis=1) | (pos_inf & neg_inf)
        col_inf = (pos_inf | neg_inf) & ~col_nan

        valid = x_valid & w_valid
        exp_sum = xe + wec - 30
        e_max = np.where(valid, exp_sum, _NEG).max(axis=1)
        any_valid = e_max > _NEG

        shift_raw = (20 - frac) + (e_max[:, None] - exp_sum)
        mant_prod = (1024 + wmc) * (1024 + xm)
        terms = np.where(
            shift_raw >= 0,
            mant_prod >> np.clip(shift_raw, 0, 62),
            mant_prod << np.clip(-shift_raw, 0, 40),
        )
        signed = np.where(valid, np.where(term_sign == 1, -terms, terms), 0)
        acc = signed.sum(axis=1)
        out[:, c] = _pack_columns(acc, e_max, any_valid, col_nan, neg_inf, col_inf, frac, stats)
    return out, stats


def tile_matvec(tile: Tile, inputs, config: ReadPathConfig, access: int = 0):
    """Single-vector matvec; with config.trace the one4n exponent pipeline
    trace is attached to the stats."""
    inputs = np.asarray(inputs, dtype=np.uint16)
    out, stats = tile_matvec_batch(tile, inputs[None, :], config, access)
    if config.trace and tile.mode == "one4n":
        r = tile.active_rows
        _, xe, _ = _split_words(inputs[None, :r])
        _, we, _, _ = _weight_views(tile, config, 1, access)
        if we.ndim == 3:
            we = we[0]
        nb = -(-r // tile.n)
        grouped = we[: nb * tile.n : tile.n]  # one row per block: fields are shared
        stats.trace = exponent_pipeline(
            xe[0] - 15,
            grouped - 15,
            tile.n,
            input_valid=(xe[0] > 0) & (xe[0] < 31),
            weight_valid=(grouped > 0) & (grouped < 31),
            frac_bits=config.frac_bits,
        )
    return out[0], stats


def format_trace(trace: PipelineTrace) -> str:
    """Structured text lines for the optional trace dump."""
    lines = [
        "x_max " + " ".join(str(int(v)) for v in trace.x_max),
        "e_max " + " ".join(str(int(v)) for v in trace.e_max),
    ]
    for g, row in enumerate(np.asarray(trace.group_sums)):
        lines.append(f"group {g} sums " + " ".join(str(int(v)) for v in row))
    return "\n".join(lines)
