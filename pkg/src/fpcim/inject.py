"""Deterministic BER-driven bit-flip injection.

Every flip decision is a pure function of (master_seed, surface, word_index,
access_index, bit_index) through a splitmix64-style hash, so results are
independent of evaluation order, reproducible across platforms, and safe to
sample concurrently.  Static mode corrupts stored words once; dynamic mode
produces a fresh transient corruption per read access and never touches the
stored value.
"""

from __future__ import annotations

import enum
from typing import NamedTuple, Sequence

import numpy as np

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB

# key-space tags so word-level and codeword-row surfaces never collide
SURFACE_WORDS = 0
SURFACE_ROWS = 1


class FieldMask(enum.Enum):
    """Which FP16 field of a stored word is exposed to flips."""

    SIGN = "sign"
    EXPONENT = "exponent"
    MANTISSA = "mantissa"
    FULL = "full"

    @property
    def bits(self) -> int:
        return {
            FieldMask.SIGN: 0x8000,
            FieldMask.EXPONENT: 0x7C00,
            FieldMask.MANTISSA: 0x03FF,
            FieldMask.FULL: 0xFFFF,
        }[self]

    @property
    def positions(self) -> tuple[int, ...]:
        m = self.bits
        return tuple(i for i in range(16) if m >> i & 1)

    @classmethod
    def parse(cls, name: str) -> "FieldMask":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown field mask {name!r}; expected sign/exponent/mantissa/full") from None


class InjectionPlan(NamedTuple):
    mode: str  # "static" | "dynamic"
    ber: float  # flip probability per bit per exposure
    mask: FieldMask = FieldMask.FULL
    master_seed: int = 0

    def validate(self):
        if self.mode not in ("static", "dynamic"):
            raise ValueError(f"mode must be static or dynamic, got {self.mode!r}")
        if not 0.0 <= self.ber <= 1.0:
            raise ValueError(f"ber must be in [0, 1], got {self.ber}")
        return self


class FlipRecord(NamedTuple):
    word_index: int
    bit_index: int
    access_index: int  # -1 for static injection


def _mix(z: int) -> int:
    z &= _M64
    z ^= z >> 30
    z = (z * _MUL1) & _M64
    z ^= z >> 27
    z = (z * _MUL2) & _M64
    z ^= z >> 31
    return z


def hash_key(seed: int, *parts: int) -> int:
    """Counter-based 64-bit hash of a key tuple (scalar path)."""
    h = _mix((seed + _GOLDEN) & _M64)
    for p in parts:
        h = _mix((h + _GOLDEN + (p & _M64)) & _M64)
    return h


def derive_seed(master_seed: int, *indices: int) -> int:
    """Per-run / per-job seed derivation; same stream family as the sampler."""
    return hash_key(master_seed, *indices)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MUL1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MUL2)
    z ^= z >> np.uint64(31)
    return z


def hash_grid(seed: int, *parts) -> np.ndarray:
    """Vectorized hash_key over broadcastable integer arrays."""
    h = np.broadcast_arrays(*[np.asarray(p, dtype=np.uint64) for p in parts])
    out = np.full(h[0].shape, _mix((seed + _GOLDEN) & _M64), dtype=np.uint64)
    g = np.uint64(_GOLDEN)
    for p in h:
        out = _mix_array(out + g + p)
    return out


def _threshold(ber: float) -> int:
    # probability granularity is 2^-64
    return min(int(ber * 2.0**64), 1 << 64)


def flip_grid(seed: int, surface: int, word_indices, access_indices, bit_indices, ber: float) -> np.ndarray:
    """Bernoulli(ber) flip decisions over the broadcast key grid."""
    t = _threshold(ber)
    if t == 0:
        shape = np.broadcast_shapes(
            np.shape(word_indices) or (1,), np.shape(access_indices) or (1,), np.shape(bit_indices) or (1,)
        )
        return np.zeros(shape, dtype=bool)
    if t >= 1 << 64:
        shape = np.broadcast_shapes(
            np.shape(word_indices) or (1,), np.shape(access_indices) or (1,), np.shape(bit_indices) or (1,)
        )
        return np.ones(shape, dtype=bool)
    h = hash_grid(seed, surface, word_indices, access_indices, bit_indices)
    return h < np.uint64(t)


def inject_static(words, plan: InjectionPlan):
    """One-shot corruption of stored words.

    Each maskable bit of each word flips independently with probability
    plan.ber.  Returns (corrupted uint16 array, [FlipRecord ...]); the log is
    ordered by (word_index, bit_index) and is identical on every rerun.
    """
    plan.validate()
    if plan.mode != "static":
        raise ValueError("inject_static requires a static plan")
    words = np.asarray(words, dtype=np.uint16)
    positions = np.array(plan.mask.positions, dtype=np.uint64)
    idx = np.arange(words.size, dtype=np.uint64)
    flips = flip_grid(plan.master_seed, SURFACE_WORDS, idx[:, None], 0, positions[None, :], plan.ber)
    xor = (flips.astype(np.uint16) << positions.astype(np.uint16)[None, :]).sum(axis=1, dtype=np.uint32)
    out = (words.reshape(-1) ^ xor.astype(np.uint16)).reshape(words.shape)
    wi, bi = np.nonzero(flips)
    log = [FlipRecord(int(w), int(positions[b]), -1) for w, b in zip(wi, bi)]
    return out, log


def sample_dynamic(word: int, word_index: int, access_index: int, plan: InjectionPlan) -> int:
    """Transiently corrupted copy of one stored word for one read access."""
    plan.validate()
    if plan.mode != "dynamic":
        raise ValueError("sample_dynamic requires a dynamic plan")
    t = _threshold(plan.ber)
    out = word
    for b in plan.mask.positions:
        if hash_key(plan.master_seed, SURFACE_WORDS, word_index, access_index, b) < t:
            out ^= 1 << b
    return out


def sample_dynamic_words(words, word_indices, access_indices, plan: InjectionPlan):
    """Vector sample_dynamic: words (...,) with matching word/access indices.

    Returns (corrupted words, flip count).  Stored input is left untouched.
    """
    plan.validate()
    words = np.asarray(words, dtype=np.uint16)
    positions = np.array(plan.mask.positions, dtype=np.uint64)
    flips = flip_grid(
        plan.master_seed,
        SURFACE_WORDS,
        np.asarray(word_indices, dtype=np.uint64)[..., None],
        np.asarray(access_indices, dtype=np.uint64)[..., None],
        positions,
        plan.ber,
    )
    xor = (flips.astype(np.uint32) << positions.astype(np.uint32)).sum(axis=-1, dtype=np.uint32)
    return words ^ xor.astype(np.uint16), int(flips.sum())


def expected_flips(ber: float, exposed_bits: int) -> float:
    """Mean flip count for a given exposure; harness sanity metric."""
    return ber * exposed_bits


def write_flip_log_csv(records: Sequence[FlipRecord], f, run: int = 0):
    """CSV columns: run,word_index,bit_index,access_index (-1 for static)."""
    f.write("run,word_index,bit_index,access_index\n")
    for r in records:
        f.write(f"{run},{r.word_index},{r.bit_index},{r.access_index}\n")
