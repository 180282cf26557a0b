import numpy as np
import pytest

from fpcim import fp16
from fpcim.align import (
    DEGENERATE_E,
    AlignmentSpec,
    align_model,
    align_tensor,
    is_aligned,
    rescale_block,
    select_exponent,
)


BLOCK = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]


def eq5(w, wmin, wmax, ll, ul):
    # direct evaluation of the rescale formula, the oracle for this module
    return (w - wmin) / (wmax - wmin) * (ul - ll) + ll


def test_select_exponent_example():
    spec = select_exponent(BLOCK, index=2)
    # sorted exponents: [2, 1, 1, 1, 1, 0, 0, -1]
    assert spec.e_shared == 1
    assert spec.ll == 2.0
    assert spec.ul == 3.998046875
    assert spec.ul / spec.ll == 2 - 2**-10


def test_select_exponent_identical_members():
    spec = select_exponent([1.0] * 8, index=3)
    assert spec.e_shared == 0 and spec.ll == 1.0


def test_select_exponent_index_one_is_max():
    spec = select_exponent(BLOCK, index=1)
    assert spec.e_shared == 2


def test_select_exponent_index_clamped():
    spec = select_exponent([2.0, 0.0, 0.0, 0.0], index=4)
    assert spec.e_shared == 1  # only one nonzero exponent, rank clamps to it


def test_select_exponent_all_zero_degenerate():
    spec = select_exponent([0.0] * 8, index=2)
    assert spec.degenerate and spec.e_shared == DEGENERATE_E


def test_rescale_endpoints_and_interior():
    spec = select_exponent(BLOCK, index=2)
    out = rescale_block(BLOCK, spec)
    assert out[0] == 2.0  # W_min -> LL
    assert out[-1] == 3.998046875  # W_max -> UL
    # interior point, checked against the formula before quantization
    y = eq5(2.0, 0.5, 4.0, spec.ll, spec.ul)
    assert abs(y - 2.8563058035714286) < 1e-12
    # quantized onto the e=1 mantissa grid within half a step
    assert abs(out[3] - y) <= 2.0 ** (1 - 10) / 2


def test_rescale_fixed_points_identity():
    # a block already spanning [LL, UL] rescales to itself (mantissa grid)
    spec = AlignmentSpec.for_exponent(1, 1)
    grid = np.array([2.0, 2.5, 3.0, 3.998046875])
    out = rescale_block(grid, AlignmentSpec.for_exponent(1, 1))
    # W_min=LL and W_max=UL make the affine map the identity
    assert np.array_equal(out, grid)
    assert spec.ll == 2.0


def test_rescale_mixed_signs():
    vals = np.array([-3.0, -2.0, 1.0, 2.0])
    spec = select_exponent(vals, index=2)  # magnitude exponents [1, 1, 1, 0] -> 1
    out = rescale_block(vals, spec)
    assert spec.e_shared == 1
    assert out[0] == -spec.ul and out[1] == -spec.ll  # negatives mirror
    assert out[2] == spec.ll and out[3] == spec.ul
    assert np.all((np.abs(out) >= spec.ll) & (np.abs(out) <= spec.ul))


def test_rescale_degenerate_single_sign_clamps():
    spec = AlignmentSpec.for_exponent(0, 1)  # [1, 1.999]
    out = rescale_block([5.0, 5.0, -0.25], spec)
    assert out[0] == out[1] == spec.ul  # clamped down into range
    assert out[2] == -spec.ll  # clamped up in magnitude


def test_rescale_zero_policy():
    spec = AlignmentSpec.for_exponent(0, 1)
    vals = np.array([0.0, -0.0, 1.5])
    out = rescale_block(vals, spec, zeros_to_limit=True)
    assert out[0] == spec.ll  # exact zero takes +LL
    assert out[1] == -spec.ll  # negative zero keeps its sign
    # the placed limit joins the positive subset, so 1.5 spans up to UL
    assert out[2] == spec.ul
    out2 = rescale_block(vals, spec, zeros_to_limit=False)
    assert out2[0] == 0.0 and out2[1] == 0.0
    # zero handling keeps the transform a fixed point
    again = rescale_block(out, spec, zeros_to_limit=True)
    assert np.array_equal(again, out)


def test_rescale_monotone_within_sign():
    rng = np.random.default_rng(8)
    for _ in range(200):
        vals = rng.normal(0, 1, 8)
        spec = select_exponent(vals, index=2)
        if spec.degenerate:
            continue
        out = rescale_block(vals, spec)
        for sel in (vals > 0, vals < 0):
            if sel.sum() < 2:
                continue
            order = np.argsort(vals[sel])
            assert np.all(np.diff(out[sel][order]) >= 0)


def test_align_tensor_block_count_and_invariant():
    rng = np.random.default_rng(640)
    w = rng.normal(0, 0.5, (16, 40))  # 640 weights, 2 groups x 40 columns
    aligned, table = align_tensor(w, n=8, index=2)
    assert table.shape == (2, 40)
    assert is_aligned(aligned, 8, table)
    # exponent-field singleton per block
    bits = fp16.encode_array(aligned)
    fields = (bits >> 10) & 0x1F
    for g in range(2):
        for c in range(40):
            f = np.unique(fields[g * 8 : (g + 1) * 8, c])
            assert f.size == 1 and f[0] == table[g, c] + 15


def test_align_remainder_block():
    rng = np.random.default_rng(5)
    w = rng.normal(0, 1, (13, 3))  # 8 + 5 remainder
    aligned, table = align_tensor(w, n=8, index=2)
    assert table.shape == (2, 3)
    assert is_aligned(aligned, 8, table)


def test_align_idempotent():
    rng = np.random.default_rng(77)
    w = rng.normal(0, 0.3, (24, 10))
    a1, t1 = align_tensor(w, n=8, index=2)
    a2, t2 = align_tensor(a1, n=8, index=2)
    assert np.array_equal(a1, a2)
    assert np.array_equal(t1, t2)


def test_align_n1_keeps_own_exponents():
    rng = np.random.default_rng(11)
    w = rng.normal(0, 1, (8, 4))
    aligned, table = align_tensor(w, n=1, index=1)
    bits_before = fp16.encode_array(w)
    bits_after = fp16.encode_array(aligned)
    assert np.array_equal((bits_before >> 10) & 0x1F, (bits_after >> 10) & 0x1F)


def test_align_model_multi_tensor():
    rng = np.random.default_rng(21)
    tensors = [rng.normal(0, 1, (16, 8)), rng.normal(0, 1, (8, 4))]
    aligned, tables = align_model(tensors, n=4, index=2)
    assert len(aligned) == 2 and len(tables) == 2
    for a, t in zip(aligned, tables):
        assert is_aligned(a, 4, t)


def test_is_aligned_detects_perturbation():
    rng = np.random.default_rng(9)
    w = rng.normal(0, 1, (16, 4))
    aligned, table = align_tensor(w, n=8, index=2)
    assert is_aligned(aligned, 8, table)
    bad = aligned.copy()
    bad[0, 0] *= 4.0  # exponent moves by 2
    assert not is_aligned(bad, 8, table)


def test_is_aligned_agrees_with_bruteforce():
    rng = np.random.default_rng(13)
    for _ in range(50):
        w = rng.normal(0, 1, (16, 4))
        aligned, table = align_tensor(w, n=8, index=int(rng.integers(1, 5)))
        # brute force: every nonzero member's fp16 exponent field per block
        bits = fp16.encode_array(aligned)
        fields = (bits >> 10) & 0x1F
        ok = True
        for g in range(2):
            for c in range(4):
                f = fields[g * 8 : (g + 1) * 8, c]
                nz = f[f > 0]
                want = table[g, c] + 15 if table[g, c] != DEGENERATE_E else None
                if want is None:
                    ok &= nz.size == 0
                else:
                    ok &= nz.size > 0 and bool(np.all(nz == want))
        assert is_aligned(aligned, 8, table) == ok
        assert ok


def test_boundedness_and_quantization_error():
    rng = np.random.default_rng(30)
    for _ in range(300):
        vals = rng.normal(0, rng.uniform(0.01, 4.0), 8)
        spec = select_exponent(vals, index=2)
        if spec.degenerate:
            continue
        pos = vals[vals > 0]
        if pos.size:
            raw = eq5(pos, pos.min(), pos.max(), spec.ll, spec.ul) if pos.size > 1 else np.clip(pos, spec.ll, spec.ul)
            assert np.all((raw >= spec.ll) & (raw <= spec.ul))
        out = rescale_block(vals, spec)
        mags = np.abs(out[out != 0])
        assert np.all((mags >= spec.ll) & (mags <= spec.ul))
        # every output sits exactly on the shared-exponent mantissa grid
        mant = mags * 2.0**-spec.e_shared * 1024 - 1024
        assert np.allclose(mant, np.round(mant), atol=0)


def test_invalid_index():
    with pytest.raises(ValueError):
        select_exponent(BLOCK, index=0)
