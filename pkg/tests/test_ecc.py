import itertools
import time

import numpy as np
import pytest

from fpcim.ecc import (
    DecodeStatus,
    codeword_hex,
    overhead_accounting,
    pack_block,
    row_sizes,
    secded_decode,
    secded_encode,
    secded_parity_count,
    total_protected_bits,
    unpack_block,
)


# ---------------------------------------------------------------------------
# Reference Hamming-position oracle, built before the codec.


def oracle_positions(k):
    """Enumerate classical Hamming slots: parity at powers of two, data at the
    rest in ascending order."""
    out = []
    pos = 1
    while len(out) < k:
        if pos not in (1, 2, 4, 8, 16, 32, 64):
            out.append(pos)
        pos += 1
    return out


def oracle_encode(bits, k):
    """Encode by filling a position-indexed codeword and computing group
    parities directly."""
    data_pos = oracle_positions(k)
    word = {}
    for j in range(k):
        word[data_pos[j]] = bits >> j & 1
    parity = 0
    for i in range(7):
        p = 0
        for pos, v in word.items():
            if pos >> i & 1:
                p ^= v
        parity |= p << i
    total = sum(word.values()) + (parity & 0x7F).bit_count()
    parity |= (total & 1) << 7
    return parity


# ---------------------------------------------------------------------------
# encode


def test_all_zero_data_gives_zero_parity():
    assert secded_encode(0, 104) == 0


def test_single_set_bit_parity_matches_position_oracle():
    # data bit 0 occupies the first non-power slot; its parity must be the
    # position code of that slot plus the overall bit.
    for k in (8, 72, 84, 104):
        for j in (0, 1, k - 1):
            got = secded_encode(1 << j, k)
            assert got == oracle_encode(1 << j, k)
            assert got & 0x7F == oracle_positions(k)[j]


def test_encode_matches_oracle_random():
    rng = np.random.default_rng(31)
    for k in (8, 72, 84, 104, 120):
        for _ in range(50):
            data = int.from_bytes(rng.bytes(15), "little") & ((1 << k) - 1)
            assert secded_encode(data, k) == oracle_encode(data, k)


def test_encode_rejects_oversized():
    with pytest.raises(ValueError):
        secded_encode(0, 121)


# ---------------------------------------------------------------------------
# decode


def test_decode_clean_roundtrip():
    rng = np.random.default_rng(17)
    for _ in range(10_000):
        data = int.from_bytes(rng.bytes(13), "little")
        parity = secded_encode(data, 104)
        outcome, out = secded_decode(data, parity, 104)
        assert outcome.status is DecodeStatus.NO_ERROR
        assert out == data


def test_every_single_flip_corrected_exhaustive_k104():
    rng = np.random.default_rng(23)
    data = int.from_bytes(rng.bytes(13), "little")
    parity = secded_encode(data, 104)
    for flip in range(112):
        d, p = data, parity
        if flip < 104:
            d ^= 1 << flip
        else:
            p ^= 1 << (flip - 104)
        outcome, out = secded_decode(d, p, 104)
        assert outcome.status is DecodeStatus.CORRECTED_SINGLE, flip
        assert out == data, flip


def test_every_double_flip_detected_exhaustive_k104():
    rng = np.random.default_rng(29)
    data = int.from_bytes(rng.bytes(13), "little")
    parity = secded_encode(data, 104)
    n_checked = 0
    for f1, f2 in itertools.combinations(range(112), 2):
        d, p = data, parity
        for flip in (f1, f2):
            if flip < 104:
                d ^= 1 << flip
            else:
                p ^= 1 << (flip - 104)
        outcome, out = secded_decode(d, p, 104)
        assert outcome.status is DecodeStatus.DETECTED_DOUBLE, (f1, f2)
        assert out == d  # data returned unmodified
        n_checked += 1
    assert n_checked == 6216


def test_single_flip_corrected_all_k():
    rng = np.random.default_rng(37)
    for k in (8, 72, 84):
        data = int.from_bytes(rng.bytes(13), "little") & ((1 << k) - 1)
        parity = secded_encode(data, k)
        for flip in range(k + 8):
            d, p = data, parity
            if flip < k:
                d ^= 1 << flip
            else:
                p ^= 1 << (flip - k)
            outcome, out = secded_decode(d, p, k)
            assert outcome.status is DecodeStatus.CORRECTED_SINGLE
            assert out == data


# ---------------------------------------------------------------------------
# block packing


def test_pack_block_n8_shapes():
    rows = pack_block(np.zeros(16, np.uint8), np.zeros((8, 16), np.uint8), n=8)
    assert [size for _, size in rows] == [104, 104]
    assert sum(size for _, size in rows) == 208
    assert all(data == 0 for data, _ in rows)


def test_total_protected_bits():
    assert total_protected_bits(8) == 208
    assert total_protected_bits(4) == 144
    assert total_protected_bits(16) == 336


def test_row_sizes():
    assert row_sizes(208) == [104, 104]
    assert row_sizes(144) == [72, 72]
    assert row_sizes(336) == [84, 84, 84, 84]
    assert row_sizes(96) == [96]


def test_pack_layout_n8():
    # exponents go first, column-major, MSB-first; signs follow row-major
    exps = np.arange(16, dtype=np.uint8)
    signs = np.zeros((8, 16), np.uint8)
    rows = pack_block(exps, signs, n=8)
    data, size = rows[0]
    # weight 1 has exponent 1 -> its LSB is stream bit 9
    assert data >> 9 & 1 == 1
    # weight 0 exponent 0 -> stream bits 0..4 clear
    assert data & 0x1F == 0
    # sign row 0 col 0 flips stream bit 80
    signs[0, 0] = 1
    rows2 = pack_block(exps, signs, n=8)
    assert rows2[0][0] ^ data == 1 << 80
    # sign row 1 col 8 is stream bit 80+24 = 104 -> first bit of row B
    signs[:] = 0
    signs[1, 8] = 1
    rows3 = pack_block(exps, signs, n=8)
    assert rows3[0][0] == data  # row A holds only the exponents again
    assert rows3[1][0] == 1


@pytest.mark.parametrize("n", [1, 4, 8, 16])
def test_pack_unpack_roundtrip(n):
    rng = np.random.default_rng(n)
    for _ in range(100):
        exps = rng.integers(0, 32, 16).astype(np.uint8)
        signs = rng.integers(0, 2, (n, 16)).astype(np.uint8)
        rows = pack_block(exps, signs, n=n)
        e2, s2 = unpack_block(rows, n=n)
        assert np.array_equal(e2, exps)
        assert np.array_equal(s2, signs)


def test_encode_decode_roundtrip_through_rows():
    rng = np.random.default_rng(41)
    for _ in range(200):
        exps = rng.integers(0, 32, 16).astype(np.uint8)
        signs = rng.integers(0, 2, (8, 16)).astype(np.uint8)
        rows = pack_block(exps, signs, n=8)
        decoded = []
        for data, size in rows:
            parity = secded_encode(data, size)
            outcome, out = secded_decode(data, parity, size)
            assert outcome.status is DecodeStatus.NO_ERROR
            decoded.append((out, size))
        e2, s2 = unpack_block(decoded, n=8)
        assert np.array_equal(e2, exps) and np.array_equal(s2, signs)


def test_codeword_hex_golden():
    # frozen rendering contract: stream order, MSB-first, data then parity
    data = 0b1011  # stream bits 0,1,3 set
    k = 8
    parity = secded_encode(data, k)
    dump = codeword_hex(data, k, parity)
    assert dump == format(int("11010000", 2), "02x") + format(
        int("".join(str(parity >> j & 1) for j in range(8)), 2), "02x"
    )
    exps = np.arange(16, dtype=np.uint8)
    signs = np.zeros((8, 16), np.uint8)
    (data, size), _ = pack_block(exps, signs, n=8)
    # data part hand-checked: exponents 0..15 MSB-first then 24 zero signs
    assert codeword_hex(data, size, secded_encode(data, size)) == "00443214c74254b635cf00000044"


# ---------------------------------------------------------------------------
# overhead accounting (quantitative targets)


def test_parity_count_formula():
    assert secded_parity_count(6) == 5
    assert secded_parity_count(10) == 5
    assert secded_parity_count(96) == 8
    assert secded_parity_count(160) == 9


def test_overhead_accounting_reference_numbers():
    assert overhead_accounting("traditional_full") == (40960, 20480)
    assert overhead_accounting("traditional_exp_sign") == (20480, 20480)
    assert overhead_accounting("row_based_full") == (4352, 20480)
    assert overhead_accounting("one4n", n=8) == (512, 2560)


def test_overhead_one4n_other_n():
    # n=4: 64 blocks x 2 rows x 8 bits; n=16: 16 blocks x 4 rows x 8 bits
    assert overhead_accounting("one4n", n=4) == (64 * 2 * 8, 64 * 80)
    assert overhead_accounting("one4n", n=16) == (16 * 4 * 8, 16 * 80)


def test_overhead_one4n_remainder_block():
    # 256 = 25*10 + 6: the leftover 6 rows form one extra block
    rep = overhead_accounting("one4n", n=10)
    assert rep.exponent_sram_cells == 26 * 80
    assert rep.redundant_bits == 25 * len(row_sizes(240)) * 8 + len(row_sizes(176)) * 8


def test_overhead_unknown_scheme():
    with pytest.raises(ValueError):
        overhead_accounting("bch")


def test_exhaustive_sweeps_fast_enough():
    start = time.perf_counter()
    data = 0x5A5A5A5A5A5A5A5A5A5A5A5A5 & ((1 << 104) - 1)
    parity = secded_encode(data, 104)
    for flip in range(112):
        d, p = (data ^ (1 << flip), parity) if flip < 104 else (data, parity ^ (1 << (flip - 104)))
        secded_decode(d, p, 104)
    for f1, f2 in itertools.combinations(range(112), 2):
        d, p = data, parity
        for flip in (f1, f2):
            if flip < 104:
                d ^= 1 << flip
            else:
                p ^= 1 << (flip - 104)
        secded_decode(d, p, 104)
    assert time.perf_counter() - start < 5.0
