import numpy as np
import pytest

from turboce.ldpc import (
    decode_min_sum,
    default_code_path,
    encode,
    extract_info,
    load_code,
    syndrome,
)

# toy 3x6 parity matrix with all column weights >= 2 and full rank
TOY_H = np.array(
    [
        [1, 1, 0, 1, 1, 1],
        [1, 0, 1, 1, 1, 0],
        [0, 1, 1, 1, 0, 1],
    ],
    dtype=np.uint8,
)

TOY_ALIST = """6 3
3 5
2 2 2 3 2 2
5 4 4
1 2 0
1 3 0
2 3 0
1 2 3
1 2 0
1 3 0
1 2 4 5 6
1 3 4 5 0
2 3 4 6 0
"""


@pytest.fixture
def toy_code(tmp_path):
    path = tmp_path / "toy.alist"
    path.write_text(TOY_ALIST)
    return load_code(path)


def toy_codewords():
    """All 8 codewords of the toy code by brute force over the 6-bit space."""
    words = []
    for w in range(64):
        bits = np.array([(w >> (5 - i)) & 1 for i in range(6)], dtype=np.uint8)
        if not ((TOY_H @ bits) % 2).any():
            words.append(bits)
    return np.array(words)


class TestLoadCode:
    def test_toy_roundtrip(self, toy_code):
        assert toy_code.n == 6 and toy_code.m == 3 and toy_code.k == 3
        rng = np.random.default_rng(0)
        for _ in range(20):
            info = rng.integers(0, 2, size=3).astype(np.uint8)
            cw = encode(toy_code, info)
            # independent dense GF(2) oracle
            assert not ((TOY_H @ cw) % 2).any()
            assert not syndrome(toy_code, cw).any()
            np.testing.assert_array_equal(extract_info(toy_code, cw), info)

    def test_shipped_code_dimensions(self):
        code = load_code(default_code_path())
        assert code.m == 144 and code.n == 288 and code.k == 144
        assert {len(a) for a in code.check_adj} == {6}
        assert {len(a) for a in code.var_adj} == {3}

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "broken.alist"
        path.write_text("\n".join(TOY_ALIST.splitlines()[:6]))
        with pytest.raises(ValueError, match="unexpected end of alist"):
            load_code(path)

    def test_non_integer_token(self, tmp_path):
        path = tmp_path / "bad.alist"
        path.write_text(TOY_ALIST.replace("5 4 4", "5 x 4"))
        with pytest.raises(ValueError, match="non-integer"):
            load_code(path)

    def test_inconsistent_lists(self, tmp_path):
        # swap one row entry so row and column lists disagree
        lines = TOY_ALIST.splitlines()
        lines[10] = "1 3 4 5 6"
        path = tmp_path / "inconsistent.alist"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="disagree|degree mismatch"):
            load_code(path)

    def test_rank_deficient_rejected(self, tmp_path):
        # duplicate check rows: rank 2 < m = 3
        alist = """6 3
3 4
2 2 2 2 1 1
4 4 4
1 2 0
1 2 0
1 2 0
1 2 0
1 0 0
2 0 0
1 2 3 4
1 2 3 4
1 2 3 5
"""
        path = tmp_path / "rankdef.alist"
        path.write_text(alist)
        with pytest.raises(ValueError):
            load_code(path)

    def test_encode_length_mismatch(self, toy_code):
        with pytest.raises(ValueError, match="expected 3 info bits"):
            encode(toy_code, np.zeros(5, dtype=np.uint8))

    def test_all_zero_info_gives_all_zero_codeword(self, toy_code):
        cw = encode(toy_code, np.zeros(3, dtype=np.uint8))
        assert not cw.any()

    def test_encoding_deterministic(self, toy_code):
        info = np.array([1, 0, 1], dtype=np.uint8)
        np.testing.assert_array_equal(encode(toy_code, info), encode(toy_code, info))

    def test_shipped_encoder_syndrome_zero(self):
        code = load_code(default_code_path())
        rng = np.random.default_rng(1)
        for _ in range(10):
            cw = encode(code, rng.integers(0, 2, size=code.k).astype(np.uint8))
            assert not syndrome(code, cw).any()


class TestDecodeMinSum:
    def test_noiseless_all_zero(self, toy_code):
        llr = np.full(6, 12.0)
        res = decode_min_sum(toy_code, llr)
        assert res.converged
        assert res.iterations_used == 1
        assert not res.hard_bits.any()

    def test_single_flip_corrected(self, toy_code):
        words = toy_codewords()
        checked = 0
        for cw in words:
            for flip in range(6):
                rx = cw.copy()
                rx[flip] ^= 1
                # exhaustive ML oracle: the true codeword must be the unique
                # nearest one, otherwise correction is not guaranteed
                dists = np.sum(words != rx, axis=1)
                if np.sum(dists == dists.min()) != 1 or dists.min() != 1:
                    continue
                llr = np.where(rx == 0, 6.0, -6.0)
                res = decode_min_sum(toy_code, llr, max_iters=25)
                assert res.converged
                np.testing.assert_array_equal(res.hard_bits, cw)
                checked += 1
        assert checked > 0

    def test_all_zero_llrs_fixed_point(self, toy_code):
        res = decode_min_sum(toy_code, np.zeros(6))
        np.testing.assert_array_equal(res.posterior_llrs, np.zeros(6))
        assert not res.converged
        assert not res.hard_bits.any()

    def test_sign_symmetry(self):
        code = load_code(default_code_path())
        rng = np.random.default_rng(3)
        llr = rng.normal(size=code.n) * 2.0
        a = decode_min_sum(code, llr, max_iters=5)
        b = decode_min_sum(code, -llr, max_iters=5)
        np.testing.assert_array_equal(a.posterior_llrs, -b.posterior_llrs)

    def test_codeword_fixed_point(self, toy_code):
        rng = np.random.default_rng(4)
        for cw in toy_codewords():
            mag = rng.uniform(6.0, 10.0, size=6)
            llr = np.where(cw == 0, mag, -mag)
            for iters in (1, 5, 25):
                res = decode_min_sum(toy_code, llr, max_iters=iters)
                np.testing.assert_array_equal(res.hard_bits, cw)
                assert res.converged

    def test_parameter_validation(self, toy_code):
        with pytest.raises(ValueError, match="max_iters"):
            decode_min_sum(toy_code, np.zeros(6), max_iters=0)
        with pytest.raises(ValueError, match="scale"):
            decode_min_sum(toy_code, np.zeros(6), scale=0.0)
        with pytest.raises(ValueError, match="channel LLRs"):
            decode_min_sum(toy_code, np.zeros(5))

    def test_converged_implies_zero_syndrome(self):
        code = load_code(default_code_path())
        rng = np.random.default_rng(5)
        for _ in range(20):
            llr = rng.normal(size=code.n) * 3.0
            res = decode_min_sum(code, llr, max_iters=10)
            if res.converged:
                assert not syndrome(code, res.hard_bits).any()
            assert np.array_equal(res.hard_bits, (res.posterior_llrs < 0))


def wilson_interval_direct(errors, trials, z=1.959963984540054):
    p = errors / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return center - half, center + half


class TestFerMonotonic:
    def test_fer_drops_with_snr(self):
        # all-zero codeword over a BPSK AWGN channel (bit 0 -> +1),
        # LLR = 2 y / sigma^2; two points 2 dB apart
        code = load_code(default_code_path())
        rng = np.random.default_rng(6)
        trials = 2000
        fers = []
        for snr_db in (1.0, 3.0):
            sigma2 = 10 ** (-snr_db / 10.0)
            errors = 0
            for _ in range(trials):
                y = 1.0 + np.sqrt(sigma2) * rng.standard_normal(code.n)
                res = decode_min_sum(code, 2.0 * y / sigma2)
                if res.hard_bits.any():
                    errors += 1
            fers.append(errors)
        lo_low, hi_low = wilson_interval_direct(fers[0], trials)
        lo_high, hi_high = wilson_interval_direct(fers[1], trials)
        assert fers[1] < fers[0]
        assert hi_high < lo_low, (fers, (lo_low, hi_low), (lo_high, hi_high))
