import numpy as np
import pytest

from vlbb84.extract import extract_key, secure_length, toeplitz_extract
from vlbb84.link_model import SecurityParams
from vlbb84.numerics import output_length_fixed_point

SEC = SecurityParams()


def dense_toeplitz(input_bits, seed_bits, m):
    """GF(2) oracle: materialize T with T[i, j] = seed[m-1-i+j]."""
    l = len(input_bits)
    T = np.empty((m, l), dtype=np.uint8)
    for i in range(m):
        T[i, :] = seed_bits[m - 1 - i:m - 1 - i + l]
    return (T @ np.asarray(input_bits, dtype=np.uint8)) % 2


class TestSecureLength:
    def test_zero_above_exact_root(self):
        # Just above the exact zero of the rate factor (~0.09122) the
        # secure length vanishes for every l.
        for l in (100, 3066, 10 ** 6):
            k, m = secure_length(l, 0.0913, SEC)
            assert k <= 0.0
            assert m == 0

    def test_noiseless_passthrough(self):
        k, m = secure_length(5000, 0.0, SEC)
        assert k == 5000.0
        assert m == output_length_fixed_point(5000.0, SEC.eps_max)

    def test_reference_point(self):
        k, m = secure_length(3066, 0.05, SEC)
        assert k == pytest.approx(1072.8, abs=0.2)
        assert abs(m - 1000) <= 1

    def test_fixed_point_holds(self):
        import math
        for l in (500, 2000, 10000):
            k, m = secure_length(l, 0.03, SEC)
            if m > 0:
                assert m == math.floor(k - 6 - 4 * math.log2(m / SEC.eps_max))

    def test_validation(self):
        with pytest.raises(ValueError):
            secure_length(-1, 0.05, SEC)
        with pytest.raises(ValueError):
            secure_length(100, 0.6, SEC)


class TestToeplitzExtract:
    def test_empty_output(self):
        out = toeplitz_extract(np.ones(8, dtype=np.uint8),
                               np.zeros(0, dtype=np.uint8), 0)
        assert len(out) == 0

    def test_zero_seed_is_zero_map(self):
        rng = np.random.default_rng(0)
        x = rng.integers(0, 2, 32, dtype=np.uint8)
        out = toeplitz_extract(x, np.zeros(32 + 8 - 1, dtype=np.uint8), 8)
        assert not out.any()

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            l = int(rng.integers(1, 65))
            m = int(rng.integers(1, l + 1))
            x = rng.integers(0, 2, l, dtype=np.uint8)
            seed = rng.integers(0, 2, l + m - 1, dtype=np.uint8)
            assert np.array_equal(toeplitz_extract(x, seed, m),
                                  dense_toeplitz(x, seed, m))

    def test_linearity(self):
        rng = np.random.default_rng(2)
        l, m = 128, 64
        seed = rng.integers(0, 2, l + m - 1, dtype=np.uint8)
        for _ in range(50):
            x = rng.integers(0, 2, l, dtype=np.uint8)
            y = rng.integers(0, 2, l, dtype=np.uint8)
            lhs = toeplitz_extract(x ^ y, seed, m)
            rhs = toeplitz_extract(x, seed, m) ^ toeplitz_extract(y, seed, m)
            assert np.array_equal(lhs, rhs)

    def test_fft_path_matches_direct(self):
        # l*m above the direct-convolution limit exercises the FFT branch.
        rng = np.random.default_rng(3)
        l, m = 3000, 2500
        x = rng.integers(0, 2, l, dtype=np.uint8)
        seed = rng.integers(0, 2, l + m - 1, dtype=np.uint8)
        fft_out = toeplitz_extract(x, seed, m)
        conv = np.convolve(seed.astype(np.int64), x[::-1].astype(np.int64))
        direct = (conv[l - 1:l + m - 1][::-1] % 2).astype(np.uint8)
        assert np.array_equal(fft_out, direct)

    def test_output_bit_balance(self):
        # 2-universality smoke test: over many random seeds each output
        # bit is 1 about half the time.
        rng = np.random.default_rng(4)
        l, m = 64, 16
        x = rng.integers(0, 2, l, dtype=np.uint8)
        counts = np.zeros(m)
        runs = 1000
        for _ in range(runs):
            seed = rng.integers(0, 2, l + m - 1, dtype=np.uint8)
            counts += toeplitz_extract(x, seed, m)
        freq = counts / runs
        assert np.all(np.abs(freq - 0.5) <= 0.05)

    def test_dimension_mismatch(self):
        x = np.ones(16, dtype=np.uint8)
        with pytest.raises(ValueError):
            toeplitz_extract(x, np.ones(10, dtype=np.uint8), 4)
        with pytest.raises(ValueError):
            toeplitz_extract(x, np.ones(40, dtype=np.uint8), 17)


class TestExtractKey:
    def test_round_trip_sizing(self):
        rng = np.random.default_rng(5)
        x = rng.integers(0, 2, 3066, dtype=np.uint8)
        res = extract_key(x, 0.05, SEC, np.random.default_rng(6))
        assert len(res.final_key) == secure_length(3066, 0.05, SEC)[1]
        assert len(res.seed_bits) == 3066 + len(res.final_key) - 1

    def test_infeasible_rate_gives_empty(self):
        x = np.ones(100, dtype=np.uint8)
        res = extract_key(x, 0.2, SEC, np.random.default_rng(7))
        assert len(res.final_key) == 0
        assert res.k_bound < 0
