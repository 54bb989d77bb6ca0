import numpy as np
import pytest

from quditcal.dynamics import DeviceParams, NOMINAL_PARAMS
from quditcal.noise import (
    STREAM_DEVICE,
    STREAM_ESTIMATION,
    DeviceOffsets,
    NoiseConfig,
    apply_offsets,
    fixed_single_device,
    make_stream,
    offset_histogram,
    sample_offsets,
    standard_normal,
)


class TestStreams:
    def test_same_key_same_sequence(self):
        a = make_stream(7, STREAM_DEVICE).random(100)
        b = make_stream(7, STREAM_DEVICE).random(100)
        assert np.array_equal(a, b)

    def test_distinct_ids_distinct_sequences(self):
        a = make_stream(7, STREAM_DEVICE).random(100)
        b = make_stream(7, STREAM_ESTIMATION).random(100)
        assert not np.array_equal(a, b)

    def test_normals_finite_and_standard(self):
        rng = make_stream(3, 0)
        z = standard_normal(rng, 200_000)
        assert np.all(np.isfinite(z))
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01


class TestSampling:
    def test_zero_widths(self):
        cfg = NoiseConfig(sigma_omega=0.0, sigma_g=0.0, seed=0)
        off = sample_offsets(make_stream(0, STREAM_DEVICE), cfg)
        assert (off.d_omega1, off.d_omega2, off.d_g) == (0.0, 0.0, 0.0)

    def test_deterministic_stream(self):
        cfg = NoiseConfig(seed=11)
        r1 = make_stream(cfg.seed, STREAM_DEVICE)
        r2 = make_stream(cfg.seed, STREAM_DEVICE)
        for _ in range(50):
            a = sample_offsets(r1, cfg)
            b = sample_offsets(r2, cfg)
            assert a == b

    def test_statistics_at_1e5(self):
        cfg = NoiseConfig()
        rng = make_stream(101, STREAM_DEVICE)
        arr = np.array([sample_offsets(rng, cfg).as_array() for _ in range(100_000)])
        n = arr.shape[0]
        assert abs(arr[:, 0].std() - 1e-3) / 1e-3 < 0.02
        assert abs(arr[:, 1].std() - 1e-3) / 1e-3 < 0.02
        assert abs(arr[:, 2].std() - 5e-5) / 5e-5 < 0.02
        assert abs(arr[:, 0].mean()) < 4 * 1e-3 / np.sqrt(n)
        assert abs(arr[:, 2].mean()) < 4 * 5e-5 / np.sqrt(n)
        # independence of d_omega1 and d_g
        rho = np.corrcoef(arr[:, 0], arr[:, 2])[0, 1]
        assert abs(rho) <= 0.01


class TestApplyOffsets:
    def test_zero_offsets_identity(self):
        assert apply_offsets(NOMINAL_PARAMS, DeviceOffsets(0, 0, 0)) == NOMINAL_PARAMS

    def test_arithmetic(self):
        nominal = DeviceParams(1.0, 1.1, -0.05, -0.05, 0.0025)
        out = apply_offsets(nominal, DeviceOffsets(1e-3, -1e-3, 5e-5))
        expected = DeviceParams(1.001, 1.099, -0.05, -0.05, 0.00255)
        for a, b in zip(out.as_tuple(), expected.as_tuple()):
            assert a == pytest.approx(b, rel=1e-15)

    def test_chi_never_mutated(self):
        rng = make_stream(5, STREAM_DEVICE)
        cfg = NoiseConfig()
        for _ in range(100):
            out = apply_offsets(NOMINAL_PARAMS, sample_offsets(rng, cfg))
            assert out.chi1 == NOMINAL_PARAMS.chi1
            assert out.chi2 == NOMINAL_PARAMS.chi2

    def test_apply_then_subtract(self):
        off = DeviceOffsets(3.3e-4, -8.1e-4, 2.2e-5)
        dev = apply_offsets(NOMINAL_PARAMS, off)
        back = apply_offsets(dev, DeviceOffsets(-off.d_omega1, -off.d_omega2, -off.d_g))
        for a, b in zip(back.as_tuple(), NOMINAL_PARAMS.as_tuple()):
            assert a == pytest.approx(b, abs=1e-15)


class TestFixedDevice:
    def test_values(self):
        off = fixed_single_device()
        assert off.d_omega1 == -3.0744e-4
        assert off.d_omega2 == -8.3866e-4
        assert off.d_g == 6.2819e-6

    def test_within_three_sigma(self):
        off = fixed_single_device()
        cfg = NoiseConfig()
        assert abs(off.d_omega1) <= 3 * cfg.sigma_omega
        assert abs(off.d_omega2) <= 3 * cfg.sigma_omega
        assert abs(off.d_g) <= 3 * cfg.sigma_g

    def test_constant(self):
        assert fixed_single_device() == fixed_single_device()


class TestHistogram:
    def test_all_zero_center_bin(self):
        samples = [DeviceOffsets(0, 0, 0)] * 10
        hist = offset_histogram(samples, 3, NoiseConfig())
        for h in hist.values():
            assert h.counts.sum() == 10

    def test_counts_sum(self):
        rng = make_stream(9, STREAM_DEVICE)
        cfg = NoiseConfig()
        samples = [sample_offsets(rng, cfg) for _ in range(5000)]
        hist = offset_histogram(samples, 40, cfg)
        for h in hist.values():
            assert h.counts.sum() == 5000

    def test_tail_fraction(self):
        cfg = NoiseConfig()
        rng = make_stream(77, STREAM_DEVICE)
        samples = [sample_offsets(rng, cfg) for _ in range(100_000)]
        hist = offset_histogram(samples, 50, cfg)
        arr = np.array([s.as_array() for s in samples])
        for col, name in enumerate(("d_omega1", "d_omega2", "d_g")):
            h = hist[name]
            outside = np.mean((arr[:, col] < h.marker_lo) | (arr[:, col] > h.marker_hi))
            assert abs(outside - 0.0027) <= 0.0016

    def test_validation(self):
        with pytest.raises(ValueError):
            offset_histogram([], 3, NoiseConfig())
        with pytest.raises(ValueError):
            offset_histogram([DeviceOffsets(0, 0, 0)], 0, NoiseConfig())
