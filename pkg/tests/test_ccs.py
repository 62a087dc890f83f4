import json
import warnings

import numpy as np
import pytest
from scipy import stats

from ccsbeam.ccs import (
    BaseMatrix,
    SubsamplingSet,
    add_awgn,
    circ_xcorr_direct,
    circ_xcorr_fft,
    conv_measure,
    in_alphabet,
    measure_hardware,
    phase_q,
    quantize_base,
    random_base,
    restructure_channel,
    sample_omega,
    subsample,
)
from ccsbeam.numkit import beam_pattern, circ_shift, frob_inner
from conftest import crandn


def delta(n, r=0, c=0):
    d = np.zeros((n, n), dtype=complex)
    d[r, c] = 1
    return d


class TestDirectCorrelation:
    def test_delta_filter(self, rng):
        h = crandn(rng, 5, 5)
        np.testing.assert_allclose(circ_xcorr_direct(h, delta(5)), h)

    def test_hand_example(self):
        h = np.array([[1, 2], [3, 4]])
        np.testing.assert_array_equal(circ_xcorr_direct(h, delta(2, 0, 1)), [[2, 1], [4, 3]])

    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_shift_identity_exhaustive(self, rng, n):
        h, p = crandn(rng, n, n), crandn(rng, n, n)
        g = circ_xcorr_direct(h, p)
        for r in range(n):
            for c in range(n):
                assert g[r, c] == pytest.approx(frob_inner(h, circ_shift(p, r, c)), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            circ_xcorr_direct(np.ones((2, 2)), np.ones((3, 3)))
        with pytest.raises(ValueError):
            circ_xcorr_fft(np.ones((2, 2)), np.ones((3, 3)))


class TestFFTCorrelation:
    def test_matches_direct(self, rng):
        for _ in range(20):
            h, p = crandn(rng, 16, 16), crandn(rng, 16, 16)
            ref = circ_xcorr_direct(h, p)
            err = np.max(np.abs(circ_xcorr_fft(h, p) - ref))
            assert err <= 1e-9 * np.linalg.norm(h) * np.linalg.norm(p)

    def test_delta(self, rng):
        h = crandn(rng, 16, 16)
        np.testing.assert_allclose(circ_xcorr_fft(h, delta(16)), h, atol=1e-12)

    def test_linearity(self, rng):
        h1, h2, p = crandn(rng, 8, 8), crandn(rng, 8, 8), crandn(rng, 8, 8)
        np.testing.assert_allclose(
            circ_xcorr_fft(h1 + h2, p), circ_xcorr_fft(h1, p) + circ_xcorr_fft(h2, p), atol=1e-12
        )

    def test_batched(self, rng):
        h, p = crandn(rng, 3, 8, 8), crandn(rng, 8, 8)
        g = circ_xcorr_fft(h, p)
        for b in range(3):
            np.testing.assert_allclose(g[b], circ_xcorr_direct(h[b], p), atol=1e-10)


class TestRestructure:
    def test_shape_and_slices(self, rng):
        n = 4
        h = crandn(rng, n, n)
        x = restructure_channel(h)
        assert x.shape == (2 * n, 4 * n, 2)
        tile = lambda a: np.block([[a, a], [a, a]])
        np.testing.assert_array_equal(x[..., 0], np.hstack([tile(h.real), tile(h.imag)]))
        np.testing.assert_array_equal(x[..., 1], np.hstack([-tile(h.imag), tile(h.real)]))

    def test_real_channel(self, rng):
        n = 4
        x = restructure_channel(rng.standard_normal((n, n)) + 0j)
        assert not np.any(x[:, 2 * n :, 0])
        assert not np.any(x[:, : 2 * n, 1])

    def test_imaginary_channel(self, rng):
        n = 4
        r = rng.standard_normal((n, n))
        x = restructure_channel(1j * r)
        pad = np.tile(r, (2, 2))
        np.testing.assert_array_equal(x[..., 0], np.hstack([np.zeros_like(pad), pad]))
        np.testing.assert_array_equal(x[..., 1], np.hstack([-pad, np.zeros_like(pad)]))

    def test_index_audit(self):
        n = 4
        h = np.arange(n * n).reshape(n, n) + 100 * 1j * (np.arange(n * n).reshape(n, n) + 1)
        x = restructure_channel(h)
        k, l = 1, 2
        hits = np.argwhere((x == h[k, l].real) | (x == h[k, l].imag) | (x == -h[k, l].imag))
        # 4 tiles x (real in both slices + imaginary in both slices) = 16 cells,
        # i.e. 8 padded positions per part
        assert len(hits) == 16
        for r, c, s in hits:
            assert (r % n, c % n) == (k, l)


class TestConvMeasure:
    def test_matches_direct(self, rng):
        for _ in range(10):
            h, p = crandn(rng, 16, 16), crandn(rng, 16, 16)
            g_r, g_i = conv_measure(restructure_channel(h), p.real, p.imag)
            ref = circ_xcorr_direct(h, p)
            assert np.max(np.abs(g_r + 1j * g_i - ref)) <= 1e-9 * np.linalg.norm(h) * np.linalg.norm(p)

    def test_real_inputs(self, rng):
        h, p = rng.standard_normal((8, 8)), rng.standard_normal((8, 8))
        _, g_i = conv_measure(restructure_channel(h + 0j), p, np.zeros_like(p))
        assert np.max(np.abs(g_i)) == 0

    def test_delta(self, rng):
        h = crandn(rng, 8, 8)
        g_r, g_i = conv_measure(restructure_channel(h), delta(8).real, np.zeros((8, 8)))
        np.testing.assert_allclose(g_r, h.real, atol=1e-14)
        np.testing.assert_allclose(g_i, h.imag, atol=1e-14)

    def test_shape_mismatch(self, rng):
        x = restructure_channel(crandn(rng, 8, 8))
        with pytest.raises(ValueError):
            conv_measure(x, np.zeros((4, 4)), np.zeros((4, 4)))
        with pytest.raises(ValueError):
            conv_measure(x, np.zeros((8, 8)), np.zeros((4, 4)))


class TestOmega:
    def test_full_grid(self, rng):
        om = sample_omega(4, 16, rng)
        assert sorted(om.coords) == [(r, c) for r in range(4) for c in range(4)]

    def test_deterministic(self):
        a = sample_omega(16, 10, np.random.default_rng(3))
        b = sample_omega(16, 10, np.random.default_rng(3))
        assert a == b
        assert len(set(a.coords)) == 10

    def test_range(self, rng):
        for m in (0, 17):
            with pytest.raises(ValueError):
                sample_omega(4, m, rng)

    def test_validation(self):
        with pytest.raises(ValueError):
            SubsamplingSet.from_coords([(0, 1), (0, 1)], 4)
        with pytest.raises(ValueError):
            SubsamplingSet.from_coords([(0, 4)], 4)


class TestSubsample:
    def test_three_by_three(self, rng):
        g = crandn(rng, 3, 3)
        om = SubsamplingSet.from_coords([(0, 1), (1, 2), (2, 1)], 3)
        np.testing.assert_array_equal(subsample(g, om), [g[0, 1], g[1, 2], g[2, 1]])

    def test_full_grid_row_major(self, rng):
        g = crandn(rng, 4, 4)
        om = SubsamplingSet.from_coords([(r, c) for r in range(4) for c in range(4)], 4)
        np.testing.assert_array_equal(subsample(g, om), g.ravel())

    def test_zero_shift_is_inner_product(self, rng):
        h, p = crandn(rng, 8, 8), crandn(rng, 8, 8)
        om = SubsamplingSet.from_coords([(0, 0)], 8)
        assert subsample(circ_xcorr_fft(h, p), om)[0] == pytest.approx(frob_inner(h, p))

    def test_out_of_bounds(self, rng):
        om = SubsamplingSet.from_coords([(5, 5)], 8)
        with pytest.raises(ValueError):
            subsample(crandn(rng, 4, 4), om)


class TestNoise:
    def test_zero_variance(self, rng):
        y = crandn(rng, 10)
        np.testing.assert_array_equal(add_awgn(y, 0.0, rng), y)

    def test_moments(self):
        sigma2 = 0.37
        v = add_awgn(np.zeros(1_000_000, dtype=complex), sigma2, np.random.default_rng(5))
        assert abs(np.mean(np.abs(v) ** 2) / sigma2 - 1) < 0.01
        assert abs(np.var(v.real) / (sigma2 / 2) - 1) < 0.01
        assert abs(np.corrcoef(v.real, v.imag)[0, 1]) < 0.01

    def test_negative(self, rng):
        with pytest.raises(ValueError):
            add_awgn(np.zeros(3), -1.0, rng)


class TestQuantize:
    def test_on_grid_phase(self):
        p = np.full((4, 4), 3.0 * np.exp(1j * np.pi / 4))
        bq = quantize_base(p, 3)
        np.testing.assert_allclose(np.angle(bq.p), np.pi / 4, atol=1e-15)
        np.testing.assert_allclose(np.abs(bq.p), 1 / 4, rtol=1e-15)

    def test_rounds_to_nearest(self):
        p = np.full((4, 4), np.exp(0.3j))
        bq = quantize_base(p, 3)
        np.testing.assert_allclose(np.angle(bq.p), 0.0, atol=1e-15)
        # 0.5 rad is closer to pi/4 (0.785) than to 0
        assert np.angle(quantize_base(np.full((4, 4), np.exp(0.5j)), 3).p)[0, 0] == pytest.approx(np.pi / 4)

    def test_halfway_goes_up(self):
        # q=2 grid is multiples of pi/2; 1+1j and 1-1j sit exactly halfway
        assert phase_q(1 + 1j, 2) == 1
        assert phase_q(1 - 1j, 2) == 0
        assert phase_q(-1 + 1j, 2) == 2

    def test_idempotent(self, rng):
        bq = quantize_base(crandn(rng, 16, 16), 3)
        np.testing.assert_array_equal(quantize_base(bq.p, 3).p, bq.p)

    def test_grid_and_magnitude(self, rng):
        for q in (1, 2, 3, 4):
            bq = quantize_base(crandn(rng, 16, 16), q)
            steps = np.angle(bq.p) * 2**q / (2 * np.pi)
            assert np.max(np.abs(steps - np.rint(steps))) <= 1e-12
            assert np.max(np.abs(np.abs(bq.p) - 1 / 16)) <= 1e-15
            assert bq.quantized and bq.q == q

    def test_zero_entry_warns(self):
        p = np.ones((4, 4), dtype=complex)
        p[1, 2] = 0
        with pytest.warns(RuntimeWarning, match="1 zero"):
            bq = quantize_base(p, 3)
        assert bq.p[1, 2] == pytest.approx(0.25)

    def test_bits(self, rng):
        with pytest.raises(ValueError):
            quantize_base(crandn(rng, 4, 4), 0)


class TestRandomBase:
    def test_magnitude(self, rng):
        b = random_base(16, 3, rng)
        assert np.all(np.abs(np.abs(b.p) - 1 / 16) <= 1e-15)
        assert np.all(in_alphabet(b.p, 3))

    def test_uniform_phases(self):
        rng = np.random.default_rng(77)
        idx = np.concatenate([random_base(16, 3, rng).phase_indices().ravel() for _ in range(400)])
        assert idx.size > 1e5
        counts = np.bincount(idx, minlength=9)[1:]
        assert stats.chisquare(counts).pvalue > 0.01

    def test_binary_alphabet(self, rng):
        b = random_base(8, 1, rng)
        assert set(np.round(b.p.real * 8, 12).ravel()) <= {-1.0, 1.0}
        assert np.max(np.abs(b.p.imag)) < 1e-15

    def test_quasi_omnidirectional(self):
        rng = np.random.default_rng(8)
        ratios = []
        for _ in range(100):
            pat = beam_pattern(random_base(16, 3, rng).p)
            ratios.append(pat.max() / pat.mean())
        assert np.mean(ratios) < 10


class TestBaseMatrixJSON:
    def test_quantized_round_trip(self, rng):
        b = random_base(16, 3, rng)
        b2 = BaseMatrix.from_json(b.to_json())
        np.testing.assert_array_equal(b2.p, b.p)
        doc = json.loads(b.to_json())
        assert set(doc["phase_indices"]) <= set(range(1, 9))

    def test_unquantized_round_trip(self, rng):
        b = BaseMatrix(crandn(rng, 4, 4))
        np.testing.assert_array_equal(BaseMatrix.from_json(b.to_json()).p, b.p)


class TestHardware:
    def test_noiseless_matches_correlation(self, rng):
        h = crandn(rng, 16, 16)
        base = random_base(16, 3, rng)
        om = sample_omega(16, 10, rng)
        y = measure_hardware(h, base, om, 0.0, rng)
        np.testing.assert_allclose(y, subsample(circ_xcorr_direct(h, base.p), om), atol=1e-12)

    def test_single_zero_shift(self, rng):
        h = crandn(rng, 8, 8)
        base = random_base(8, 3, rng)
        om = SubsamplingSet.from_coords([(0, 0)], 8)
        r1, r2 = np.random.default_rng(4), np.random.default_rng(4)
        y = measure_hardware(h, base, om, 0.5, r1)
        assert y[0] == pytest.approx(add_awgn(np.array([frob_inner(h, base.p)]), 0.5, r2)[0])

    def test_same_noise_draws_as_pipeline(self, rng):
        h = crandn(rng, 8, 8)
        base = random_base(8, 3, rng)
        om = sample_omega(8, 5, rng)
        y1 = measure_hardware(h, base, om, 0.3, np.random.default_rng(9))
        y2 = add_awgn(subsample(circ_xcorr_fft(h, base.p), om), 0.3, np.random.default_rng(9))
        np.testing.assert_allclose(y1, y2, atol=1e-12)

    def test_linear_in_h(self, rng):
        h = crandn(rng, 8, 8)
        base = random_base(8, 3, rng)
        om = sample_omega(8, 5, rng)
        np.testing.assert_allclose(
            measure_hardware(2.5 * h, base, om, 0, rng), 2.5 * measure_hardware(h, base, om, 0, rng), atol=1e-12
        )

    def test_requires_quantized(self, rng):
        with pytest.raises(ValueError):
            measure_hardware(crandn(rng, 4, 4), BaseMatrix(crandn(rng, 4, 4)), sample_omega(4, 2, rng), 0, rng)
