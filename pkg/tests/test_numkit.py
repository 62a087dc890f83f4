import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccsbeam.numkit import (
    BeamIndex,
    beam_pattern,
    circ_shift,
    dft2,
    dft2_direct,
    dft_matrix,
    frob_inner,
    idft2,
)
from conftest import crandn


def delta(n, r=0, c=0):
    d = np.zeros((n, n), dtype=complex)
    d[r, c] = 1
    return d


class TestFrobInner:
    def test_identity(self):
        assert frob_inner(np.eye(2), np.eye(2)) == 2

    def test_unconjugated(self):
        a = np.array([[1, 1j], [0, 0]])
        b = np.array([[1j, 1], [0, 0]])
        # 1*j + j*1, no conjugation
        assert frob_inner(a, b) == 2j

    def test_delta_selects_entry(self, rng):
        h = crandn(rng, 5, 5)
        assert frob_inner(h, delta(5, 3, 1)) == h[3, 1]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            frob_inner(np.ones((2, 2)), np.ones((3, 3)))


class TestDFT:
    def test_constant_matrix(self):
        n, c = 16, 0.7 - 0.2j
        x = dft2(np.full((n, n), c))
        assert x[0, 0] == pytest.approx(n * c)
        x[0, 0] = 0
        assert np.max(np.abs(x)) < 1e-12

    def test_delta_is_flat(self):
        n = 16
        np.testing.assert_allclose(dft2(delta(n)), np.full((n, n), 1 / n), atol=1e-15)

    def test_matches_matrix_form(self, rng):
        h = crandn(rng, 8, 8)
        u = dft_matrix(8)
        np.testing.assert_allclose(dft2(h), u @ h @ u, atol=1e-12)
        # X(i, j) = u_i^T H u_j
        assert dft2(h)[2, 5] == pytest.approx(u[:, 2] @ h @ u[:, 5])

    def test_dft_matrix_unitary_symmetric(self):
        u = dft_matrix(16)
        np.testing.assert_allclose(u, u.T)
        np.testing.assert_allclose(u @ u.conj().T, np.eye(16), atol=1e-12)

    def test_unitarity_many(self, rng):
        for _ in range(100):
            h = crandn(rng, 16, 16)
            assert abs(np.linalg.norm(dft2(h)) / np.linalg.norm(h) - 1) < 1e-10

    def test_against_direct_double_sum(self, rng):
        for n in (4, 16):
            h = crandn(rng, n, n)
            np.testing.assert_allclose(dft2(h), dft2_direct(h), atol=1e-9)

    def test_non_square(self):
        with pytest.raises(ValueError):
            dft2(np.ones((3, 4)))
        with pytest.raises(ValueError):
            idft2(np.ones((4, 3)))


class TestIDFT:
    def test_inverse(self, rng):
        h = crandn(rng, 16, 16)
        assert np.max(np.abs(idft2(dft2(h)) - h)) < 1e-10

    def test_delta(self):
        np.testing.assert_allclose(idft2(delta(16)), np.full((16, 16), 1 / 16), atol=1e-15)

    def test_parseval_pairing(self, rng):
        for _ in range(100):
            h, p = crandn(rng, 16, 16), crandn(rng, 16, 16)
            lhs = np.sum(h * p)  # literal definition, not frob_inner
            rhs = frob_inner(dft2(h), idft2(p))
            assert abs(lhs - rhs) <= 1e-9 * np.linalg.norm(h) * np.linalg.norm(p)


class TestShift:
    def test_identity_and_period(self, rng):
        p = crandn(rng, 8, 8)
        np.testing.assert_array_equal(circ_shift(p, 0, 0), p)
        np.testing.assert_array_equal(circ_shift(p, 8, 8), p)

    def test_by_hand(self):
        p = np.array([[1, 2], [3, 4]])
        np.testing.assert_array_equal(circ_shift(p, 1, 0), [[3, 4], [1, 2]])

    def test_definition(self, rng):
        n, r, c = 6, 2, -5
        p = crandn(rng, n, n)
        q = circ_shift(p, r, c)
        for k in range(n):
            for l in range(n):
                assert q[k, l] == p[(k - r) % n, (l - c) % n]


class TestBeamPattern:
    def test_codebook_beam_is_delta(self):
        n, i, j = 16, 3, 11
        u = dft_matrix(n)
        p = np.outer(u[:, i], u[:, j])
        p /= np.linalg.norm(p)
        pat = beam_pattern(p)
        assert pat.max() == pytest.approx(1.0)
        assert np.sum(pat > 1e-9) == 1

    def test_delta_base_is_flat(self):
        np.testing.assert_allclose(beam_pattern(delta(16)), 1 / 16, atol=1e-15)

    def test_shift_invariance_grid(self, rng):
        p = crandn(rng, 16, 16)
        ref = beam_pattern(p)
        for r in range(0, 16, 4):
            for c in range(0, 16, 4):
                assert np.max(np.abs(beam_pattern(circ_shift(p, r, c)) - ref)) <= 1e-10

    @settings(max_examples=50, deadline=None)
    @given(st.integers(-40, 40), st.integers(-40, 40), st.integers(0, 2**32 - 1))
    def test_shift_invariance_property(self, r, c, seed):
        p = crandn(np.random.default_rng(seed), 8, 8)
        assert np.max(np.abs(beam_pattern(circ_shift(p, r, c)) - beam_pattern(p))) <= 1e-10


def test_beam_index_round_trip():
    n = 16
    for i in range(n):
        for j in range(n):
            assert BeamIndex.from_flat(BeamIndex(i, j).flat(n), n) == (i, j)
    with pytest.raises(ValueError):
        BeamIndex.from_flat(n * n, n)
