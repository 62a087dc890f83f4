"""Complex matrix helpers: unitary 2D-DFT pair, unconjugated inner product,
2D circulant shifts and beam patterns.

Convention: ``U_N(k, l) = exp(-2j*pi*k*l/N) / sqrt(N)`` (symmetric, unitary).
The beamspace of a channel is ``X = U H U`` so ``X(i, j)`` is the response of
codebook beam ``U[:, i] U[:, j]^T`` under the unconjugated inner product.
The pattern of a sensing matrix uses the dual transform ``Z = U* P U*`` which
makes ``<H, P> == <X, Z>`` exact.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class BeamIndex(NamedTuple):
    i: int
    j: int

    def flat(self, n: int) -> int:
        return self.i * n + self.j

    @classmethod
    def from_flat(cls, idx: int, n: int) -> "BeamIndex":
        if not 0 <= idx < n * n:
            raise ValueError(f"class index {idx} outside [0, {n * n})")
        return cls(int(idx) // n, int(idx) % n)


def _square(a, name="matrix"):
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"{name} must be square in its last two axes, got shape {a.shape}")
    if a.shape[-1] < 1:
        raise ValueError(f"{name} is empty")
    return a


def dft_matrix(n: int) -> np.ndarray:
    """Symmetric unitary DFT matrix ``U_N``."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def frob_inner(a, b) -> complex:
    """Unconjugated Frobenius inner product ``sum(A * B)``.

    Works on stacks: the sum runs over the last two axes.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-2:] != b.shape[-2:] or a.ndim < 2:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    out = np.sum(a * b, axis=(-2, -1))
    return complex(out) if np.ndim(out) == 0 else out


def dft2(h) -> np.ndarray:
    """Beamspace transform ``U H U`` (batched over leading axes)."""
    h = _square(h, "H")
    return np.fft.fft2(h, norm="ortho")


def idft2(a) -> np.ndarray:
    """Dual transform ``U* A U*``; inverse of :func:`dft2`."""
    a = _square(a, "A")
    return np.fft.ifft2(a, norm="ortho")


def dft2_direct(h) -> np.ndarray:
    """O(N^4) double sum ``X(i, j) = sum_{k,l} U(k, i) H(k, l) U(l, j)``.

    Kept independent of the FFT path on purpose; used as a test oracle and
    for label verification.
    """
    h = _square(np.asarray(h, dtype=complex), "H")
    if h.ndim != 2:
        raise ValueError("dft2_direct takes a single matrix")
    n = h.shape[0]
    x = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            acc = 0j
            for k in range(n):
                for l in range(n):
                    acc += np.exp(-2j * np.pi * (k * i + l * j) / n) * h[k, l]
            x[i, j] = acc / n
    return x


def circ_shift(p, r: int, c: int) -> np.ndarray:
    """``Q(k, l) = P((k - r) mod N, (l - c) mod N)``."""
    p = _square(p, "P")
    return np.roll(p, shift=(int(r), int(c)), axis=(-2, -1))


def beam_pattern(p) -> np.ndarray:
    """Magnitude of the dual 2D-DFT of a sensing matrix."""
    return np.abs(idft2(p))
