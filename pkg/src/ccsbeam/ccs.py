"""2D convolutional compressed sensing (2D-CCS) measurements.

A base matrix ``P`` is applied at the transmitter under ``M`` circulant
shifts; each shift ``(r, c)`` yields one sample ``G(r, c)`` of the circular
cross-correlation ``G(r, c) = sum_{k,l} H(k, l) P((k - r) % N, (l - c) % N)``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ccsbeam.numkit import circ_shift, frob_inner


def _check_pair(h, p):
    h = np.asarray(h)
    p = np.asarray(p)
    if h.shape[-2:] != p.shape[-2:] or h.shape[-1] != h.shape[-2]:
        raise ValueError(f"H and P must be N x N of equal size, got {h.shape} and {p.shape}")
    return h, p


class SubsamplingSet(NamedTuple):
    """Ordered circulant shifts; measurement ``m`` is ``G[coords[m]]``."""

    coords: tuple
    n: int

    @classmethod
    def from_coords(cls, coords, n: int) -> "SubsamplingSet":
        coords = tuple((int(r), int(c)) for r, c in coords)
        if not 1 <= len(coords) <= n * n:
            raise ValueError(f"need 1 <= M <= {n * n}, got {len(coords)}")
        if len(set(coords)) != len(coords):
            raise ValueError("subsampling coordinates must be distinct")
        if any(not (0 <= r < n and 0 <= c < n) for r, c in coords):
            raise ValueError(f"coordinate outside the {n}x{n} grid")
        return cls(coords, n)

    @property
    def m(self) -> int:
        return len(self.coords)

    @property
    def rows(self) -> np.ndarray:
        return np.array([r for r, _ in self.coords], dtype=np.int64)

    @property
    def cols(self) -> np.ndarray:
        return np.array([c for _, c in self.coords], dtype=np.int64)

    def to_list(self):
        return [list(rc) for rc in self.coords]


@dataclass
class BaseMatrix:
    p: np.ndarray
    quantized: bool = False
    q: int | None = None

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def phase_indices(self) -> np.ndarray:
        """Indices ``b`` in ``{1..2^q}`` with ``p = exp(2j*pi*b/2^q) / N``."""
        if not self.quantized:
            raise ValueError("phase indices exist only for quantized base matrices")
        levels = 2**self.q
        b = np.rint(np.angle(self.p) * levels / (2 * np.pi)).astype(np.int64) % levels
        return np.where(b == 0, levels, b)

    @classmethod
    def from_phase_indices(cls, b, q: int) -> "BaseMatrix":
        b = np.asarray(b, dtype=np.int64)
        levels = 2**q
        if b.min() < 1 or b.max() > levels:
            raise ValueError(f"phase indices must lie in 1..{levels}")
        return cls(_alphabet(b, q, b.shape[0]), quantized=True, q=q)

    def to_json(self) -> str:
        n = self.n
        d = {"n": n, "q": self.q, "quantized": self.quantized}
        if self.quantized:
            d["phase_indices"] = self.phase_indices().ravel().tolist()
        else:
            d["entries"] = np.stack([self.p.real, self.p.imag], axis=-1).ravel().tolist()
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "BaseMatrix":
        d = json.loads(text)
        n = int(d["n"])
        if d["quantized"]:
            return cls.from_phase_indices(np.reshape(d["phase_indices"], (n, n)), int(d["q"]))
        e = np.reshape(np.asarray(d["entries"], dtype=float), (n, n, 2))
        return cls(e[..., 0] + 1j * e[..., 1], quantized=False, q=d.get("q"))


def _alphabet(b, q, n):
    """``exp(j*2*pi*b/2^q)/N`` computed through cos/sin of the reduced angle."""
    levels = 2**q
    theta = 2 * np.pi * (np.asarray(b) % levels) / levels
    return (np.cos(theta) + 1j * np.sin(theta)) / n


# ---------------------------------------------------------------------------
# correlation
# ---------------------------------------------------------------------------


def circ_xcorr_direct(h, p) -> np.ndarray:
    """Literal quadruple loop; the reference for every other path."""
    h, p = _check_pair(h, p)
    if h.ndim != 2:
        raise ValueError("circ_xcorr_direct takes single matrices")
    n = h.shape[0]
    g = np.zeros((n, n), dtype=complex)
    for r in range(n):
        for c in range(n):
            acc = 0j
            for k in range(n):
                for l in range(n):
                    acc += h[k, l] * p[(k - r) % n, (l - c) % n]
            g[r, c] = acc
    return g


def circ_xcorr_fft(h, p) -> np.ndarray:
    """Frequency-domain correlation, batched over leading axes of ``h``.

    ``G = ifft2(fft2(H) * conj(fft2(conj(P))))``, i.e. the spectrum of ``P``
    enters with index reversal.
    """
    h, p = _check_pair(h, p)
    fh = np.fft.fft2(h)
    fp = np.conj(np.fft.fft2(np.conj(p)))
    return np.fft.ifft2(fh * fp)


def restructure_channel(h) -> np.ndarray:
    """Real ``2N x 4N x 2`` tensor: slice 0 ``[H_R,pad, H_I,pad]``, slice 1
    ``[-H_I,pad, H_R,pad]``, each pad block being the 2x2 tiling of the part.
    Batched over leading axes."""
    h = np.asarray(h)
    if h.shape[-1] != h.shape[-2]:
        raise ValueError("H must be square")
    reps = (1,) * (h.ndim - 2) + (2, 2)
    hr = np.tile(h.real, reps)
    hi = np.tile(h.imag, reps)
    s0 = np.concatenate([hr, hi], axis=-1)
    s1 = np.concatenate([-hi, hr], axis=-1)
    return np.stack([s0, s1], axis=-1)


def conv_measure(x, p_r, p_i):
    """Valid-mode, stride-1 correlation of the ``N x N x 2`` filter
    ``(P_R, P_I)`` over a restructured channel.

    The ``(N+1) x (3N+1)`` map holds ``G_R`` at column 0 and ``G_I`` at
    column ``2N`` (both starting at row 0).
    """
    x = np.asarray(x, dtype=float)
    p_r = np.asarray(p_r, dtype=float)
    p_i = np.asarray(p_i, dtype=float)
    if p_r.shape != p_i.shape or p_r.ndim != 2 or p_r.shape[0] != p_r.shape[1]:
        raise ValueError("filter slices must be matching N x N real matrices")
    n = p_r.shape[0]
    if x.shape[-3:] != (2 * n, 4 * n, 2):
        raise ValueError(f"restructured channel must be {(2 * n, 4 * n, 2)}, got {x.shape[-3:]}")
    kernel = np.stack([p_r, p_i], axis=-1)
    windows = np.lib.stride_tricks.sliding_window_view(x, (n, n), axis=(-3, -2))
    # windows: (..., N+1, 3N+1, 2, N, N)
    full = np.einsum("...rcsab,abs->...rc", windows, kernel)
    return full[..., :n, :n], full[..., :n, 2 * n : 3 * n]


# ---------------------------------------------------------------------------
# subsampling and noise
# ---------------------------------------------------------------------------


def sample_omega(n: int, m: int, rng: np.random.Generator) -> SubsamplingSet:
    if not 1 <= m <= n * n:
        raise ValueError(f"need 1 <= M <= {n * n}, got {m}")
    flat = rng.choice(n * n, size=m, replace=False)
    return SubsamplingSet(tuple((int(k) // n, int(k) % n) for k in flat), n)


def subsample(g, omega: SubsamplingSet) -> np.ndarray:
    g = np.asarray(g)
    if g.shape[-2:] != (omega.n, omega.n):
        raise ValueError(f"G has shape {g.shape[-2:]}, subsampling set is for N={omega.n}")
    rows, cols = omega.rows, omega.cols
    if rows.max() >= g.shape[-2] or cols.max() >= g.shape[-1] or min(rows.min(), cols.min()) < 0:
        raise ValueError("subsampling coordinate out of bounds")
    return g[..., rows, cols]


def add_awgn(y, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian noise with ``sigma2 / 2`` per real dimension."""
    if sigma2 < 0:
        raise ValueError("noise variance must be nonnegative")
    y = np.asarray(y)
    if sigma2 == 0:
        return y.astype(complex)
    s = np.sqrt(sigma2 / 2)
    noise = s * rng.standard_normal(y.shape) + 1j * s * rng.standard_normal(y.shape)
    return y + noise


# ---------------------------------------------------------------------------
# base matrices
# ---------------------------------------------------------------------------


def phase_q(w, q: int) -> np.ndarray:
    """Phase of ``w`` rounded to the nearest multiple of ``2*pi/2^q`` as an
    integer step count in ``[0, 2^q)``. Halfway cases go to the larger step."""
    steps = np.angle(w) * 2**q / (2 * np.pi)
    return np.floor(steps + 0.5).astype(np.int64) % 2**q


def quantize_base(p, q: int) -> BaseMatrix:
    """``exp(j*phase_q(P)) / N``. Exact zeros map to phase 0 with a warning."""
    if q < 1:
        raise ValueError("q must be >= 1")
    p = np.asarray(p, dtype=complex)
    n = p.shape[0]
    n_zero = int(np.count_nonzero(p == 0))
    if n_zero:
        warnings.warn(f"{n_zero} zero entries quantized to phase 0", RuntimeWarning, stacklevel=2)
    b = phase_q(p, q)
    return BaseMatrix(_alphabet(b, q, n), quantized=True, q=q)


def random_base(n: int, q: int, rng: np.random.Generator) -> BaseMatrix:
    if q < 1:
        raise ValueError("q must be >= 1")
    b = rng.integers(1, 2**q + 1, size=(n, n))
    return BaseMatrix(_alphabet(b, q, n), quantized=True, q=q)


def in_alphabet(p, q: int, tol: float = 1e-12) -> np.ndarray:
    """Elementwise membership test for ``Q_q``."""
    p = np.asarray(p)
    n = p.shape[-1]
    steps = np.angle(p) * 2**q / (2 * np.pi)
    on_grid = np.abs(steps - np.rint(steps)) <= tol
    return on_grid & (np.abs(np.abs(p) - 1.0 / n) <= tol)


def measure_hardware(h, base: BaseMatrix, omega: SubsamplingSet, sigma2: float, rng) -> np.ndarray:
    """Phased-array acquisition: one unconjugated inner product per shift,
    ``y[m] = <H, shift(P, omega[m])> + v[m]``."""
    if not base.quantized:
        raise ValueError("hardware measurements require a quantized base matrix")
    h, _ = _check_pair(h, base.p)
    y = np.array([frob_inner(h, circ_shift(base.p, r, c)) for r, c in omega.coords])
    return add_awgn(y, sigma2, rng)
