"""Three ways to compute the same measurements.

A phased array applying the circulant shift (r, c) of a base matrix P
measures G(r, c), one entry of the circular cross-correlation of H and P.
The network computes the same numbers as a real-valued convolution over a
restructured channel tensor, and the FFT gives them in O(N^2 log N).
"""

import numpy as np

from ccsbeam import circ_shift, circ_xcorr_direct, circ_xcorr_fft, conv_measure, frob_inner, restructure_channel
from ccsbeam.numkit import beam_pattern, dft2, idft2

rng = np.random.default_rng(0)
n = 8
h = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
p = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))

g = circ_xcorr_direct(h, p)
g_r, g_i = conv_measure(restructure_channel(h), p.real, p.imag)
print("fft vs loop:       ", np.abs(circ_xcorr_fft(h, p) - g).max())
print("conv vs loop:      ", np.abs(g_r + 1j * g_i - g).max())
print("hardware shift 2,5:", abs(frob_inner(h, circ_shift(p, 2, 5)) - g[2, 5]))

# the same inner product seen in beamspace
print("beamspace identity:", abs(frob_inner(h, p) - frob_inner(dft2(h), idft2(p))))

# shifting P only changes phases in beamspace, never the beam pattern
print("pattern change:    ", np.abs(beam_pattern(circ_shift(p, 3, 1)) - beam_pattern(p)).max())
