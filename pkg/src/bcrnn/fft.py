"""Real-input FFT over power-of-two lengths, in half-spectrum form.

A length-L real vector transforms to L/2 + 1 complex bins; the remaining
bins follow by conjugate symmetry and are never stored. The forward
transform is unscaled and the inverse carries the 1/L factor, so circulant
matvec via the convolution identity needs no extra bookkeeping.

Also home to the real-multiplication counting rules used by the cost
model: butterfly levels 1-2 are multiplication-free, level j contributes
(L/2) * 2^-(j-2) complex multiplications, and a complex multiplication
counts as 4 real ones by default.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DimensionMismatchError, InvalidLengthError, MalformedSpectrumError

#: Tolerated imaginary magnitude at the always-real bins (0 and L/2).
REAL_BIN_TOLERANCE = 1e-9


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def _check_length(n):
    if not isinstance(n, (int, np.integer)) or not is_power_of_two(int(n)):
        raise InvalidLengthError(f"length must be a positive power of two, got {n!r}")
    return int(n)


@dataclass(frozen=True)
class HalfSpectrum:
    """The L/2 + 1 unique DFT bins of a length-L real vector.

    bins[0] and bins[L/2] are real; interior bins are generally complex.
    Treated as immutable: operations return new instances.
    """

    length: int
    bins: np.ndarray

    def __post_init__(self):
        _check_length(self.length)
        bins = np.ascontiguousarray(self.bins, dtype=np.complex128)
        expected = self.length // 2 + 1
        if bins.shape != (expected,):
            raise DimensionMismatchError(
                f"length {self.length} needs {expected} bins, got shape {bins.shape}"
            )
        object.__setattr__(self, "bins", bins)

    @property
    def num_bins(self):
        return self.length // 2 + 1

    def __eq__(self, other):
        if not isinstance(other, HalfSpectrum):
            return NotImplemented
        return self.length == other.length and np.array_equal(self.bins, other.bins)


def rfft(x) -> HalfSpectrum:
    """Forward transform of a real vector whose length is a power of two."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"expected a vector, got shape {arr.shape}")
    n = _check_length(arr.shape[0])
    return HalfSpectrum(n, backend.active().rfft(arr))


def irfft(s: HalfSpectrum) -> np.ndarray:
    """Inverse transform back to the length-L real vector (carries the 1/L)."""
    bins = s.bins
    endpoint_imag = max(abs(bins[0].imag), abs(bins[-1].imag)) if s.length > 1 else abs(bins[0].imag)
    if endpoint_imag > REAL_BIN_TOLERANCE:
        raise MalformedSpectrumError(
            f"bins 0 and length/2 must be real; imaginary magnitude {endpoint_imag:g}"
        )
    return backend.active().irfft(bins, s.length)


def spectral_mac(acc: HalfSpectrum, w: HalfSpectrum, x: HalfSpectrum) -> HalfSpectrum:
    """acc + w * x bin-wise (complex products on the retained bins)."""
    if not (acc.length == w.length == x.length):
        raise DimensionMismatchError(
            f"length mismatch: {acc.length}, {w.length}, {x.length}"
        )
    return HalfSpectrum(acc.length, acc.bins + w.bins * x.bins)


def zero_spectrum(length) -> HalfSpectrum:
    n = _check_length(length)
    return HalfSpectrum(n, np.zeros(n // 2 + 1, dtype=np.complex128))


def fft_real_mult_count(length, reals_per_complex=4):
    """Real multiplications in one transform under the butterfly-level rule.

    Levels 1-2 are free (twiddles are 1, -1, i, -i); level j >= 3 performs
    (length/2) * 2^-(j-2) complex multiplications. Closed form:
    reals_per_complex * (length/2 - 2). Lengths below 4 have no multiplying
    level and count 0.
    """
    n = _check_length(length)
    if n < 4:
        return 0
    return reals_per_complex * (n // 2 - 2)


def spectral_product_mult_count(length):
    """Real multiplications in one half-spectrum bin-wise product.

    The two always-real bins (0 and length/2) cost 1 real multiplication
    each; every interior bin is a full complex product costing 4.
    """
    n = _check_length(length)
    if n == 1:
        return 1
    return 2 + 4 * (n // 2 - 1)
