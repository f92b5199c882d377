"""Pure-NumPy FFT kernels: the fallback backend.

Same contract as the compiled core (`_fftcore`): forward transforms are
unscaled, the inverse carries the 1/L factor, and length 1 is the identity
transform. Lengths are validated by the callers in `bcrnn.fft`.
"""

import numpy as np

name = "python"
compiled = False


def rfft(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape[0] == 1:
        return x.astype(np.complex128)
    return np.fft.rfft(x)


def irfft(bins, length):
    bins = np.ascontiguousarray(bins, dtype=np.complex128)
    if length == 1:
        return bins.real.copy()
    return np.fft.irfft(bins, n=length)


def rfft_rows(rows):
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if rows.shape[1] == 1:
        return rows.astype(np.complex128)
    return np.fft.rfft(rows, axis=1)


def irfft_rows(spectra, length):
    spectra = np.ascontiguousarray(spectra, dtype=np.complex128)
    if length == 1:
        return spectra.real.copy()
    return np.fft.irfft(spectra, n=length, axis=1)


def spectral_accumulate(weight_spectra, input_spectra):
    """Sum over column blocks of weight_spectra[i, j, :] * input_spectra[j, :]."""
    return np.einsum("ijk,jk->ik", weight_spectra, input_spectra)


def block_matvec(weight_spectra, x, length):
    """Decoupled matvec composed from the vectorized kernels."""
    w = np.asarray(weight_spectra)
    q = w.shape[1]
    xhat = rfft_rows(np.asarray(x, dtype=np.float64).reshape(q, length))
    acc = spectral_accumulate(w, xhat)
    return irfft_rows(acc, length).reshape(w.shape[0] * length)
