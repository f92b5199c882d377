# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled radix-2 FFT kernels: the hot inner loops of block-circulant matvec.

Iterative decimation-in-time butterflies over power-of-two lengths with
per-length cached bit-reversal and twiddle tables. Forward transforms are
unscaled; the inverse carries the 1/L factor; length 1 is the identity.
The fused `block_matvec` runs the whole decoupled product (q forward
transforms, p*q spectral accumulations, p inverse transforms) without
touching the interpreter, which is where inference spends its time at the
small block sizes the compression sweet spot uses.
"""

import threading

import numpy as np

name = "compiled"
compiled = True

_plan_lock = threading.Lock()
_plans = {}  # length -> (bit-reversal indices, forward twiddles, inverse twiddles)


def _plan(n):
    plan = _plans.get(n)
    if plan is None:
        with _plan_lock:
            plan = _plans.get(n)
            if plan is None:
                bits = n.bit_length() - 1
                rev = np.zeros(n, dtype=np.intp)
                for i in range(1, n):
                    rev[i] = (rev[i >> 1] >> 1) | ((i & 1) << (bits - 1))
                fwd = np.exp(-2j * np.pi * np.arange(n // 2) / n)
                _plans[n] = plan = (rev, fwd, np.conj(fwd))
    return plan


cdef void _fft_inplace(double complex* a, Py_ssize_t n, Py_ssize_t* rev,
                       double complex* tw) noexcept nogil:
    cdef Py_ssize_t i, j, k, m, half, start, stride
    cdef double complex t, u

    for i in range(n):
        j = rev[i]
        if j > i:
            t = a[i]
            a[i] = a[j]
            a[j] = t

    m = 2
    while m <= n:
        half = m >> 1
        stride = n // m
        start = 0
        while start < n:
            for k in range(half):
                u = a[start + k]
                t = a[start + half + k] * tw[k * stride]
                a[start + k] = u + t
                a[start + half + k] = u - t
            start += m
        m <<= 1


cdef void _forward_row(const double* x, double complex* out, double complex* scratch,
                       Py_ssize_t n, Py_ssize_t* rev, double complex* tw) noexcept nogil:
    """Half spectrum of one real row; endpoints forced exactly real."""
    cdef Py_ssize_t k
    for k in range(n):
        scratch[k] = x[k]
    _fft_inplace(scratch, n, rev, tw)
    for k in range(n // 2 + 1):
        out[k] = scratch[k]
    out[0] = out[0].real
    out[n // 2] = out[n // 2].real


cdef void _inverse_row(const double complex* bins, double* out, double complex* scratch,
                       Py_ssize_t n, Py_ssize_t* rev, double complex* itw) noexcept nogil:
    cdef Py_ssize_t k
    cdef Py_ssize_t nb = n // 2 + 1
    cdef double scale = 1.0 / n
    scratch[0] = bins[0].real
    for k in range(1, nb - 1):
        scratch[k] = bins[k]
        scratch[n - k] = bins[k].conjugate()
    scratch[n // 2] = bins[n // 2].real
    _fft_inplace(scratch, n, rev, itw)
    for k in range(n):
        out[k] = scratch[k].real * scale


cdef class _PlanView:
    """C-friendly view of one cached plan plus a scratch buffer."""
    cdef Py_ssize_t[::1] rev
    cdef double complex[::1] fwd
    cdef double complex[::1] inv
    cdef double complex[::1] scratch

    def __cinit__(self, n):
        rev, fwd, inv = _plan(n)
        self.rev = rev
        self.fwd = fwd
        self.inv = inv
        self.scratch = np.empty(max(n, 1), dtype=np.complex128)


def rfft(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = arr.shape[0]
    if n == 1:
        return arr.astype(np.complex128)
    out = np.empty(n // 2 + 1, dtype=np.complex128)
    cdef _PlanView pv = _PlanView(n)
    cdef double[::1] xv = arr
    cdef double complex[::1] ov = out
    with nogil:
        _forward_row(&xv[0], &ov[0], &pv.scratch[0], n, &pv.rev[0], &pv.fwd[0])
    return out


def irfft(bins, length):
    arr = np.ascontiguousarray(bins, dtype=np.complex128)
    cdef Py_ssize_t n = length
    if n == 1:
        return arr.real.copy()
    out = np.empty(n, dtype=np.float64)
    cdef _PlanView pv = _PlanView(n)
    cdef double complex[::1] bv = arr
    cdef double[::1] ov = out
    with nogil:
        _inverse_row(&bv[0], &ov[0], &pv.scratch[0], n, &pv.rev[0], &pv.inv[0])
    return out


def rfft_rows(rows):
    arr = np.ascontiguousarray(rows, dtype=np.float64)
    cdef Py_ssize_t q = arr.shape[0], n = arr.shape[1]
    if n == 1:
        return arr.astype(np.complex128)
    out = np.empty((q, n // 2 + 1), dtype=np.complex128)
    cdef _PlanView pv = _PlanView(n)
    cdef double[:, ::1] xv = arr
    cdef double complex[:, ::1] ov = out
    cdef Py_ssize_t j
    with nogil:
        for j in range(q):
            _forward_row(&xv[j, 0], &ov[j, 0], &pv.scratch[0], n,
                         &pv.rev[0], &pv.fwd[0])
    return out


def irfft_rows(spectra, length):
    arr = np.ascontiguousarray(spectra, dtype=np.complex128)
    cdef Py_ssize_t p = arr.shape[0], n = length
    if n == 1:
        return arr.real.copy()
    out = np.empty((p, n), dtype=np.float64)
    cdef _PlanView pv = _PlanView(n)
    cdef double complex[:, ::1] sv = arr
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(p):
            _inverse_row(&sv[i, 0], &ov[i, 0], &pv.scratch[0], n,
                         &pv.rev[0], &pv.inv[0])
    return out


def spectral_accumulate(weight_spectra, input_spectra):
    """Sum over column blocks of weight_spectra[i, j, :] * input_spectra[j, :]."""
    w = np.ascontiguousarray(weight_spectra, dtype=np.complex128)
    x = np.ascontiguousarray(input_spectra, dtype=np.complex128)
    cdef double complex[:, :, ::1] wv = w
    cdef double complex[:, ::1] xv = x
    cdef Py_ssize_t p = wv.shape[0], q = wv.shape[1], nb = wv.shape[2]
    out = np.zeros((p, nb), dtype=np.complex128)
    cdef double complex[:, ::1] ov = out
    cdef Py_ssize_t i, j, k
    with nogil:
        for i in range(p):
            for j in range(q):
                for k in range(nb):
                    ov[i, k] = ov[i, k] + wv[i, j, k] * xv[j, k]
    return out


def block_matvec(weight_spectra, x, length):
    """Fused decoupled matvec: q forward FFTs, p*q spectral MACs, p inverse
    FFTs, one interpreter round trip."""
    w = np.ascontiguousarray(weight_spectra, dtype=np.complex128)
    arr = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = length
    cdef double complex[:, :, ::1] wv = w
    cdef Py_ssize_t p = wv.shape[0], q = wv.shape[1], nb = wv.shape[2]
    out = np.empty(p * n, dtype=np.float64)
    cdef double[::1] xv = arr
    cdef double[::1] ov = out
    xhat = np.empty((q, nb), dtype=np.complex128)
    acc = np.zeros((p, nb), dtype=np.complex128)
    cdef double complex[:, ::1] hv = xhat
    cdef double complex[:, ::1] av = acc
    cdef Py_ssize_t i, j, k
    if n == 1:
        with nogil:
            for i in range(p):
                ov[i] = 0.0
                for j in range(q):
                    ov[i] += wv[i, j, 0].real * xv[j]
        return out
    cdef _PlanView pv = _PlanView(n)
    with nogil:
        for j in range(q):
            _forward_row(&xv[j * n], &hv[j, 0], &pv.scratch[0], n,
                         &pv.rev[0], &pv.fwd[0])
        for i in range(p):
            for j in range(q):
                for k in range(nb):
                    av[i, k] = av[i, k] + wv[i, j, k] * hv[j, k]
            _inverse_row(&av[i, 0], &ov[i * n], &pv.scratch[0], n,
                         &pv.rev[0], &pv.inv[0])
    return out
