"""Block-circulant matrices and their FFT matrix-vector products.

A matrix is stored as a p x q grid of circulant blocks, each fully
determined by one generating vector of length `block_size`. The generator
is pinned to the first *column* of its block, Block[k][l] = w[(k - l) mod
L], so that multiplying by a block is exactly circular convolution and the
spectral identity irfft(rfft(w) * rfft(x)) holds with the standard DFT.

Two product paths are provided: `matvec_fft` (one FFT→product→IFFT per
block, summed in the time domain) and `matvec_decoupled` (q forward
transforms, frequency-domain accumulation per output row, p inverse
transforms). Both match the dense expansion; the decoupled path is the one
the inference cells use.
"""

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import DimensionMismatchError, PartitionError
from .fft import fft_real_mult_count, is_power_of_two, spectral_product_mult_count


@dataclass
class TransformCounters:
    """Caller-owned accumulator for instrumented matvec runs."""

    forward_fft: int = 0
    inverse_fft: int = 0
    spectral_products: int = 0
    real_mults: int = 0
    matvec_calls: int = 0

    def count_forward(self, length, n=1):
        self.forward_fft += n
        self.real_mults += n * fft_real_mult_count(length)

    def count_inverse(self, length, n=1):
        self.inverse_fft += n
        self.real_mults += n * fft_real_mult_count(length)

    def count_products(self, length, n=1):
        self.spectral_products += n
        self.real_mults += n * spectral_product_mult_count(length)


def _check_partition(m, n, block_size):
    if not isinstance(block_size, (int, np.integer)) or block_size < 1:
        raise PartitionError(f"block size must be a positive integer, got {block_size!r}")
    if m % block_size or n % block_size:
        raise PartitionError(
            f"block size {block_size} does not divide matrix shape {m}x{n}"
        )


@dataclass(frozen=True)
class BlockCirculantMatrix:
    """p x q grid of circulant blocks; generators has shape (p, q, block_size)."""

    rows: int
    cols: int
    block_size: int
    generators: np.ndarray

    def __post_init__(self):
        _check_partition(self.rows, self.cols, self.block_size)
        gen = np.ascontiguousarray(self.generators, dtype=np.float64)
        p = self.rows // self.block_size
        q = self.cols // self.block_size
        if gen.shape != (p, q, self.block_size):
            raise DimensionMismatchError(
                f"generators must have shape {(p, q, self.block_size)}, got {gen.shape}"
            )
        object.__setattr__(self, "generators", gen)

    @property
    def row_blocks(self):
        return self.rows // self.block_size

    @property
    def col_blocks(self):
        return self.cols // self.block_size

    @property
    def num_parameters(self):
        return self.generators.size


def random_block_circulant(rng, rows, cols, block_size, scale=1.0):
    _check_partition(rows, cols, block_size)
    gen = rng.uniform(-scale, scale, size=(rows // block_size, cols // block_size, block_size))
    return BlockCirculantMatrix(rows, cols, block_size, gen)


@dataclass(frozen=True)
class SpectralWeights:
    """Precomputed half-spectra of every generator, ready for matvec."""

    rows: int
    cols: int
    block_size: int
    spectra: np.ndarray = field(repr=False)  # (p, q, block_size//2 + 1) complex

    @classmethod
    def from_matrix(cls, matrix: BlockCirculantMatrix):
        if not is_power_of_two(matrix.block_size):
            raise PartitionError(
                f"FFT paths need a power-of-two block size, got {matrix.block_size}"
            )
        p, q, L = matrix.generators.shape
        flat = matrix.generators.reshape(p * q, L)
        spectra = backend.active().rfft_rows(flat).reshape(p, q, L // 2 + 1)
        return cls(matrix.rows, matrix.cols, matrix.block_size, spectra)

    @classmethod
    def from_raw_spectra(cls, rows, cols, block_size, spectra):
        """Spectra supplied directly (e.g. after quantization), not re-derived."""
        _check_partition(rows, cols, block_size)
        spectra = np.ascontiguousarray(spectra, dtype=np.complex128)
        p, q = rows // block_size, cols // block_size
        expected = (p, q, block_size // 2 + 1)
        if spectra.shape != expected:
            raise DimensionMismatchError(f"spectra must have shape {expected}, got {spectra.shape}")
        return cls(rows, cols, block_size, spectra)

    @property
    def row_blocks(self):
        return self.rows // self.block_size

    @property
    def col_blocks(self):
        return self.cols // self.block_size


def expand_to_dense(matrix: BlockCirculantMatrix) -> np.ndarray:
    """Dense m x n expansion; Block[k][l] = generator[(k - l) mod block_size].

    Tolerates arbitrary (non-power-of-two) block sizes: this is the oracle
    form used to cross-check every FFT path.
    """
    L = matrix.block_size
    k = np.arange(L)
    # circulant index table: row k, col l -> (k - l) mod L
    idx = (k[:, None] - k[None, :]) % L
    blocks = matrix.generators[:, :, idx]  # (p, q, L, L)
    return blocks.transpose(0, 2, 1, 3).reshape(matrix.rows, matrix.cols)


def matvec_dense_oracle(matrix: BlockCirculantMatrix, x) -> np.ndarray:
    """Direct O(mn) product against the dense expansion (test oracle)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (matrix.cols,):
        raise DimensionMismatchError(f"expected vector of length {matrix.cols}, got {x.shape}")
    return expand_to_dense(matrix) @ x


def _check_input(weights: SpectralWeights, x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (weights.cols,):
        raise DimensionMismatchError(f"expected vector of length {weights.cols}, got {x.shape}")
    return x


def matvec_fft(weights: SpectralWeights, x, counters: TransformCounters | None = None) -> np.ndarray:
    """Per-block FFT -> product -> IFFT, summed in the time domain."""
    x = _check_input(weights, x)
    L = weights.block_size
    p, q = weights.row_blocks, weights.col_blocks
    kern = backend.active()
    segments = x.reshape(q, L)
    out = np.zeros(weights.rows, dtype=np.float64)
    for i in range(p):
        acc = np.zeros(L, dtype=np.float64)
        for j in range(q):
            xhat = kern.rfft(segments[j])
            acc += kern.irfft(weights.spectra[i, j] * xhat, L)
        out[i * L : (i + 1) * L] = acc
    if counters is not None:
        counters.matvec_calls += 1
        counters.count_forward(L, p * q)
        counters.count_products(L, p * q)
        counters.count_inverse(L, p * q)
    return out


def matvec_decoupled(weights: SpectralWeights, x, counters: TransformCounters | None = None) -> np.ndarray:
    """Decoupled product: q forward transforms, frequency-domain
    accumulation per output row, then p inverse transforms."""
    x = _check_input(weights, x)
    L = weights.block_size
    p, q = weights.row_blocks, weights.col_blocks
    out = backend.active().block_matvec(weights.spectra, x, L)
    if counters is not None:
        counters.matvec_calls += 1
        counters.count_forward(L, q)
        counters.count_products(L, p * q)
        counters.count_inverse(L, p)
    return out


def project_to_block_circulant(dense, block_size) -> BlockCirculantMatrix:
    """Nearest block-circulant matrix in Frobenius norm.

    Each generator entry is the arithmetic mean of its circulant diagonal:
    the Euclidean projection onto the linear subspace of block-circulant
    matrices with this block size.
    """
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim != 2:
        raise DimensionMismatchError(f"expected a matrix, got shape {dense.shape}")
    m, n = dense.shape
    _check_partition(m, n, block_size)
    L = block_size
    p, q = m // L, n // L
    blocks = dense.reshape(p, L, q, L).transpose(0, 2, 1, 3)  # (p, q, L, L)
    k = np.arange(L)
    idx = (k[:, None] - k[None, :]) % L  # diagonal label of each (row, col)
    gen = np.zeros((p, q, L), dtype=np.float64)
    for d in range(L):
        mask = idx == d
        gen[:, :, d] = blocks[:, :, mask].mean(axis=2)
    return BlockCirculantMatrix(m, n, L, gen)


def generators_from_structured(dense, block_size) -> BlockCirculantMatrix:
    """Read generators off a matrix that is already exactly block-circulant."""
    result = project_to_block_circulant(dense, block_size)
    if not np.array_equal(expand_to_dense(result), np.asarray(dense, dtype=np.float64)):
        raise ValueError("matrix is not exactly block-circulant at this block size")
    return result


def compression_ratio(m, n, block_size):
    """Parameter ratio dense/compressed for one matrix: exactly block_size."""
    _check_partition(m, n, block_size)
    dense = m * n
    compressed = dense // block_size
    return dense / compressed


def parameter_counts(m, n, block_size):
    """(dense parameter count, compressed parameter count) for one matrix."""
    _check_partition(m, n, block_size)
    return m * n, (m * n) // block_size
