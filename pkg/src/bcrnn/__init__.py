"""Block-circulant LSTM/GRU compression toolkit.

FFT-accelerated inference over block-circulant weight matrices, ADMM-based
structured training, fixed-point quantization, an analytical cost model,
and a design-space explorer, tied together by the `bcrnn` CLI.
"""

from . import backend
from .circulant import (
    BlockCirculantMatrix,
    SpectralWeights,
    TransformCounters,
    compression_ratio,
    expand_to_dense,
    matvec_decoupled,
    matvec_dense_oracle,
    matvec_fft,
    project_to_block_circulant,
)
from .fft import HalfSpectrum, fft_real_mult_count, irfft, rfft, spectral_mac

__version__ = "0.1.0"

__all__ = [
    "backend",
    "BlockCirculantMatrix",
    "SpectralWeights",
    "TransformCounters",
    "compression_ratio",
    "expand_to_dense",
    "matvec_decoupled",
    "matvec_dense_oracle",
    "matvec_fft",
    "project_to_block_circulant",
    "HalfSpectrum",
    "fft_real_mult_count",
    "irfft",
    "rfft",
    "spectral_mac",
]
