"""Fixed-point quantization and piecewise-linear activations.

Formats are signed fixed point with a per-tensor static power-of-two scale:
representable values are code * 2^-frac_bits * scale for codes in
[-2^(b-1), 2^(b-1)-1]. Rounding is to nearest even; overflow saturates and
is tallied, never wrapped.

Quantized inference mirrors what the hardware stores and moves: weight
half-spectra and time-domain vectors are quantized ahead of time, input
and state vectors are (re)quantized every step, input-segment spectra are
quantized after each forward FFT, and activations go through monotone
piecewise-linear approximations. Multiply-accumulates happen on the
dequantized values in double precision, which reproduces double-width
integer accumulators exactly (the products carry at most 2x12 significant
bits, well inside the 53-bit mantissa).
"""

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .cells import GRUParams, LSTMParams, initial_state, run_sequence, sigmoid
from .circulant import SpectralWeights
from .errors import NumericError

#: Uniform segments per activation; 128 keeps the dense-grid error of both
#: approximations below 1e-3.
PWL_SEGMENTS = 128
SIGMOID_CLAMP = 8.0
TANH_CLAMP = 4.0


@dataclass(frozen=True)
class FixedPointFormat:
    total_bits: int = 12
    frac_bits: int = 11
    scale: float = 1.0

    def __post_init__(self):
        if not 2 <= self.total_bits <= 32:
            raise ValueError(f"total_bits must be in [2, 32], got {self.total_bits}")
        if not 0 <= self.frac_bits < self.total_bits:
            raise ValueError(
                f"frac_bits must be in [0, {self.total_bits - 1}], got {self.frac_bits}"
            )
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def step(self):
        """Value of one code unit (the ulp)."""
        return 2.0**-self.frac_bits * self.scale

    @property
    def code_min(self):
        return -(2 ** (self.total_bits - 1))

    @property
    def code_max(self):
        return 2 ** (self.total_bits - 1) - 1

    @property
    def min_value(self):
        return self.code_min * self.step

    @property
    def max_value(self):
        return self.code_max * self.step


@dataclass
class QuantizedTensor:
    fmt: FixedPointFormat
    codes: np.ndarray
    saturated: int = 0  # values clamped at the range ends during quantize


def analyze_range(values, total_bits=12) -> FixedPointFormat:
    """Most precise format that holds every value without saturation.

    Prefers scale 1 with the largest feasible frac_bits; values too large
    even at frac_bits 0 get a power-of-two scale instead. All-zero input
    pins the maximum-precision format by convention.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot analyze an empty value set")
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite values in range analysis")
    lo = float(v.min())
    hi = float(v.max())
    if lo == 0.0 and hi == 0.0:
        return FixedPointFormat(total_bits, total_bits - 1, 1.0)

    def fits(fmt):
        return lo >= fmt.min_value and hi <= fmt.max_value

    for frac in range(total_bits - 1, -1, -1):
        fmt = FixedPointFormat(total_bits, frac, 1.0)
        if fits(fmt):
            return fmt
    scale = 2.0
    while True:
        fmt = FixedPointFormat(total_bits, 0, scale)
        if fits(fmt):
            return fmt
        scale *= 2.0


def quantize(values, fmt: FixedPointFormat) -> QuantizedTensor:
    """Round-to-nearest-even onto the code grid, saturating at the ends."""
    v = np.asarray(values, dtype=np.float64)
    raw = np.round(v / fmt.step)  # numpy rounds half to even
    codes = np.clip(raw, fmt.code_min, fmt.code_max)
    saturated = int(np.count_nonzero(raw != codes))
    return QuantizedTensor(fmt, codes.astype(np.int64), saturated)


def dequantize(q: QuantizedTensor) -> np.ndarray:
    return q.codes.astype(np.float64) * q.fmt.step


def qdq(values, fmt, tally=None, name=None):
    """quantize -> dequantize in one go, optionally tallying saturation."""
    q = quantize(values, fmt)
    if tally is not None:
        sat, total = tally.get(name, (0, 0))
        tally[name] = (sat + q.saturated, total + q.codes.size)
    return dequantize(q)


_pwl_tables = {}


def _pwl_eval(x, fn, clamp, segments, lo_val, hi_val):
    if segments < 2:
        raise ValueError(f"need at least 2 segments, got {segments}")
    segments += segments % 2  # breakpoint at 0 requires an even count
    key = (fn.__name__, clamp, segments)
    table = _pwl_tables.get(key)
    if table is None:
        grid = np.linspace(-clamp, clamp, segments + 1)
        _pwl_tables[key] = table = (grid, fn(grid))
    grid, ys = table
    arr = np.asarray(x, dtype=np.float64)
    out = np.interp(arr, grid, ys)
    out = np.where(arr < -clamp, lo_val, out)
    out = np.where(arr > clamp, hi_val, out)
    return float(out) if np.isscalar(x) else out


def pwl_sigmoid(x, segments=PWL_SEGMENTS):
    """Piecewise-linear logistic: exact 0.5 at 0, exact 0/1 saturation
    outside [-8, 8], monotone everywhere."""
    return _pwl_eval(x, sigmoid, SIGMOID_CLAMP, segments, 0.0, 1.0)


def pwl_tanh(x, segments=PWL_SEGMENTS):
    """Piecewise-linear tanh: exact 0 at 0, exact +/-1 saturation outside
    [-4, 4], monotone everywhere."""
    return _pwl_eval(x, np.tanh, TANH_CLAMP, segments, -1.0, 1.0)


@dataclass
class QuantizationSpec:
    """Per-tensor formats plus the activation approximation setting.

    codes holds the static integer code tensors (weight spectra and
    vectors); dynamically quantized tensors (input, state, FFT results)
    appear in formats only.
    """

    bits: int
    formats: dict
    pwl_segments: int | None = PWL_SEGMENTS  # None = exact activations
    codes: dict = field(default_factory=dict)


@dataclass
class DeviationReport:
    bits: int
    max_abs_deviation: float
    mean_abs_deviation: float
    saturation: dict
    warnings: list = field(default_factory=list)

    def lines(self):
        out = ["# quantized-inference deviation report"]
        out.append(f"bits {self.bits}")
        out.append(f"max_abs_deviation {self.max_abs_deviation!r}")
        out.append(f"mean_abs_deviation {self.mean_abs_deviation!r}")
        for name in sorted(self.saturation):
            sat, total = self.saturation[name]
            out.append(f"saturation {name} {sat}/{total}")
        for w in self.warnings:
            out.append(f"warning {w}")
        return out


def _matrix_items(cell):
    if isinstance(cell, LSTMParams):
        items = [("fused", cell._fused_spec)]
        if cell._proj_spec is not None:
            items.append(("proj", cell._proj_spec))
        return items
    return [("fused", cell._fused_spec), ("cand_x", cell._cx_spec),
            ("cand_c", cell._cc_spec)]


def _vector_items(cell):
    if isinstance(cell, LSTMParams):
        names = ("w_ic", "w_fc", "w_oc", "b_i", "b_f", "b_c", "b_o")
    else:
        names = ("b_r", "b_z", "b_c")
    return [(n, getattr(cell, n)) for n in names]


def _spectrum_reals(spectra):
    return np.concatenate([spectra.real.ravel(), spectra.imag.ravel()])


def calibrate_formats(cell, calibration_inputs, total_bits=12,
                      pwl_segments=PWL_SEGMENTS) -> QuantizationSpec:
    """Derive per-tensor formats from the weights plus a calibration run.

    Weight spectra and vectors are analyzed directly. Input, state, and
    FFT-result ranges are observed by replaying the quantized pipeline with
    a near-transparent wide format and recording extrema exactly at the
    points where quantization will later apply.
    """
    formats = {}
    for name, spec in _matrix_items(cell):
        formats[f"spectra:{name}"] = analyze_range(_spectrum_reals(spec.spectra), total_bits)
    for name, vec in _vector_items(cell):
        formats[f"vec:{name}"] = analyze_range(vec if np.any(vec) else [1.0], total_bits)

    wide = FixedPointFormat(32, 20, 1.0)  # range +-2048, step ~1e-6
    dynamic = ["input", "state_c", "state_y"] + [
        f"fft:{name}" for name, _ in _matrix_items(cell)
    ]
    probe = QuantizationSpec(
        32,
        {**formats, **{name: wide for name in dynamic}},
        pwl_segments=None,
    )
    ranges = {}
    for xs in calibration_inputs:
        quantized_run_sequence(cell, probe, xs, collect=ranges)
    # recurrent state buffers are accumulators and carry double width,
    # like the multiply-accumulate path inside a step
    state_bits = min(2 * total_bits, 32)
    for name in dynamic:
        lo, hi = ranges.get(name, (0.0, 1.0))
        bits = state_bits if name.startswith("state") else total_bits
        formats[name] = analyze_range(np.array([lo, hi]), bits)

    codes = {}
    for name, spec in _matrix_items(cell):
        fmt = formats[f"spectra:{name}"]
        codes[f"spectra:{name}:re"] = quantize(spec.spectra.real, fmt).codes
        codes[f"spectra:{name}:im"] = quantize(spec.spectra.imag, fmt).codes
    for name, vec in _vector_items(cell):
        codes[f"vec:{name}"] = quantize(vec, formats[f"vec:{name}"]).codes
    return QuantizationSpec(total_bits, formats, pwl_segments, codes)


def _quantized_weights(cell, qspec, tally):
    """Dequantized weight spectra and vectors, as the hardware would hold them."""
    spectra = {}
    for name, spec in _matrix_items(cell):
        fmt = qspec.formats[f"spectra:{name}"]
        re = qdq(spec.spectra.real, fmt, tally, f"spectra:{name}")
        im = qdq(spec.spectra.imag, fmt, tally, f"spectra:{name}")
        spectra[name] = SpectralWeights.from_raw_spectra(
            spec.rows, spec.cols, spec.block_size, re + 1j * im
        )
    vectors = {}
    for name, vec in _vector_items(cell):
        vectors[name] = qdq(vec, qspec.formats[f"vec:{name}"], tally, f"vec:{name}")
    return spectra, vectors


def _record_range(collect, name, values):
    if collect is None:
        return
    v = np.asarray(values)
    lo, hi = float(v.min()), float(v.max())
    cur = collect.get(name)
    collect[name] = (lo, hi) if cur is None else (min(lo, cur[0]), max(hi, cur[1]))


def _quantized_matvec(spec: SpectralWeights, x, name, qspec, tally, collect):
    kern = backend.active()
    L = spec.block_size
    key = f"fft:{name}"
    fmt = qspec.formats[key]
    xhat = kern.rfft_rows(np.asarray(x).reshape(spec.col_blocks, L))
    _record_range(collect, key, _spectrum_reals(xhat))
    re = qdq(xhat.real, fmt, tally, key)
    im = qdq(xhat.imag, fmt, tally, key)
    acc = kern.spectral_accumulate(spec.spectra, re + 1j * im)
    return kern.irfft_rows(acc, L).reshape(spec.rows)


def quantized_run_sequence(cell, qspec: QuantizationSpec, xs, tally=None, collect=None):
    """Forward pass with quantized weights/spectra/IO and PWL activations."""
    xs = np.asarray(xs, dtype=np.float64)
    tally = tally if tally is not None else {}
    spectra, vec = _quantized_weights(cell, qspec, tally)
    in_fmt = qspec.formats["input"]
    c_fmt = qspec.formats["state_c"]
    y_fmt = qspec.formats["state_y"]
    if qspec.pwl_segments is None:
        sig, tah = sigmoid, np.tanh
    else:
        sig = lambda v: pwl_sigmoid(v, qspec.pwl_segments)
        tah = lambda v: pwl_tanh(v, qspec.pwl_segments)

    state = initial_state(cell)
    c, y = state.c, state.y
    H = cell.hidden_dim
    outputs = np.empty((xs.shape[0], cell.output_dim))
    for t in range(xs.shape[0]):
        _record_range(collect, "input", xs[t])
        x_q = qdq(xs[t], in_fmt, tally, "input")
        _record_range(collect, "state_c", c)
        _record_range(collect, "state_y", y)
        c = qdq(c, c_fmt, tally, "state_c")
        y = qdq(y, y_fmt, tally, "state_y")
        if isinstance(cell, LSTMParams):
            pre = _quantized_matvec(spectra["fused"], np.concatenate([x_q, y]),
                                    "fused", qspec, tally, collect)
            i = sig(pre[:H] + vec["w_ic"] * c + vec["b_i"])
            f = sig(pre[H:2 * H] + vec["w_fc"] * c + vec["b_f"])
            g = (sig if cell.gate_activation == "sigmoid" else tah)(pre[2 * H:3 * H] + vec["b_c"])
            c = f * c + g * i
            o = sig(pre[3 * H:] + vec["w_oc"] * c + vec["b_o"])
            m = o * tah(c)
            if "proj" in spectra:
                y = _quantized_matvec(spectra["proj"], m, "proj", qspec, tally, collect)
            else:
                y = m
        else:
            pre = _quantized_matvec(spectra["fused"], np.concatenate([x_q, c]),
                                    "fused", qspec, tally, collect)
            r = sig(pre[:H] + vec["b_r"])
            z = sig(pre[H:] + vec["b_z"])
            cand = tah(
                _quantized_matvec(spectra["cand_x"], x_q, "cand_x", qspec, tally, collect)
                + _quantized_matvec(spectra["cand_c"], r * c, "cand_c", qspec, tally, collect)
                + vec["b_c"]
            )
            c = (1.0 - z) * c + z * cand
            y = c
        outputs[t] = y
    return outputs


def quantized_inference(cell, qspec: QuantizationSpec, sequences):
    """Run quantized forward passes and report deviation vs double precision.

    sequences: iterable of (T, X) input arrays. Returns (outputs per
    sequence, DeviationReport). Saturation above 1% of any tensor's values
    adds a warning; it is never an error.
    """
    tally = {}
    outputs = []
    devs = []
    for xs in sequences:
        q_out = quantized_run_sequence(cell, qspec, xs, tally)
        f_out = run_sequence(cell, np.asarray(xs, dtype=np.float64))
        outputs.append(q_out)
        devs.append(np.abs(q_out - f_out).ravel())
    all_devs = np.concatenate(devs) if devs else np.zeros(1)
    warnings = []
    for name, (sat, total) in sorted(tally.items()):
        if total and sat / total > 0.01:
            warnings.append(f"{name} saturation rate {sat / total:.2%} exceeds 1%")
    report = DeviationReport(
        bits=qspec.bits,
        max_abs_deviation=float(all_devs.max()),
        mean_abs_deviation=float(all_devs.mean()),
        saturation=tally,
        warnings=warnings,
    )
    return outputs, report
