"""Block-circulant LSTM and GRU cells.

The LSTM follows the projected-peephole formulation: the four gate/cell
matrices are fused into one block-circulant matrix applied to the
concatenated [x_t; y_{t-1}], peephole terms are point-wise products with
diagonal vectors, and an optional projection maps the cell output m_t to
the fed-back y_t. The cell-input activation defaults to the logistic
function, with tanh available as a switch.

The GRU fuses reset/update gates into one matrix over [x_t; c_{t-1}] and
uses two more matrices for the candidate state: three matrix-vector
products per step in total. All matvecs run through the decoupled FFT
path; peepholes and gate blends never do.
"""

from dataclasses import dataclass, replace

import numpy as np

from .circulant import (
    BlockCirculantMatrix,
    SpectralWeights,
    TransformCounters,
    matvec_decoupled,
    random_block_circulant,
)
from .errors import DimensionMismatchError, NumericError, PartitionError

GATE_ACTIVATIONS = ("sigmoid", "tanh")


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[neg])
    out[neg] = ex / (1.0 + ex)
    return out


def check_fused_divisibility(input_dim, recurrent_dim, block_size, label="input"):
    """The concatenated [x; recurrent] length must split into whole blocks."""
    total = input_dim + recurrent_dim
    if total % block_size:
        pad = -total % block_size
        raise PartitionError(
            f"block size {block_size} does not divide {label} {input_dim} + "
            f"recurrent {recurrent_dim} = {total}; pad the {label} dimension "
            f"by {pad} (to {input_dim + pad})"
        )


@dataclass(frozen=True)
class CellState:
    """Per-sequence recurrent state; zeros at t=0."""

    c: np.ndarray
    y: np.ndarray
    t: int = 0


def _vector(v, length, name):
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape != (length,):
        raise DimensionMismatchError(f"{name} must have shape ({length},), got {v.shape}")
    return v


@dataclass(frozen=True)
class LSTMParams:
    """Weights for one LSTM layer.

    fused stacks the i, f, g(c), o row blocks: shape (4H) x (X + R) where
    R is the projection width (or H without projection).
    """

    fused: BlockCirculantMatrix
    w_ic: np.ndarray
    w_fc: np.ndarray
    w_oc: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray
    projection: BlockCirculantMatrix | None
    input_dim: int
    gate_activation: str = "sigmoid"

    def __post_init__(self):
        if self.gate_activation not in GATE_ACTIVATIONS:
            raise ValueError(f"gate_activation must be one of {GATE_ACTIVATIONS}")
        if self.fused.rows % 4:
            raise DimensionMismatchError("fused matrix must have 4*H rows")
        H = self.hidden_dim
        R = self.output_dim
        if self.projection is not None and self.projection.cols != H:
            raise DimensionMismatchError(
                f"projection must have {H} columns, got {self.projection.cols}"
            )
        if self.fused.cols != self.input_dim + R:
            raise DimensionMismatchError(
                f"fused matrix has {self.fused.cols} columns, expected input "
                f"{self.input_dim} + recurrent {R} = {self.input_dim + R}"
            )
        check_fused_divisibility(self.input_dim, R, self.fused.block_size)
        for name in ("w_ic", "w_fc", "w_oc", "b_i", "b_f", "b_c", "b_o"):
            object.__setattr__(self, name, _vector(getattr(self, name), H, name))
        object.__setattr__(self, "_fused_spec", SpectralWeights.from_matrix(self.fused))
        proj_spec = None if self.projection is None else SpectralWeights.from_matrix(self.projection)
        object.__setattr__(self, "_proj_spec", proj_spec)

    @property
    def hidden_dim(self):
        return self.fused.rows // 4

    @property
    def output_dim(self):
        return self.hidden_dim if self.projection is None else self.projection.rows

    def with_gate_activation(self, gate_activation):
        return replace(self, gate_activation=gate_activation)

    @classmethod
    def random(cls, rng, input_dim, hidden_dim, block_size, projection_dim=None,
               scale=0.5, gate_activation="sigmoid"):
        R = projection_dim if projection_dim is not None else hidden_dim
        check_fused_divisibility(input_dim, R, block_size)
        fused = random_block_circulant(rng, 4 * hidden_dim, input_dim + R, block_size, scale)
        proj = None
        if projection_dim is not None:
            proj = random_block_circulant(rng, projection_dim, hidden_dim, block_size, scale)
        vec = lambda: rng.uniform(-scale, scale, size=hidden_dim)
        return cls(fused, vec(), vec(), vec(), vec(), vec(), vec(), vec(),
                   proj, input_dim, gate_activation)


@dataclass(frozen=True)
class GRUParams:
    """Weights for one GRU layer.

    fused stacks the r, z row blocks: shape (2H) x (X + H). candidate_x
    and candidate_c feed the tanh candidate state.
    """

    fused: BlockCirculantMatrix
    candidate_x: BlockCirculantMatrix
    candidate_c: BlockCirculantMatrix
    b_r: np.ndarray
    b_z: np.ndarray
    b_c: np.ndarray
    input_dim: int

    def __post_init__(self):
        if self.fused.rows % 2:
            raise DimensionMismatchError("fused matrix must have 2*H rows")
        H = self.hidden_dim
        if self.fused.cols != self.input_dim + H:
            raise DimensionMismatchError(
                f"fused matrix has {self.fused.cols} columns, expected input "
                f"{self.input_dim} + state {H} = {self.input_dim + H}"
            )
        if self.candidate_x.rows != H or self.candidate_x.cols != self.input_dim:
            raise DimensionMismatchError("candidate_x must be H x input_dim")
        if self.candidate_c.rows != H or self.candidate_c.cols != H:
            raise DimensionMismatchError("candidate_c must be H x H")
        check_fused_divisibility(self.input_dim, H, self.fused.block_size)
        for name in ("b_r", "b_z", "b_c"):
            object.__setattr__(self, name, _vector(getattr(self, name), H, name))
        object.__setattr__(self, "_fused_spec", SpectralWeights.from_matrix(self.fused))
        object.__setattr__(self, "_cx_spec", SpectralWeights.from_matrix(self.candidate_x))
        object.__setattr__(self, "_cc_spec", SpectralWeights.from_matrix(self.candidate_c))

    @property
    def hidden_dim(self):
        return self.fused.rows // 2

    @property
    def output_dim(self):
        return self.hidden_dim

    @classmethod
    def random(cls, rng, input_dim, hidden_dim, block_size, scale=0.5):
        check_fused_divisibility(input_dim, hidden_dim, block_size)
        fused = random_block_circulant(rng, 2 * hidden_dim, input_dim + hidden_dim, block_size, scale)
        cx = random_block_circulant(rng, hidden_dim, input_dim, block_size, scale)
        cc = random_block_circulant(rng, hidden_dim, hidden_dim, block_size, scale)
        vec = lambda: rng.uniform(-scale, scale, size=hidden_dim)
        return cls(fused, cx, cc, vec(), vec(), vec(), input_dim)


def initial_state(params) -> CellState:
    H = params.hidden_dim
    return CellState(c=np.zeros(H), y=np.zeros(params.output_dim), t=0)


def _check_step_input(params, x_t):
    x_t = np.ascontiguousarray(x_t, dtype=np.float64)
    if x_t.shape != (params.input_dim,):
        raise DimensionMismatchError(
            f"input must have shape ({params.input_dim},), got {x_t.shape}"
        )
    if not np.all(np.isfinite(x_t)):
        raise NumericError("non-finite input vector")
    return x_t


def lstm_step(params: LSTMParams, x_t, state: CellState,
              counters: TransformCounters | None = None):
    """One LSTM step; returns (y_t, next state)."""
    x_t = _check_step_input(params, x_t)
    H = params.hidden_dim
    c_prev, y_prev = state.c, state.y

    pre = matvec_decoupled(params._fused_spec, np.concatenate([x_t, y_prev]), counters)
    a_i, a_f, a_g, a_o = pre[:H], pre[H : 2 * H], pre[2 * H : 3 * H], pre[3 * H :]

    i = sigmoid(a_i + params.w_ic * c_prev + params.b_i)
    f = sigmoid(a_f + params.w_fc * c_prev + params.b_f)
    gate = sigmoid if params.gate_activation == "sigmoid" else np.tanh
    g = gate(a_g + params.b_c)
    c = f * c_prev + g * i
    o = sigmoid(a_o + params.w_oc * c + params.b_o)
    m = o * np.tanh(c)
    y = m if params._proj_spec is None else matvec_decoupled(params._proj_spec, m, counters)

    if not np.all(np.isfinite(c)):
        raise NumericError("cell state became non-finite")
    return y, CellState(c=c, y=y, t=state.t + 1)


def gru_step(params: GRUParams, x_t, state: CellState,
             counters: TransformCounters | None = None):
    """One GRU step; returns (c_t, next state)."""
    x_t = _check_step_input(params, x_t)
    H = params.hidden_dim
    c_prev = state.c

    pre = matvec_decoupled(params._fused_spec, np.concatenate([x_t, c_prev]), counters)
    r = sigmoid(pre[:H] + params.b_r)
    z = sigmoid(pre[H:] + params.b_z)
    cand = np.tanh(
        matvec_decoupled(params._cx_spec, x_t, counters)
        + matvec_decoupled(params._cc_spec, r * c_prev, counters)
        + params.b_c
    )
    c = (1.0 - z) * c_prev + z * cand

    if not np.all(np.isfinite(c)):
        raise NumericError("cell state became non-finite")
    return c, CellState(c=c, y=c, t=state.t + 1)


def step(params, x_t, state, counters=None):
    if isinstance(params, LSTMParams):
        return lstm_step(params, x_t, state, counters)
    if isinstance(params, GRUParams):
        return gru_step(params, x_t, state, counters)
    raise TypeError(f"unsupported params type {type(params)!r}")


def run_sequence(params, xs, counters: TransformCounters | None = None) -> np.ndarray:
    """Thread the zero state through T steps; output t sees inputs 1..t only."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise DimensionMismatchError(f"expected (T, {params.input_dim}) inputs, got {xs.shape}")
    if xs.shape[0] < 1:
        raise DimensionMismatchError("empty input sequence")
    state = initial_state(params)
    outputs = np.empty((xs.shape[0], params.output_dim))
    for t in range(xs.shape[0]):
        outputs[t], state = step(params, xs[t], state, counters)
    return outputs
