"""Analytical multiplication/storage model and the three-step explorer.

Multiplication counting follows the decoupled matvec structure: q forward
transforms, p*q half-spectrum products, p inverse transforms, with
transform costs from the butterfly-level rule and bin products costing 1
real multiplication on the two real bins and 4 elsewhere. Block size 1
degenerates to the dense m*n count.

The explorer mirrors the three-step procedure: a storage sanity check
gives the block-size lower bound, a bounded power-of-two search between
that bound and the computation-curve bound picks the largest block size
meeting the accuracy tolerance, and fine tuning tries a cell swap
(LSTM to GRU) and one doubled block size for input-side matrices. The
whole procedure spends at most six accuracy-oracle calls.
"""

import json
import math
from dataclasses import dataclass, field, replace

from .errors import InfeasibleCapacityError, PartitionError
from .fft import fft_real_mult_count, is_power_of_two, spectral_product_mult_count

MAX_BLOCK_SEARCH = 1024
DEFAULT_RESERVE = 0.125  # BRAM share kept for input/output buffers
SWEEP_MAX_BLOCK = 128


@dataclass(frozen=True)
class MatrixShape:
    name: str
    rows: int
    cols: int
    block_size: int


@dataclass(frozen=True)
class LayerSpec:
    """Model-level shape description for the cost model and explorer."""

    cell: str
    layer_sizes: tuple
    input_dim: int
    projection: int | None = None
    block_size: int = 8
    io_block_size: int | None = None  # larger blocks for input-side matrices

    def __post_init__(self):
        if self.cell not in ("lstm", "gru"):
            raise ValueError(f"cell must be lstm or gru, got {self.cell!r}")
        object.__setattr__(self, "layer_sizes", tuple(int(h) for h in self.layer_sizes))
        if not self.layer_sizes:
            raise ValueError("need at least one layer")
        blocks = {self.block_size}
        if self.io_block_size is not None:
            blocks.add(self.io_block_size)
        if len(blocks) > 2:
            raise ValueError("at most 2 distinct block sizes model-wide")
        for b in blocks:
            if not is_power_of_two(b):
                raise PartitionError(f"block sizes must be powers of two, got {b}")

    @property
    def effective_io_block(self):
        return self.io_block_size if self.io_block_size is not None else self.block_size

    def matrices(self):
        """Weight matrices of the model with their block sizes."""
        out = []
        x_dim = self.input_dim
        io = self.effective_io_block
        split = io != self.block_size
        for l, H in enumerate(self.layer_sizes):
            if self.cell == "lstm":
                R = self.projection if self.projection is not None else H
                rows = 4 * H
                if split:
                    out.append(MatrixShape(f"L{l}.W_in", rows, x_dim, io))
                    out.append(MatrixShape(f"L{l}.W_rec", rows, R, self.block_size))
                else:
                    out.append(MatrixShape(f"L{l}.fused", rows, x_dim + R, self.block_size))
                if self.projection is not None:
                    out.append(MatrixShape(f"L{l}.proj", R, H, self.block_size))
                x_dim = R
            else:
                rows = 2 * H
                if split:
                    out.append(MatrixShape(f"L{l}.W_in", rows, x_dim, io))
                    out.append(MatrixShape(f"L{l}.W_rec", rows, H, self.block_size))
                    out.append(MatrixShape(f"L{l}.cand_x", H, x_dim, io))
                else:
                    out.append(MatrixShape(f"L{l}.fused", rows, x_dim + H, self.block_size))
                    out.append(MatrixShape(f"L{l}.cand_x", H, x_dim, self.block_size))
                out.append(MatrixShape(f"L{l}.cand_c", H, H, self.block_size))
                x_dim = H
        return out

    def vector_parameters(self):
        """Uncompressed per-layer vectors: biases plus LSTM peephole diagonals."""
        total = 0
        for H in self.layer_sizes:
            total += 7 * H if self.cell == "lstm" else 3 * H
        return total

    def pointwise_mults(self):
        """Point-wise products per step (peepholes, gate blends)."""
        total = 0
        for H in self.layer_sizes:
            total += 6 * H if self.cell == "lstm" else 3 * H
        return total

    def divisible(self):
        return all(
            m.rows % m.block_size == 0 and m.cols % m.block_size == 0
            for m in self.matrices()
        )


def layer_mult_count(rows, cols, block_size):
    """Real multiplications of one decoupled block-circulant matvec."""
    if not is_power_of_two(block_size):
        raise PartitionError(f"block size must be a power of two, got {block_size}")
    if rows % block_size or cols % block_size:
        raise PartitionError(
            f"block size {block_size} does not divide matrix shape {rows}x{cols}"
        )
    p = rows // block_size
    q = cols // block_size
    fft_cost = fft_real_mult_count(block_size)
    elem_cost = spectral_product_mult_count(block_size)
    return q * fft_cost + p * q * elem_cost + p * fft_cost


def model_mult_count(spec: LayerSpec):
    """Real multiplications per time step for the whole model."""
    total = sum(layer_mult_count(m.rows, m.cols, m.block_size) for m in spec.matrices())
    return total + spec.pointwise_mults()


def normalized_model_ratio(spec: LayerSpec):
    dense = model_mult_count(replace(spec, block_size=1, io_block_size=None))
    return model_mult_count(spec) / dense


def normalized_curve(layer_size, max_block=SWEEP_MAX_BLOCK):
    """(block size, normalized multiplication ratio) for an n x n matrix."""
    dense = layer_mult_count(layer_size, layer_size, 1)
    out = []
    block = 1
    while block <= min(layer_size, max_block):
        out.append((block, layer_mult_count(layer_size, layer_size, block) / dense))
        block *= 2
    return out


def model_parameter_count(spec: LayerSpec):
    matrix_params = sum((m.rows * m.cols) // m.block_size for m in spec.matrices())
    return matrix_params + spec.vector_parameters()


def dense_parameter_count(spec: LayerSpec):
    return sum(m.rows * m.cols for m in spec.matrices()) + spec.vector_parameters()


def model_compression_ratio(spec: LayerSpec):
    """End-to-end parameter ratio, biases and diagonals uncompressed."""
    return dense_parameter_count(spec) / model_parameter_count(spec)


def model_storage_bytes(spec: LayerSpec, bits_per_weight):
    """Bytes to hold every parameter at the given fixed-point width."""
    return math.ceil(model_parameter_count(spec) * bits_per_weight / 8)


def min_block_size_for_capacity(spec: LayerSpec, bits_per_weight, capacity_bytes,
                                reserve_fraction=DEFAULT_RESERVE):
    """Smallest power-of-two block size whose storage fits the budget.

    Block sizes that do not divide some matrix dimension are skipped: they
    are not realizable. Nothing fitting up to 1024 raises infeasibility.
    """
    if capacity_bytes <= 0:
        raise ValueError("capacity must be positive")
    if not 0 <= reserve_fraction < 1:
        raise ValueError("reserve fraction must be in [0, 1)")
    budget = (1.0 - reserve_fraction) * capacity_bytes
    block = 1
    while block <= MAX_BLOCK_SEARCH:
        candidate = replace(spec, block_size=block, io_block_size=None)
        if candidate.divisible() and model_storage_bytes(candidate, bits_per_weight) <= budget:
            return block
        block *= 2
    raise InfeasibleCapacityError(
        f"no block size up to {MAX_BLOCK_SEARCH} fits {capacity_bytes} bytes "
        f"at {bits_per_weight}-bit weights with reserve {reserve_fraction}"
    )


def pe_count(dsp_total, lut_total, dsp_per_pe, lut_per_pe):
    """Processing-element budget: min over the DSP and LUT resource floors."""
    if dsp_per_pe <= 0 or lut_per_pe <= 0:
        raise ValueError("per-PE resource costs must be positive")
    if dsp_total < 0 or lut_total < 0:
        raise ValueError("resource totals must be non-negative")
    return min(dsp_total // dsp_per_pe, lut_total // lut_per_pe)


@dataclass
class CostReport:
    spec: LayerSpec
    mult_count: int
    normalized_ratio: float
    parameter_count: int
    dense_parameter_count: int
    compression_ratio: float
    bits_per_weight: int
    storage_bytes: int
    capacity_bytes: int | None
    reserve_fraction: float
    bram_fits: bool | None
    pe_estimate: int | None
    sweep: list = field(default_factory=list)

    def as_dict(self):
        d = {
            "cell": self.spec.cell,
            "layer_sizes": list(self.spec.layer_sizes),
            "input_dim": self.spec.input_dim,
            "projection": self.spec.projection,
            "block_size": self.spec.block_size,
            "io_block_size": self.spec.io_block_size,
            "mult_count": self.mult_count,
            "normalized_ratio": self.normalized_ratio,
            "parameter_count": self.parameter_count,
            "dense_parameter_count": self.dense_parameter_count,
            "compression_ratio": self.compression_ratio,
            "bits_per_weight": self.bits_per_weight,
            "storage_bytes": self.storage_bytes,
            "capacity_bytes": self.capacity_bytes,
            "reserve_fraction": self.reserve_fraction,
            "bram_fits": self.bram_fits,
            "pe_estimate": self.pe_estimate,
            "sweep": [[b, r] for b, r in self.sweep],
        }
        return d

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2)

    def lines(self):
        rows = [
            ("cell", self.spec.cell),
            ("layer sizes", "-".join(str(h) for h in self.spec.layer_sizes)),
            ("input dim", self.spec.input_dim),
            ("projection", self.spec.projection if self.spec.projection else "-"),
            ("block size", self.spec.block_size),
            ("io block size", self.spec.io_block_size if self.spec.io_block_size else "-"),
            ("mults / step", self.mult_count),
            ("normalized ratio", f"{self.normalized_ratio:.6f}"),
            ("parameters", self.parameter_count),
            ("dense parameters", self.dense_parameter_count),
            ("compression", f"{self.compression_ratio:.2f} : 1"),
            ("weight bits", self.bits_per_weight),
            ("storage bytes", self.storage_bytes),
        ]
        if self.capacity_bytes is not None:
            rows.append(("capacity bytes", self.capacity_bytes))
            rows.append(("reserve", f"{self.reserve_fraction:.3f}"))
            rows.append(("fits in BRAM", "yes" if self.bram_fits else "NO"))
        if self.pe_estimate is not None:
            rows.append(("PE estimate", self.pe_estimate))
        width = max(len(str(k)) for k, _ in rows)
        out = [f"{k:<{width}}  {v}" for k, v in rows]
        out.append("")
        out.append(f"{'block':>5}  {'ratio':>10}")
        for b, r in self.sweep:
            out.append(f"{b:>5}  {r:>10.6f}")
        return out


def cost_report(spec: LayerSpec, bits_per_weight=12, capacity_bytes=None,
                reserve_fraction=DEFAULT_RESERVE, pe_inputs=None):
    if not spec.divisible():
        raise PartitionError(
            f"block sizes {spec.block_size}/{spec.effective_io_block} do not divide "
            "every matrix dimension"
        )
    storage = model_storage_bytes(spec, bits_per_weight)
    fits = None
    if capacity_bytes is not None:
        fits = storage <= (1.0 - reserve_fraction) * capacity_bytes
    pe = pe_count(*pe_inputs) if pe_inputs else None
    return CostReport(
        spec=spec,
        mult_count=model_mult_count(spec),
        normalized_ratio=normalized_model_ratio(spec),
        parameter_count=model_parameter_count(spec),
        dense_parameter_count=dense_parameter_count(spec),
        compression_ratio=model_compression_ratio(spec),
        bits_per_weight=bits_per_weight,
        storage_bytes=storage,
        capacity_bytes=capacity_bytes,
        reserve_fraction=reserve_fraction,
        bram_fits=fits,
        pe_estimate=pe,
        sweep=normalized_curve(max(spec.layer_sizes)),
    )


@dataclass
class OracleCall:
    spec: LayerSpec
    metric: float
    degradation: float
    step: str
    accepted: bool


@dataclass
class ExplorationResult:
    chosen: LayerSpec
    baseline_metric: float
    calls: list
    lower_bound: int
    upper_bound: int
    constraint_violated: bool
    log: list


def _divisible_ladder(base_spec, lower, upper):
    ladder = []
    block = lower
    while block <= upper:
        if replace(base_spec, block_size=block, io_block_size=None).divisible():
            ladder.append(block)
        block *= 2
    return ladder


def phase1_explore(base_spec: LayerSpec, accuracy_oracle, capacity_bytes, tolerance,
                   baseline_metric, *, bits_per_weight=12,
                   reserve_fraction=DEFAULT_RESERVE, upper_bound=64):
    """Three-step model derivation under an accuracy-degradation budget.

    accuracy_oracle maps a LayerSpec to a task metric (higher is better);
    degradation is measured against baseline_metric. upper_bound caps the
    block-size search (64, or 32 via configuration). At most 6 oracle
    calls are spent; the chosen spec always fits the storage budget.
    """
    if base_spec.cell != "lstm":
        raise ValueError("the sanity check starts from the LSTM baseline model")
    if upper_bound not in (32, 64):
        raise ValueError("upper_bound must be 32 or 64")
    log = []
    calls = []

    def consult(spec, step):
        metric = accuracy_oracle(spec)
        degradation = baseline_metric - metric
        accepted = degradation <= tolerance
        calls.append(OracleCall(spec, metric, degradation, step, accepted))
        log.append(
            f"{step}: cell={spec.cell} block={spec.block_size} "
            f"io={spec.effective_io_block} metric={metric:.6f} "
            f"degradation={degradation:.6f} -> {'accept' if accepted else 'reject'}"
        )
        return accepted

    # Step One: storage sanity check gives the lower bound
    lower = min_block_size_for_capacity(base_spec, bits_per_weight, capacity_bytes,
                                        reserve_fraction)
    ladder = _divisible_ladder(base_spec, lower, upper_bound)
    if not ladder:
        raise PartitionError(
            f"no realizable block size between {lower} and {upper_bound}"
        )
    upper = ladder[-1]
    log.append(f"step-1: capacity {capacity_bytes} B at {bits_per_weight}-bit, "
               f"reserve {reserve_fraction} -> block size bounds [{lower}, {upper}]")

    # Step Two: largest block size within bounds meeting the tolerance,
    # found by bisection over the power-of-two ladder
    lo, hi = 0, len(ladder) - 1
    best = None
    while lo <= hi:
        mid = (lo + hi + 1) // 2
        spec = replace(base_spec, block_size=ladder[mid], io_block_size=None)
        if consult(spec, "step-2"):
            best = mid
            lo = mid + 1
        else:
            hi = mid - 1

    if best is None:
        chosen = replace(base_spec, block_size=lower, io_block_size=None)
        log.append("step-2: no block size met the tolerance; returning the "
                   "lower-bound spec with the constraint violated")
        return ExplorationResult(chosen, baseline_metric, calls, lower, upper,
                                 True, log)
    chosen = replace(base_spec, block_size=ladder[best], io_block_size=None)
    log.append(f"step-2: selected block size {chosen.block_size}")

    # Step Three a: swap LSTM for GRU at the fixed block size
    gru = LayerSpec("gru", chosen.layer_sizes, chosen.input_dim, None,
                    chosen.block_size)
    if gru.divisible():
        if consult(gru, "step-3-gru"):
            chosen = gru
            log.append("step-3: switched to GRU")
        else:
            log.append("step-3: kept LSTM")
    else:
        log.append("step-3: GRU variant not realizable at this block size; kept LSTM")

    # Step Three b: one doubled block size for the input-side matrices
    doubled = replace(chosen, io_block_size=2 * chosen.block_size)
    if doubled.divisible() and doubled.io_block_size <= MAX_BLOCK_SEARCH:
        if consult(doubled, "step-3-io"):
            chosen = doubled
            log.append(f"step-3: doubled input/output block size to {doubled.io_block_size}")
        else:
            log.append("step-3: kept the uniform block size")
    else:
        log.append("step-3: doubled input/output block size not realizable; skipped")

    assert len(calls) <= 6, "oracle budget exceeded"
    assert model_storage_bytes(chosen, bits_per_weight) <= (
        (1.0 - reserve_fraction) * capacity_bytes
    ), "chosen spec violates the storage budget"
    return ExplorationResult(chosen, baseline_metric, calls, lower, upper, False, log)
