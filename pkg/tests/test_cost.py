import numpy as np
import pytest

from bcrnn.circulant import SpectralWeights, TransformCounters, matvec_decoupled, random_block_circulant
from bcrnn.cost import (
    LayerSpec,
    cost_report,
    layer_mult_count,
    min_block_size_for_capacity,
    model_compression_ratio,
    model_parameter_count,
    model_storage_bytes,
    normalized_curve,
    phase1_explore,
    pe_count,
)
from bcrnn.errors import InfeasibleCapacityError, PartitionError

ASR_LSTM = LayerSpec("lstm", (1024, 1024), 160, projection=512, block_size=8)


class TestLayerMultCount:
    def test_block_one_is_dense(self):
        assert layer_mult_count(512, 512, 1) == 512 * 512
        assert layer_mult_count(64, 128, 1) == 64 * 128

    @pytest.mark.parametrize("m,n,L", [
        (512, 512, 2), (512, 512, 8), (512, 512, 64),
        (256, 512, 4), (64, 128, 16), (8, 8, 4), (512, 256, 1),
    ])
    def test_matches_instrumented_execution(self, m, n, L, rng):
        sw = SpectralWeights.from_matrix(random_block_circulant(rng, m, n, L))
        counters = TransformCounters()
        matvec_decoupled(sw, rng.normal(size=n), counters)
        assert layer_mult_count(m, n, L) == counters.real_mults

    def test_exhaustive_small_sizes(self, rng):
        for L in (1, 2, 4, 8, 16, 32, 64):
            for blocks_r in (1, 3):
                for blocks_c in (1, 2):
                    m, n = blocks_r * L, blocks_c * L
                    sw = SpectralWeights.from_matrix(random_block_circulant(rng, m, n, L))
                    counters = TransformCounters()
                    matvec_decoupled(sw, rng.normal(size=n), counters)
                    assert layer_mult_count(m, n, L) == counters.real_mults

    def test_partition_errors(self):
        with pytest.raises(PartitionError):
            layer_mult_count(100, 100, 8)
        with pytest.raises(PartitionError):
            layer_mult_count(96, 96, 3)


class TestCurve:
    @pytest.mark.parametrize("n", [64, 128, 256, 512, 1024])
    def test_initial_compression_always_helps(self, n):
        curve = dict(normalized_curve(n))
        assert curve[2] < curve[1] == 1.0

    def test_sweep_covers_requested_range(self):
        blocks = [b for b, _ in normalized_curve(512)]
        assert blocks == [1, 2, 4, 8, 16, 32, 64, 128]


class TestStorage:
    def test_single_matrix_arithmetic(self):
        spec = LayerSpec("lstm", (1024,), 0, None, 8)
        # pinned arithmetic for one 1024x1024 matrix at block 8, 12-bit
        assert (1024 * 1024 // 8) * 12 // 8 == 196_608

    def test_block_one_is_dense_storage(self):
        dense = LayerSpec("gru", (64,), 32, None, 1)
        compressed = LayerSpec("gru", (64,), 32, None, 8)
        assert model_storage_bytes(dense, 16) > model_storage_bytes(compressed, 16)
        assert model_parameter_count(dense) == sum(
            m.rows * m.cols for m in dense.matrices()
        ) + dense.vector_parameters()

    def test_asr_model_fits_4mb_at_block_8(self):
        storage = model_storage_bytes(ASR_LSTM, 12)
        assert storage <= (1 - 0.125) * 4 * 2**20

    def test_asr_min_block_is_4(self):
        assert min_block_size_for_capacity(ASR_LSTM, 12, 4 * 2**20, 0.125) == 4

    def test_end_to_end_compression_near_block_size(self):
        # biases and peephole diagonals stay uncompressed
        ratio = model_compression_ratio(ASR_LSTM)
        assert 7.8 <= ratio < 8.0

    def test_exact_capacity_boundary(self):
        spec = LayerSpec("gru", (64,), 64, None, 1)
        at_8 = model_storage_bytes(LayerSpec("gru", (64,), 64, None, 8), 16)
        assert min_block_size_for_capacity(spec, 16, at_8, 0.0) == 8

    def test_huge_capacity_gives_block_one(self):
        assert min_block_size_for_capacity(ASR_LSTM, 12, 10**12) == 1

    def test_infeasible_capacity(self):
        with pytest.raises(InfeasibleCapacityError):
            min_block_size_for_capacity(ASR_LSTM, 12, 64)


class TestPECount:
    def test_pinned_platforms(self):
        assert pe_count(3600, 859200, 60, 20000) == 42
        assert pe_count(2760, 331680, 46, 8000) == 41

    def test_zero_when_too_expensive(self):
        assert pe_count(100, 1000, 200, 2000) == 0

    def test_monotonicity(self):
        base = pe_count(3600, 859200, 60, 20000)
        assert pe_count(7200, 859200 * 2, 60, 20000) >= base
        assert pe_count(3600, 859200, 120, 40000) <= base

    def test_zero_denominator(self):
        with pytest.raises(ValueError):
            pe_count(100, 100, 0, 10)


class TestCostReport:
    def test_block_one_ratio_exactly_one(self):
        spec = LayerSpec("lstm", (64,), 32, None, 1)
        report = cost_report(spec, 12)
        assert report.normalized_ratio == 1.0

    def test_json_and_text_roundtrip(self):
        report = cost_report(ASR_LSTM, 12, 4 * 2**20, pe_inputs=(3600, 859200, 60, 20000))
        assert report.bram_fits is True
        assert report.pe_estimate == 42
        d = report.as_dict()
        assert d["block_size"] == 8
        assert len(report.lines()) > 10

    def test_indivisible_spec_rejected(self):
        with pytest.raises(PartitionError):
            cost_report(LayerSpec("lstm", (100,), 7, None, 8), 12)


class MockOracle:
    """Scripted metric: degradation grows with block size."""

    def __init__(self, baseline=1.0, slope=0.01, io_penalty=0.0, gru_penalty=0.0):
        self.baseline = baseline
        self.slope = slope
        self.io_penalty = io_penalty
        self.gru_penalty = gru_penalty
        self.calls = []

    def __call__(self, spec):
        self.calls.append(spec)
        metric = self.baseline - self.slope * np.log2(spec.block_size)
        if spec.io_block_size not in (None, spec.block_size):
            metric -= self.io_penalty
        if spec.cell == "gru":
            metric -= self.gru_penalty
        return metric


BASE = LayerSpec("lstm", (1024, 1024), 512, None, 1)


class TestPhaseOneExplore:
    def test_infinite_tolerance_takes_everything(self):
        oracle = MockOracle()
        result = phase1_explore(BASE, oracle, 4 * 2**20, np.inf, 1.0)
        assert result.chosen.block_size == result.upper_bound == 64
        assert result.chosen.cell == "gru"
        assert result.chosen.io_block_size == 128
        assert len(result.calls) <= 6
        assert not result.constraint_violated

    def test_zero_tolerance_monotone_only_lower_passes(self):
        # degradation strictly positive beyond the lower bound
        lower = min_block_size_for_capacity(BASE, 12, 700_000, 0.125)
        oracle = MockOracle(slope=1.0)
        oracle.baseline = 1.0 + 1.0 * np.log2(lower)  # exactly zero at lower
        result = phase1_explore(BASE, oracle, 700_000, 0.0, 1.0)
        assert result.chosen.block_size == lower

    def test_nothing_passes_sets_flag(self):
        oracle = MockOracle(baseline=0.0)  # every call degrades by >= 1
        result = phase1_explore(BASE, oracle, 4 * 2**20, 0.5, 1.0)
        assert result.constraint_violated
        assert result.chosen.block_size == result.lower_bound
        assert len(result.calls) <= 4  # bisection only, fine tuning skipped

    def test_call_budget_lower8_upper64(self):
        spec = BASE
        capacity = model_storage_bytes(
            LayerSpec("lstm", (1024, 1024), 512, None, 8), 12
        )  # lower bound lands on 8 with zero reserve
        oracle = MockOracle()
        result = phase1_explore(spec, oracle, capacity, np.inf, 1.0,
                                reserve_fraction=0.0)
        assert result.lower_bound == 8
        assert result.upper_bound == 64
        step2 = [c for c in result.calls if c.step == "step-2"]
        step3 = [c for c in result.calls if c.step.startswith("step-3")]
        assert len(step2) <= 3
        assert len(step3) <= 2

    def test_never_returns_bram_violator(self):
        for tol in (0.0, 0.005, 0.02, np.inf):
            oracle = MockOracle(slope=0.01)
            result = phase1_explore(BASE, oracle, 2 * 2**20, tol, 1.0)
            spec = result.chosen
            assert model_storage_bytes(spec, 12) <= 0.875 * 2 * 2**20
            assert len(result.calls) <= 6

    def test_gru_rejected_when_it_degrades(self):
        oracle = MockOracle(gru_penalty=10.0)
        result = phase1_explore(BASE, oracle, 4 * 2**20, 0.5, 1.0)
        assert result.chosen.cell == "lstm"

    def test_io_doubling_rejected_when_it_degrades(self):
        oracle = MockOracle(io_penalty=10.0)
        result = phase1_explore(BASE, oracle, 4 * 2**20, 0.5, 1.0)
        assert result.chosen.io_block_size is None

    def test_upper_bound_32_config(self):
        oracle = MockOracle()
        result = phase1_explore(BASE, oracle, 4 * 2**20, np.inf, 1.0, upper_bound=32)
        assert result.upper_bound == 32
        assert result.chosen.block_size == 32

    def test_gru_base_rejected(self):
        with pytest.raises(ValueError):
            phase1_explore(LayerSpec("gru", (64,), 32, None, 1), MockOracle(),
                           4 * 2**20, 0.1, 1.0)


class TestLayerSpec:
    def test_at_most_two_block_sizes(self):
        LayerSpec("lstm", (64,), 32, None, 8, 16)  # two sizes fine
        with pytest.raises(PartitionError):
            LayerSpec("lstm", (64,), 32, None, 6)

    def test_multilayer_matrix_chain(self):
        spec = LayerSpec("lstm", (1024, 1024), 160, projection=512, block_size=8)
        names = [m.name for m in spec.matrices()]
        assert names == ["L0.fused", "L0.proj", "L1.fused", "L1.proj"]
        dims = {m.name: (m.rows, m.cols) for m in spec.matrices()}
        assert dims["L0.fused"] == (4096, 160 + 512)
        assert dims["L1.fused"] == (4096, 512 + 512)

    def test_io_split_shapes(self):
        spec = LayerSpec("gru", (64,), 32, None, 8, 16)
        by_name = {m.name: m for m in spec.matrices()}
        assert by_name["L0.W_in"].block_size == 16
        assert by_name["L0.W_rec"].block_size == 8
        assert by_name["L0.cand_x"].block_size == 16
