import numpy as np
import pytest

from bcrnn.cells import (
    CellState,
    GRUParams,
    LSTMParams,
    gru_step,
    initial_state,
    lstm_step,
    run_sequence,
    sigmoid,
)
from bcrnn.circulant import BlockCirculantMatrix, TransformCounters, expand_to_dense
from bcrnn.errors import DimensionMismatchError, NumericError, PartitionError

from oracles import gru_step_dense, lstm_step_dense


def zeros_lstm(X=4, H=4, block=2, proj=None, gate="sigmoid"):
    R = proj if proj is not None else H
    fused = BlockCirculantMatrix(4 * H, X + R, block,
                                 np.zeros((4 * H // block, (X + R) // block, block)))
    projection = None
    if proj is not None:
        projection = BlockCirculantMatrix(proj, H, block,
                                          np.zeros((proj // block, H // block, block)))
    z = np.zeros(H)
    return LSTMParams(fused, z, z, z, z, z, z, z, projection, X, gate)


def identity_block_circulant(n, block):
    gen = np.zeros((n // block, n // block, block))
    for d in range(n // block):
        gen[d, d, 0] = 1.0
    return BlockCirculantMatrix(n, n, block, gen)


class TestLSTMStep:
    def test_all_zero_weights_no_projection(self):
        p = zeros_lstm(X=4, H=4, block=2)
        y, s = lstm_step(p, np.zeros(4), initial_state(p))
        # sigma(0)=0.5 everywhere: c = 0.5 * 0.5
        np.testing.assert_allclose(s.c, 0.25 * np.ones(4), atol=1e-15)
        np.testing.assert_allclose(y, 0.5 * np.tanh(0.25) * np.ones(4), atol=1e-15)

    def test_all_zero_weights_zero_projection(self):
        p = zeros_lstm(X=4, H=4, block=2, proj=4)
        y, s = lstm_step(p, np.zeros(4), initial_state(p))
        np.testing.assert_allclose(s.c, 0.25 * np.ones(4), atol=1e-15)
        np.testing.assert_array_equal(y, np.zeros(4))

    def test_identity_projection_pinned_value(self):
        base = zeros_lstm(X=4, H=4, block=2, proj=4)
        p = LSTMParams(base.fused, base.w_ic, base.w_fc, base.w_oc,
                       base.b_i, base.b_f, base.b_c, base.b_o,
                       identity_block_circulant(4, 2), 4)
        y, _ = lstm_step(p, np.zeros(4), initial_state(p))
        np.testing.assert_allclose(y, 0.122459 * np.ones(4), atol=1e-6)

    @pytest.mark.parametrize("gate", ["sigmoid", "tanh"])
    def test_matches_dense_reference(self, gate, rng):
        p = LSTMParams.random(rng, input_dim=4, hidden_dim=8, block_size=2,
                              projection_dim=8, gate_activation=gate)
        H = 8
        dense_fused = expand_to_dense(p.fused)
        W = {
            "Wi": dense_fused[:H], "Wf": dense_fused[H:2 * H],
            "Wg": dense_fused[2 * H:3 * H], "Wo": dense_fused[3 * H:],
            "wic": p.w_ic, "wfc": p.w_fc, "woc": p.w_oc,
            "bi": p.b_i, "bf": p.b_f, "bc": p.b_c, "bo": p.b_o,
            "Wym": expand_to_dense(p.projection),
        }
        state = initial_state(p)
        c_ref, y_ref = state.c, state.y
        for _ in range(20):
            x = rng.uniform(-1, 1, size=4)
            y, state = lstm_step(p, x, state)
            y_ref, c_ref = lstm_step_dense(W, x, c_ref, y_ref, gate=gate)
            np.testing.assert_allclose(y, y_ref, atol=1e-9)
            np.testing.assert_allclose(state.c, c_ref, atol=1e-9)

    def test_two_matvecs_per_step_with_projection(self, rng):
        p = LSTMParams.random(rng, 4, 8, 2, projection_dim=8)
        counters = TransformCounters()
        lstm_step(p, rng.normal(size=4), initial_state(p), counters)
        assert counters.matvec_calls == 2  # fused + projection; peepholes are point-wise

    def test_one_matvec_without_projection(self, rng):
        p = LSTMParams.random(rng, 4, 8, 2)
        counters = TransformCounters()
        lstm_step(p, rng.normal(size=4), initial_state(p), counters)
        assert counters.matvec_calls == 1

    def test_gate_ranges(self, rng):
        p = LSTMParams.random(rng, 4, 8, 2, scale=2.0)
        state = initial_state(p)
        for _ in range(200):
            y, state = lstm_step(p, rng.uniform(-5, 5, size=4), state)
        assert np.all(np.isfinite(state.c))
        assert np.all(np.abs(y) < 1.0)  # o * tanh(c) stays in (-1, 1)

    def test_non_finite_input_rejected(self, rng):
        p = LSTMParams.random(rng, 4, 8, 2)
        with pytest.raises(NumericError):
            lstm_step(p, np.array([1.0, np.nan, 0, 0]), initial_state(p))

    def test_dimension_mismatch(self, rng):
        p = LSTMParams.random(rng, 4, 8, 2)
        with pytest.raises(DimensionMismatchError):
            lstm_step(p, np.zeros(5), initial_state(p))

    def test_divisibility_reports_padding(self):
        with pytest.raises(PartitionError, match="pad the input dimension by 2"):
            LSTMParams.random(np.random.default_rng(0), input_dim=6, hidden_dim=8,
                              block_size=4)


class TestGRUStep:
    def test_all_zeros_fixed_point(self):
        H, X = 4, 4
        zeros_mat = lambda m, n: BlockCirculantMatrix(m, n, 2, np.zeros((m // 2, n // 2, 2)))
        p = GRUParams(zeros_mat(2 * H, X + H), zeros_mat(H, X), zeros_mat(H, H),
                      np.zeros(H), np.zeros(H), np.zeros(H), X)
        c, _ = gru_step(p, np.zeros(X), initial_state(p))
        np.testing.assert_array_equal(c, np.zeros(H))

    def test_saturated_update_gate_ignores_state(self, rng):
        H, X = 4, 4
        zeros_mat = lambda m, n: BlockCirculantMatrix(m, n, 2, np.zeros((m // 2, n // 2, 2)))
        p = GRUParams(zeros_mat(2 * H, X + H), zeros_mat(H, X), zeros_mat(H, H),
                      np.zeros(H), 100.0 * np.ones(H), np.zeros(H), X)
        prev = CellState(c=rng.normal(size=H), y=np.zeros(H), t=3)
        c, _ = gru_step(p, np.zeros(X), prev)
        np.testing.assert_allclose(c, np.zeros(H), atol=1e-12)

    def test_matches_dense_reference(self, rng):
        p = GRUParams.random(rng, input_dim=4, hidden_dim=8, block_size=2)
        H = 8
        dense_fused = expand_to_dense(p.fused)
        W = {
            "Wr": dense_fused[:H], "Wz": dense_fused[H:],
            "Wcx": expand_to_dense(p.candidate_x), "Wcc": expand_to_dense(p.candidate_c),
            "br": p.b_r, "bz": p.b_z, "bc": p.b_c,
        }
        state = initial_state(p)
        c_ref = state.c
        for _ in range(20):
            x = rng.uniform(-1, 1, size=4)
            c, state = gru_step(p, x, state)
            c_ref = gru_step_dense(W, x, c_ref)
            np.testing.assert_allclose(c, c_ref, atol=1e-9)

    def test_three_matvecs_per_step(self, rng):
        p = GRUParams.random(rng, 4, 8, 2)
        counters = TransformCounters()
        gru_step(p, rng.normal(size=4), initial_state(p), counters)
        assert counters.matvec_calls == 3


class TestRunSequence:
    def test_single_step_reduces_to_step(self, rng):
        p = LSTMParams.random(rng, 4, 8, 2)
        x = rng.normal(size=(1, 4))
        seq_out = run_sequence(p, x)
        step_out, _ = lstm_step(p, x[0], initial_state(p))
        np.testing.assert_array_equal(seq_out[0], step_out)

    def test_no_recurrence_means_identical_outputs(self, rng):
        # zero weights and biases: the state cannot influence later steps
        p = zeros_lstm(X=4, H=4, block=2, proj=4)
        xs = np.tile(rng.normal(size=4), (5, 1))
        outs = run_sequence(p, xs)
        for t in range(1, 5):
            np.testing.assert_array_equal(outs[t], outs[0])

    def test_prefix_property(self, rng):
        p = GRUParams.random(rng, 4, 8, 2)
        xs = rng.normal(size=(10, 4))
        full = run_sequence(p, xs)
        for k in (1, 4, 7):
            np.testing.assert_array_equal(run_sequence(p, xs[:k]), full[:k])

    def test_long_sequence_stays_finite(self, rng):
        p = LSTMParams.random(rng, 4, 8, 2, scale=1.0)
        xs = rng.uniform(-2, 2, size=(10_000, 4))
        outs = run_sequence(p, xs)
        assert np.all(np.isfinite(outs))

    def test_empty_sequence_rejected(self, rng):
        p = LSTMParams.random(rng, 4, 8, 2)
        with pytest.raises(DimensionMismatchError):
            run_sequence(p, np.zeros((0, 4)))

    def test_equivalence_over_100_steps(self, kernel_backend, rng):
        p = LSTMParams.random(rng, 4, 8, 4, projection_dim=8)
        H = 8
        dense_fused = expand_to_dense(p.fused)
        W = {
            "Wi": dense_fused[:H], "Wf": dense_fused[H:2 * H],
            "Wg": dense_fused[2 * H:3 * H], "Wo": dense_fused[3 * H:],
            "wic": p.w_ic, "wfc": p.w_fc, "woc": p.w_oc,
            "bi": p.b_i, "bf": p.b_f, "bc": p.b_c, "bo": p.b_o,
            "Wym": expand_to_dense(p.projection),
        }
        xs = rng.uniform(-1, 1, size=(100, 4))
        outs = run_sequence(p, xs)
        c = np.zeros(H)
        y = np.zeros(H)
        for t in range(100):
            y, c = lstm_step_dense(W, xs[t], c, y)
            np.testing.assert_allclose(outs[t], y, atol=1e-8)


def test_sigmoid_stability():
    assert sigmoid(np.array([800.0]))[0] == 1.0
    assert sigmoid(np.array([-800.0]))[0] == 0.0
    assert sigmoid(np.array([0.0]))[0] == 0.5
