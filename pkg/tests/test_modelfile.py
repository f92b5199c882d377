import numpy as np
import pytest

from bcrnn.admm import TrainedModel
from bcrnn.cells import GRUParams, LSTMParams, run_sequence
from bcrnn.errors import ModelFileError
from bcrnn.modelfile import deserialize_model, read_model, serialize_model, write_model
from bcrnn.quantize import calibrate_formats


def random_trained_model(rng, cell_kind=None, quantized=False):
    cell_kind = cell_kind or rng.choice(["lstm", "gru"])
    H = int(rng.choice([4, 8]))
    X = int(rng.choice([4, 8]))
    block = int(rng.choice([1, 2, 4]))
    if cell_kind == "lstm":
        proj = H if rng.random() < 0.5 else None
        cell = LSTMParams.random(rng, X, H, block, projection_dim=proj,
                                 gate_activation=str(rng.choice(["sigmoid", "tanh"])))
    else:
        cell = GRUParams.random(rng, X, H, block)
    n_out = int(rng.integers(2, 6))
    model = TrainedModel(cell, rng.normal(size=(n_out, cell.output_dim)),
                         rng.normal(size=n_out))
    if quantized:
        calib = [rng.uniform(-1, 1, size=(6, X)) for _ in range(2)]
        model.quantization = calibrate_formats(cell, calib, 12)
    return model


class TestRoundTrip:
    def test_fifty_randomized_models_byte_identical(self):
        rng = np.random.default_rng(77)
        for i in range(50):
            model = random_trained_model(rng, quantized=(i % 3 == 0))
            blob1 = serialize_model(model)
            blob2 = serialize_model(deserialize_model(blob1))
            assert blob1 == blob2, f"model {i} not byte-identical"

    def test_fields_survive(self, rng):
        model = random_trained_model(rng, "lstm", quantized=True)
        back = deserialize_model(serialize_model(model))
        np.testing.assert_array_equal(back.cell.fused.generators,
                                      model.cell.fused.generators)
        np.testing.assert_array_equal(back.head_w, model.head_w)
        np.testing.assert_array_equal(back.head_b, model.head_b)
        assert back.cell.gate_activation == model.cell.gate_activation
        assert back.cell.input_dim == model.cell.input_dim
        assert back.quantization.bits == model.quantization.bits
        assert sorted(back.quantization.formats) == sorted(model.quantization.formats)
        for name, codes in model.quantization.codes.items():
            np.testing.assert_array_equal(back.quantization.codes[name], codes)

    def test_behaviour_survives(self, rng):
        model = random_trained_model(rng, "gru")
        back = deserialize_model(serialize_model(model))
        xs = rng.uniform(-1, 1, size=(7, model.cell.input_dim))
        np.testing.assert_array_equal(run_sequence(model.cell, xs),
                                      run_sequence(back.cell, xs))

    def test_file_roundtrip(self, rng, tmp_path):
        model = random_trained_model(rng, "lstm")
        path = tmp_path / "model.ernn"
        write_model(path, model)
        again = tmp_path / "again.ernn"
        write_model(again, read_model(path))
        assert path.read_bytes() == again.read_bytes()


class TestCorruption:
    def test_bad_magic(self, rng):
        blob = bytearray(serialize_model(random_trained_model(rng)))
        blob[:4] = b"NOPE"
        with pytest.raises(ModelFileError, match="magic"):
            deserialize_model(bytes(blob))

    def test_flipped_byte_fails_checksum(self, rng):
        blob = bytearray(serialize_model(random_trained_model(rng)))
        blob[len(blob) // 2] ^= 0xFF
        with pytest.raises(ModelFileError, match="checksum"):
            deserialize_model(bytes(blob))

    def test_truncation(self, rng):
        blob = serialize_model(random_trained_model(rng))
        with pytest.raises(ModelFileError):
            deserialize_model(blob[: len(blob) // 2])

    def test_trailing_garbage(self, rng):
        blob = serialize_model(random_trained_model(rng))
        with pytest.raises(ModelFileError):
            deserialize_model(blob + b"XX")

    def test_empty(self):
        with pytest.raises(ModelFileError):
            deserialize_model(b"")
