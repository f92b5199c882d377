import json

import numpy as np
import pytest

from bcrnn.cli import main

TINY_TRAIN = {
    "task": "copy",
    "cell": "lstm",
    "hidden": 8,
    "block_size": 2,
    "learning_rate": 0.5,
    "lr_decay": 0.85,
    "epochs_per_iteration": 1,
    "batches_per_epoch": 8,
    "batch_size": 16,
    "max_iterations": 6,
    "tolerance": 1e-3,
    "rho": 5e-3,
    "rho_growth": 1.4,
    "pretrain_epochs": 4,
    "finetune_epochs": 2,
    "seed": 1,
}


@pytest.fixture(scope="module")
def trained_model(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "train.json"
    config.write_text(json.dumps(TINY_TRAIN))
    model = root / "model.ernn"
    code = main(["train", str(config), "-o", str(model)])
    assert code in (0, 1)  # tiny budget may stop before converging
    inputs = root / "inputs.txt"
    rng = np.random.default_rng(5)
    np.savetxt(inputs, rng.uniform(0, 1, size=(11, 6)))
    return root, model, inputs


class TestTrain:
    def test_writes_model_and_trace(self, trained_model):
        root, model, _ = trained_model
        assert model.exists()
        trace = model.with_suffix(".ernn.trace")
        assert trace.exists()
        first = trace.read_text().splitlines()[0]
        assert first.startswith("# k objective task_loss rho")

    def test_block_one_converges_at_iteration_one(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({**TINY_TRAIN, "block_size": 1,
                                      "pretrain_epochs": 0, "finetune_epochs": 0,
                                      "max_iterations": 5}))
        model = tmp_path / "m.ernn"
        assert main(["train", str(config), "-o", str(model)]) == 0
        trace = (tmp_path / "m.ernn.trace").read_text().splitlines()
        assert len(trace) == 2  # header + single iteration

    def test_bad_config_is_usage_error(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({**TINY_TRAIN, "not_a_key": 1}))
        assert main(["train", str(config), "-o", str(tmp_path / "m.ernn")]) == 2

    def test_missing_output_path(self, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps(TINY_TRAIN))
        with pytest.raises(SystemExit) as exc:
            main(["train", str(config)])
        assert exc.value.code == 2


class TestInfer:
    def test_deterministic_output(self, trained_model, capsys):
        root, model, inputs = trained_model
        assert main(["infer", str(model), str(inputs)]) == 0
        out1 = capsys.readouterr().out
        assert main(["infer", str(model), str(inputs)]) == 0
        out2 = capsys.readouterr().out
        assert out1 == out2
        assert len(out1.splitlines()) == 11

    def test_compare_dense_small_deviation(self, trained_model, capsys):
        root, model, inputs = trained_model
        assert main(["infer", str(model), str(inputs), "--compare-dense"]) == 0
        err = capsys.readouterr().err
        line = [l for l in err.splitlines() if l.startswith("max_deviation_vs_dense")][0]
        assert float(line.split()[1]) < 1e-8

    def test_quantized_flag(self, trained_model, capsys):
        root, model, inputs = trained_model
        assert main(["infer", str(model), str(inputs), "--quantized"]) == 0
        captured = capsys.readouterr()
        assert "deviation report" in captured.err
        assert len(captured.out.splitlines()) == 11

    def test_truncated_model_exit_4(self, trained_model, tmp_path):
        root, model, inputs = trained_model
        bad = tmp_path / "bad.ernn"
        bad.write_bytes(model.read_bytes()[:300])
        assert main(["infer", str(bad), str(inputs)]) == 4

    def test_wrong_dimension_exit_5(self, trained_model, tmp_path):
        root, model, _ = trained_model
        wide = tmp_path / "wide.txt"
        np.savetxt(wide, np.zeros((4, 9)))
        assert main(["infer", str(model), str(wide)]) == 5


class TestCost:
    def test_text_report(self, capsys):
        code = main(["cost", "--layers", "512,512", "--block", "8",
                     "--capacity", "4MiB", "--dsp-per-pe", "60",
                     "--lut-per-pe", "20000"])
        assert code == 0
        out = capsys.readouterr().out
        assert "fits in BRAM" in out
        assert "PE estimate" in out

    def test_json_report(self, capsys):
        assert main(["cost", "--layers", "512", "--block", "8", "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["block_size"] == 8
        assert doc["sweep"][0] == [1, 1.0]

    def test_block_one_ratio_exactly_one(self, capsys):
        assert main(["cost", "--layers", "256", "--input", "64", "--block", "1",
                     "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["normalized_ratio"] == 1.0

    def test_indivisible_exit_5(self, capsys):
        assert main(["cost", "--layers", "100", "--input", "60",
                     "--block", "8"]) == 5


class TestExplore:
    def test_tiny_exploration(self, tmp_path, capsys):
        config = tmp_path / "explore.json"
        config.write_text(json.dumps({
            "task": "copy",
            "capacity_bytes": 3000,
            "tolerance": 1.0,
            "cell": "lstm",
            "hidden": 8,
            "block_size": 2,
            "learning_rate": 0.5,
            "epochs_per_iteration": 1,
            "batches_per_epoch": 4,
            "batch_size": 8,
            "max_iterations": 3,
            "pretrain_epochs": 1,
            "seed": 1,
        }))
        assert main(["explore", str(config)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("chosen cell=")
        assert "oracle_calls" in out
        calls = int([l for l in out.splitlines() if l.startswith("oracle_calls")][0].split()[1])
        assert calls <= 6

    def test_infeasible_capacity_exit_6(self, tmp_path):
        config = tmp_path / "explore.json"
        config.write_text(json.dumps({
            "task": "copy",
            "capacity_bytes": 8,
            "tolerance": 1.0,
            "hidden": 8,
            "block_size": 2,
            "max_iterations": 1,
            "pretrain_epochs": 0,
            "batches_per_epoch": 1,
            "epochs_per_iteration": 1,
        }))
        assert main(["explore", str(config)]) == 6
