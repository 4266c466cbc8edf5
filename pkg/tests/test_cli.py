"""End-to-end CLI checks on tiny configurations."""

import hashlib
import json

import numpy as np
import pytest

from modrec.cli import main
from modrec.sigfile import read_sigf
from modrec.siggen import generate_dataset, GenSpec


def _write_json(path, data):
    path.write_text(json.dumps(data, indent=2) + "\n")
    return path


def _toy_config(tmp_path, **extra):
    config = {
        "seed": 11,
        "dataset": {"spec": {"schemes": ["BPSK", "QPSK"], "snr_grid_db": [0, 10],
                             "frames_per_class_per_snr": 20, "frame_len": 32,
                             "samples_per_symbol": 4, "seed": 3}},
        "model": {"input_len": 32, "conv_layers": 2, "embed_dim": 8, "heads": 2,
                  "ffn_dim": 16, "tf_layers": 1, "lstm_layers": 1, "lstm_hidden": 8,
                  "num_classes": 2, "dropout": 0.1},
        "train": {"batch_size": 16, "max_epochs": 2, "seed": 5},
        "output_dir": str(tmp_path / "run"),
    }
    config.update(extra)
    return _write_json(tmp_path / "exp.json", config)


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_gen_round_trip(tmp_path):
    spec = {"schemes": ["BPSK", "8PSK"], "snr_grid_db": [-4, 4],
            "frames_per_class_per_snr": 6, "frame_len": 24, "seed": 2}
    spec_path = _write_json(tmp_path / "spec.json", spec)
    out = tmp_path / "data.sigf"
    assert main(["gen", "--spec", str(spec_path), "--out", str(out)]) == 0
    ds = read_sigf(out)
    assert len(ds.frames) == 2 * 2 * 6
    reference = generate_dataset(GenSpec.from_dict(spec))
    for a, b in zip(ds.frames, reference.frames):
        assert np.array_equal(a.samples, b.samples)


def test_gen_deterministic_digests(tmp_path):
    spec = _write_json(tmp_path / "spec.json",
                       {"schemes": ["QPSK"], "snr_grid_db": [0],
                        "frames_per_class_per_snr": 8, "frame_len": 32, "seed": 4})
    a, b = tmp_path / "a.sigf", tmp_path / "b.sigf"
    assert main(["gen", "--spec", str(spec), "--out", str(a)]) == 0
    assert main(["gen", "--spec", str(spec), "--out", str(b)]) == 0
    assert _digest(a) == _digest(b)


def test_gen_default_spec_frame_count(tmp_path):
    out = tmp_path / "default.sigf"
    assert main(["gen", "--out", str(out)]) == 0  # 8 schemes x 20 SNRs x 100 frames
    assert len(read_sigf(out).frames) == 16_000


def test_train_writes_all_artifacts(tmp_path):
    config = _toy_config(tmp_path)
    assert main(["train", "--config", str(config), "--quiet"]) == 0
    run = tmp_path / "run"
    for name in ("config.json", "checkpoint.bin", "history.csv"):
        assert (run / name).exists(), name
    history = (run / "history.csv").read_text().splitlines()
    assert len(history) == 3  # header + 2 epochs


def test_train_ablation_flag_flips_toggle(tmp_path):
    config = _toy_config(tmp_path)
    out = tmp_path / "ablate"
    assert main(["train", "--config", str(config), "--ablation", "no-lstm",
                 "--out-dir", str(out), "--quiet"]) == 0
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["model"]["use_lstm"] is False
    assert echoed["model"]["use_transformer"] is True


def test_train_augment_flags_wire_strategy_and_ratio(tmp_path):
    config = _toy_config(tmp_path)
    out = tmp_path / "aug"
    assert main(["train", "--config", str(config), "--augment", "discrete-ss",
                 "--ratio", "1/16", "--out-dir", str(out), "--quiet"]) == 0
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["train"]["augment"]["strategy"] == "discrete_ss"
    assert echoed["train"]["augment"]["ratio"] == pytest.approx(1 / 16)


def test_set_overrides_dotted_keys(tmp_path):
    config = _toy_config(tmp_path)
    out = tmp_path / "override"
    assert main(["train", "--config", str(config), "--set", "model.tf_layers=2",
                 "--set", "train.max_epochs=1", "--out-dir", str(out), "--quiet"]) == 0
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["model"]["tf_layers"] == 2
    assert echoed["train"]["max_epochs"] == 1


def test_train_then_eval_emits_reports(tmp_path):
    config = _toy_config(tmp_path)
    assert main(["train", "--config", str(config), "--quiet"]) == 0
    data = tmp_path / "data.sigf"
    spec = {"schemes": ["BPSK", "QPSK"], "snr_grid_db": [0, 10],
            "frames_per_class_per_snr": 20, "frame_len": 32,
            "samples_per_symbol": 4, "seed": 3}
    _write_json(tmp_path / "spec.json", spec)
    assert main(["gen", "--spec", str(tmp_path / "spec.json"), "--out", str(data)]) == 0
    out = tmp_path / "evalout"
    assert main(["eval", "--checkpoint", str(tmp_path / "run" / "checkpoint.bin"),
                 "--data", str(data), "--out-dir", str(out),
                 "--low-snr-ref", "0"]) == 0
    for name in ("report.json", "acc_vs_snr.csv", "confusion.csv", "complexity.json"):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert report["low_snr_ref"] == 0.0
    assert set(report["per_snr_accuracy"]) == {"0", "10"}


def test_eval_idempotent(tmp_path):
    config = _toy_config(tmp_path)
    assert main(["train", "--config", str(config), "--quiet"]) == 0
    data = tmp_path / "data.sigf"
    _write_json(tmp_path / "spec.json",
                {"schemes": ["BPSK", "QPSK"], "snr_grid_db": [0, 10],
                 "frames_per_class_per_snr": 20, "frame_len": 32,
                 "samples_per_symbol": 4, "seed": 3})
    assert main(["gen", "--spec", str(tmp_path / "spec.json"), "--out", str(data)]) == 0
    ckpt = str(tmp_path / "run" / "checkpoint.bin")
    for out in ("e1", "e2"):
        assert main(["eval", "--checkpoint", ckpt, "--data", str(data),
                     "--out-dir", str(tmp_path / out), "--low-snr-ref", "0"]) == 0
    assert _digest(tmp_path / "e1" / "report.json") == _digest(tmp_path / "e2" / "report.json")


def test_report_single_and_compare(tmp_path, capsys):
    report = {"per_snr_accuracy": {"0": 0.5, "10": 0.8}, "max_acc": 0.8,
              "low_snr_acc": None, "low_snr_ref": -6.0, "avg_acc": 0.65,
              "confusion": [[1, 0], [0, 1]], "params": 100, "macs": 1000,
              "class_names": ["a", "b"]}
    better = dict(report, per_snr_accuracy={"0": 0.6, "10": 0.9}, max_acc=0.9, avg_acc=0.75)
    for name, rep in (("base", report), ("better", better)):
        (tmp_path / name).mkdir()
        _write_json(tmp_path / name / "report.json", rep)

    assert main(["report", str(tmp_path / "base")]) == 0
    out = capsys.readouterr().out
    assert "0.650" in out

    csv_out = tmp_path / "table.csv"
    assert main(["report", str(tmp_path / "base"), str(tmp_path / "better"),
                 "--out", str(csv_out)]) == 0
    out = capsys.readouterr().out
    assert "better-delta" in out and "+0.100" in out
    lines = csv_out.read_text().splitlines()
    assert lines[0].startswith("run,")
    assert len(lines) == 4  # header, two runs, one delta row


def test_exit_code_2_on_bad_config(tmp_path):
    config = _toy_config(tmp_path)
    raw = json.loads(config.read_text())
    raw["model"]["heads"] = 3  # embed_dim 8 not divisible
    _write_json(config, raw)
    assert main(["train", "--config", str(config), "--quiet"]) == 2


def test_config_error_precedes_artifacts(tmp_path):
    config = _toy_config(tmp_path)
    raw = json.loads(config.read_text())
    raw["train"]["initial_lr"] = -1.0
    _write_json(config, raw)
    assert main(["train", "--config", str(config), "--quiet"]) == 2
    assert not (tmp_path / "run").exists()


def test_exit_code_3_on_numeric_failure(tmp_path):
    config = _toy_config(tmp_path)
    with np.errstate(all="ignore"):
        assert main(["train", "--config", str(config), "--set",
                     "train.initial_lr=1e18", "--quiet"]) == 3


def test_exit_code_4_on_missing_file(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "nope.bin"),
                 "--data", str(tmp_path / "nope.sigf"),
                 "--out-dir", str(tmp_path / "out")]) == 4


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2
