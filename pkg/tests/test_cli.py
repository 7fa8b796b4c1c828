import json

import numpy as np
import pytest

from smsraki.cli import load_config, main
from smsraki.dataio import load_dataset
from smsraki.errors import ConfigError


def _write_config(tmp_path, **overrides):
    cfg = {
        "sim": {
            "grid": 16,
            "coils": 2,
            "sms_factor": 2,
            "frames": 6,
            "perturbation": 0.02,
            "noise_sigma": 0.01,
        },
        "grid": {
            "num_layers": [1],
            "filter_size": [3],
            "num_filters": [32],
            "penultimate_filters": [64],
            "batch_norm": [False],
            "dropout": [False],
            "split_slice": [True],
        },
        "train": {"max_epochs": 5},
        "eval_frames": 3,
        "seeds": [1],
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_unknown_top_level_key_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"simulator": {}}))
    with pytest.raises(ConfigError, match="simulator"):
        load_config(path)


def test_unknown_nested_key_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"sim": {"grid": 16, "bogus": 1}}))
    with pytest.raises(ConfigError, match="bogus"):
        load_config(path)


def test_defaults_fill_in(tmp_path):
    path = tmp_path / "min.json"
    path.write_text("{}")
    cfg = load_config(path)
    assert cfg["sim"]["grid"] == 32
    assert cfg["grid"].size() == 3072
    assert cfg["seeds"] == [1, 2, 3, 4, 5]


def test_simulate_and_grid_and_report(tmp_path):
    cfg_path = _write_config(tmp_path)
    ds_path = tmp_path / "sim.smsdat"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(ds_path)]) == 0
    ts = load_dataset(ds_path)
    assert ts.grid == (16, 16) and ts.n == 2 and ts.coil_count == 2

    outdir = tmp_path / "out"
    assert main(["grid", "--config", str(cfg_path), "--out", str(outdir)]) == 0
    records_path = outdir / "records.csv"
    assert records_path.exists()
    lines = records_path.read_text().strip().split("\n")
    assert len(lines) == 2  # header + one combo

    assert main(["report", "--records", str(records_path), "--out", str(outdir)]) == 0
    summary = json.loads((outdir / "summary.json").read_text())
    assert "percentile_convention" in summary
    assert "1" in summary["groups"]
    assert (outdir / "normalized.csv").exists()


def test_train_and_eval_with_maps(tmp_path):
    cfg_path = _write_config(tmp_path)
    ds_path = tmp_path / "sim.smsdat"
    main(["simulate", "--config", str(cfg_path), "--out", str(ds_path)])
    netdir = tmp_path / "nets"
    rc = main(
        [
            "train",
            "--dataset",
            str(ds_path),
            "--out",
            str(netdir),
            "--layers",
            "1",
            "--filter-size",
            "3",
            "--epochs",
            "10",
        ]
    )
    assert rc == 0
    assert len(list(netdir.glob("net_s*_c*.rakinet"))) == 4  # 2 slices x 2 coils
    assert (netdir / "train.json").exists()

    eval_path = tmp_path / "eval.json"
    mapdir = tmp_path / "maps"
    rc = main(
        [
            "eval",
            "--dataset",
            str(ds_path),
            "--nets",
            str(netdir),
            "--out",
            str(eval_path),
            "--eval-frames",
            "3",
            "--maps",
            str(mapdir),
        ]
    )
    assert rc == 0
    result = json.loads(eval_path.read_text())
    assert np.isfinite(result["mean_l1"])
    assert len(result["frame_l1"]) == 3
    for s in range(2):
        assert (mapdir / f"percent_error_s{s}.pgm").exists()
        assert (mapdir / f"percent_error_s{s}.f64").exists()
    assert (mapdir / "maps.json").exists()


def test_grid_on_existing_dataset(tmp_path):
    cfg_path = _write_config(tmp_path)
    ds_path = tmp_path / "sim.smsdat"
    main(["simulate", "--config", str(cfg_path), "--out", str(ds_path), "--seed", "9"])
    outdir = tmp_path / "gridout"
    rc = main(
        [
            "grid",
            "--config",
            str(cfg_path),
            "--out",
            str(outdir),
            "--dataset",
            str(ds_path),
        ]
    )
    assert rc == 0
    lines = (outdir / "records.csv").read_text().strip().split("\n")
    assert lines[1].startswith("9,")  # seed taken from the container


def test_workers_env_override(tmp_path, monkeypatch):
    cfg_path = _write_config(tmp_path)
    ds_path = tmp_path / "sim.smsdat"
    main(["simulate", "--config", str(cfg_path), "--out", str(ds_path)])
    monkeypatch.setenv("SMSRAKI_WORKERS", "2")
    outdir = tmp_path / "envout"
    rc = main(
        ["grid", "--config", str(cfg_path), "--out", str(outdir), "--dataset", str(ds_path)]
    )
    assert rc == 0
    assert (outdir / "records.csv").exists()


def test_missing_dataset_exit_code(tmp_path):
    rc = main(
        ["eval", "--dataset", str(tmp_path / "missing"), "--nets", ".", "--out", "x"]
    )
    assert rc == 2


def test_bad_config_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"nope": 1}))
    rc = main(["simulate", "--config", str(path), "--out", str(tmp_path / "x")])
    assert rc == 2
