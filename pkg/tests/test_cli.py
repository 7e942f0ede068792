from __future__ import annotations

import csv
import json

import pytest

from sepdeeponet.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, main
from sepdeeponet.config import load_config, preset_names
from sepdeeponet.data import dataset_checksums

SMALL = """
[problem]
kind = "burgers"
residual_points = [5, 4]
bc_points = 6
test_points = [7, 5]

[data]
n_train = {n_train}
n_test = {n_test}
seed = 7

[data.kernel]
modes = 64

[model]
variant = "separable"
p = 3
r = 2
branch_hidden = [6, 6]
trunk_hidden = [6, 6]

[train]
epochs = 2
"""


def _config(tmp_path, n_train=3, n_test=2, extra=""):
    path = tmp_path / "cfg.toml"
    path.write_text(SMALL.format(n_train=n_train, n_test=n_test) + extra)
    return path


def test_presets_are_bundled_and_parse():
    names = preset_names()
    for name in ("burgers_paper", "burgers_desk", "biot_paper", "biot_desk", "heat_paper", "heat_desk"):
        assert name in names
        assert "kind" in load_config(name)["problem"]


def test_gen_data_split_and_repeatable_checksums(tmp_path, capsys):
    cfg = _config(tmp_path, n_train=6, n_test=4)
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert "6 train / 4 test" in capsys.readouterr().out
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_OK
    assert dataset_checksums(tmp_path / "a") == dataset_checksums(tmp_path / "b")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["arrays"]["u_train"]["shape"][0] == 6


def test_seed_flag_overrides_config(tmp_path):
    cfg = _config(tmp_path)
    main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["gen-data", "--config", str(cfg), "--seed", "8", "--out", str(tmp_path / "b")])
    assert dataset_checksums(tmp_path / "a") != dataset_checksums(tmp_path / "b")


def test_missing_kind_is_usage_error_naming_field(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("[problem]\nnu = 0.01\n[data]\nn_train = 1\nn_test = 1\n")
    assert main(["gen-data", "--config", str(path), "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert "`kind`" in capsys.readouterr().err


def test_unknown_config_and_bad_flags_are_usage_errors(tmp_path):
    assert main(["gen-data", "--config", str(tmp_path / "nope.toml")]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["train"]) == EXIT_USAGE


def test_train_zero_epochs_then_two(tmp_path):
    cfg = _config(tmp_path)
    data = tmp_path / "data"
    assert main(["gen-data", "--config", str(cfg), "--out", str(data)]) == EXIT_OK
    assert main(["train", "--config", str(cfg), "--data", str(data), "--epochs", "0", "--out", str(tmp_path / "r0")]) == EXIT_OK
    assert (tmp_path / "r0" / "summary.json").exists()
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / "r2")]) == EXIT_OK
    summary = json.loads((tmp_path / "r2" / "summary.json").read_text())
    assert {"final_rel_l2", "wall_time_s", "param_count"} <= set(summary)
    with (tmp_path / "r2" / "metrics.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == 2


def test_train_is_repeatable(tmp_path):
    cfg = _config(tmp_path)
    data = tmp_path / "data"
    main(["gen-data", "--config", str(cfg), "--out", str(data)])
    for run in ("a", "b"):
        main(["train", "--config", str(cfg), "--data", str(data), "--deterministic", "--out", str(tmp_path / run)])
    read = lambda run: (tmp_path / run / "checkpoint" / "params.f64").read_bytes()
    assert read("a") == read("b")


def test_train_corrupted_dataset_is_io_error(tmp_path, capsys):
    cfg = _config(tmp_path)
    data = tmp_path / "data"
    main(["gen-data", "--config", str(cfg), "--out", str(data)])
    blob = data / "u_train.f64"
    raw = bytearray(blob.read_bytes())
    raw[3] ^= 0xFF
    blob.write_bytes(bytes(raw))
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / "r")]) == EXIT_IO
    assert "u_train" in capsys.readouterr().err


def test_train_missing_dataset_and_kind_mismatch(tmp_path):
    cfg = _config(tmp_path)
    assert main(["train", "--config", str(cfg), "--data", str(tmp_path / "none")]) == EXIT_USAGE
    heat = tmp_path / "heat.toml"
    heat.write_text('[problem]\nkind = "heat"\ntest_points = [3, 3, 3]\n[data]\nn_train = 1\nn_test = 1\n')
    assert main(["gen-data", "--config", str(heat), "--out", str(tmp_path / "h")]) == EXIT_OK
    assert main(["train", "--config", str(cfg), "--data", str(tmp_path / "h")]) == EXIT_USAGE


def test_bench_counts_only_on_paper_preset(capsys):
    assert main(["bench", "--config", "burgers_paper", "--counts-only"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "separable branch 1,000; trunk residual 100 / ic 102 / bc 102; total 1,304" in out
    assert "total 2,701,000" in out
    assert "2,071.3" in out


def test_bench_unknown_variant_is_usage_error(tmp_path):
    cfg = _config(tmp_path, extra='\n[bench]\nvariants = ["separable", "stacked"]\n')
    assert main(["bench", "--config", str(cfg)]) == EXIT_USAGE


def test_bench_sweep_writes_six_rows(tmp_path, capsys):
    extra = "\n[bench]\nn_list = [10, 20, 40]\niters = 1\nwarmup = 0\nn_functions = 2\nwidth = 4\ndepth = 1\np = 2\nr = 2\n"
    cfg = _config(tmp_path, extra=extra)
    assert main(["bench", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_OK
    with (tmp_path / "b" / "scaling.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert {r["variant"] for r in rows} == {"separable", "vanilla"}
    assert "growth exponent" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [["--help"], ["bench", "--help"]])
def test_help_exits_cleanly(argv):
    assert main(argv) == EXIT_OK
