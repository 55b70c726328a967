import json

import pytest

from gcnn_vmc.cli import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, RunConfig, main

TINY = """
geometry = "square"
L = 4
J2 = 0.0
preset = "desk"
n_layers = 2
width = 2
phase_preopt_steps = 3
stage1_steps = 4
stage1_batch = 10
stage2_steps = 0
sweeps_between = 1
burn_in = 2
eval_samples = 50
timing = false
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(args, capsys):
    code = main([str(a) for a in args])
    return code, capsys.readouterr()


def test_train_writes_run_directory(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = write(tmp_path, TINY)
    code, _ = run(["train", "--config", cfg, "--output", out, "--threads", 1], capsys)
    assert code == EXIT_OK
    for name in ("config.toml", "trace.jsonl", "checkpoint.gcnn", "summary.json"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert "relative_error" in summary and "ed_energy_per_site" in summary
    assert len((out / "trace.jsonl").read_text().splitlines()) == 7


def test_same_seed_gives_identical_trace(tmp_path, capsys):
    cfg = write(tmp_path, TINY + "n_chains = 1\n")
    run(["train", "--config", cfg, "--output", tmp_path / "a", "--seed", 5], capsys)
    run(["train", "--config", cfg, "--output", tmp_path / "b", "--seed", 5], capsys)
    a = (tmp_path / "a" / "trace.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "trace.jsonl").read_bytes()
    assert (tmp_path / "a" / "checkpoint.gcnn").read_bytes() == (tmp_path / "b" / "checkpoint.gcnn").read_bytes()


def test_invalid_config(tmp_path, capsys):
    cfg = write(tmp_path, "L = 0\n")
    code, cap = run(["train", "--config", cfg, "--output", tmp_path / "x"], capsys)
    assert code == EXIT_VALIDATION
    assert json.loads(cap.err)["error"] == "ConfigError"
    code, _ = run(["train", "--config", write(tmp_path, "bogus_key = 1\n", "b.toml")], capsys)
    assert code == EXIT_VALIDATION
    code, _ = run(["train", "--config", tmp_path / "nope.toml"], capsys)
    assert code == EXIT_IO
    with pytest.raises(Exception):
        RunConfig.from_mapping({"stage1_steps": -1})


def test_ed_command(tmp_path, capsys):
    cfg = write(tmp_path, 'geometry = "ring"\nL = 2\n')
    code, cap = run(["ed", "--config", cfg, "--output", tmp_path / "e"], capsys)
    assert code == EXIT_OK
    assert json.loads((tmp_path / "e" / "ed.json").read_text())["e0"] == pytest.approx(-0.75)
    cfg = write(tmp_path, 'geometry = "triangular"\nL = 4\nJ2 = 0.125\n', "t.toml")
    code, _ = run(["ed", "--config", cfg, "--output", tmp_path / "t"], capsys)
    assert code == EXIT_OK
    assert json.loads((tmp_path / "t" / "ed.json").read_text())["e0_per_site"] == pytest.approx(-0.534581943, abs=1e-8)
    cfg = write(tmp_path, 'geometry = "square"\nL = 6\n', "big.toml")
    code, cap = run(["ed", "--config", cfg, "--output", tmp_path / "big"], capsys)
    assert code == EXIT_VALIDATION
    assert "out of ED range" in json.loads(cap.err)["message"]


def test_masking_experiment(tmp_path, capsys):
    cfg = write(tmp_path, TINY.replace('"square"', '"triangular"').replace("J2 = 0.0", "J2 = 0.125"))
    out = tmp_path / "m"
    code, _ = run(["masking-experiment", "--config", cfg, "--output", out], capsys)
    assert code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["param_count_order"] == ["full", "translational", "point-group", "diagonal"]
    assert summary["feature_layer_ratios"]["translational/diagonal"] == 16
    assert summary["feature_layer_ratios"]["point-group/diagonal"] == 12
    for m in ("full", "translational", "point-group", "diagonal"):
        assert (out / f"trace_{m}.jsonl").exists()


def test_single_mode_experiment(tmp_path, capsys):
    cfg = write(tmp_path, TINY + 'modes = ["full"]\n')
    code, _ = run(["masking-experiment", "--config", cfg, "--output", tmp_path / "s"], capsys)
    assert code == EXIT_OK
    assert list(json.loads((tmp_path / "s" / "summary.json").read_text())["modes"]) == ["full"]


def test_verify(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = write(tmp_path, TINY.replace("eval_samples = 50", "eval_samples = 400"))
    assert run(["train", "--config", cfg, "--output", out], capsys)[0] == EXIT_OK
    code, cap = run(["verify", "--config", cfg, "--output", out, "--checkpoint", out / "checkpoint.gcnn"], capsys)
    assert code == EXIT_OK, cap.out
    report = json.loads((out / "verify.json").read_text())
    assert report["checks"]["character"]["pass"] and report["checks"]["energy_consistency"]["pass"]
    # truncated checkpoint
    raw = (out / "checkpoint.gcnn").read_bytes()
    (out / "bad.gcnn").write_bytes(raw[:-8])
    code, cap = run(["verify", "--config", cfg, "--output", out, "--checkpoint", out / "bad.gcnn"], capsys)
    assert code == EXIT_IO
    # architecture mismatch
    other = write(tmp_path, TINY.replace("width = 2", "width = 3"), "w3.toml")
    code, cap = run(["verify", "--config", other, "--output", out, "--checkpoint", out / "checkpoint.gcnn"], capsys)
    assert code == EXIT_VALIDATION
    assert "width" in json.loads(cap.err)["message"]


def test_exit_codes_distinct():
    assert len({EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO}) == 4
