import json
import subprocess
import sys

import pytest

SYNTHETIC = {
    "n_windows": 120,
    "T": 16,
    "D": 4,
    "M": 2,
    "C": 2,
    "motif_min": 4,
    "motif_max": 8,
    "sample_rate": 16.0,
    "seed": 5,
}

MODEL = {"variant": "temporal_sensor", "hidden_size": 8}
TRAINING = {"max_epochs": 2, "batch_size": 16, "learning_rate": 0.02}


def run_cli(*args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "attnhar.cli", *map(str, args)],
        capture_output=True,
        text=True,
        encoding="utf-8",
        timeout=300,
        cwd=cwd,
    )


def check(result, code=0):
    assert result.returncode == code, (
        f"Exit code: {result.returncode}\nStdout: {result.stdout}\nStderr: {result.stderr}"
    )


def write_config(directory, dataset, **sections):
    directory.mkdir(parents=True, exist_ok=True)
    config = {
        "dataset": dataset,
        "model": sections.get("model", MODEL),
        "training": sections.get("training", TRAINING),
        "output": sections.get("output", {"dir": "run", "synthetic_dir": "data"}),
    }
    path = directory / "attnhar.config.json"
    path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return path


def csv_dataset():
    """Dataset section reading the files written by gen-synthetic."""
    return {
        "paths": {"train": "data/train.csv", "val": "data/val.csv", "test": "data/test.csv"},
        "manifest": "data/manifest.json",
    }


def full_pipeline(directory):
    """gen-synthetic, train, eval and export-attention in one project directory."""
    gen_config = write_config(directory, {"synthetic": SYNTHETIC})
    check(run_cli("gen-synthetic", "-c", gen_config, cwd=directory))
    config = write_config(directory, csv_dataset())
    check(run_cli("train", "-c", config, cwd=directory))
    check(run_cli("eval", "-c", config, "--out", directory / "run" / "eval.json", cwd=directory))
    check(run_cli("export-attention", "-c", config, "--n", 5, cwd=directory))
    return directory / "run"


@pytest.mark.integration
def test_cli_version(tmp_path):
    """Test the --version flag."""
    result = run_cli("--version", cwd=tmp_path)
    check(result)
    assert "0.1.0" in result.stdout


@pytest.mark.integration
def test_cli_train_on_synthetic_config(tmp_path):
    """Test that training on a synthetic config writes all outputs."""
    config = write_config(tmp_path, {"synthetic": SYNTHETIC})
    result = run_cli("train", "-c", config, cwd=tmp_path)
    check(result)

    for name in ("model.ckpt", "history.csv", "report.json", "report.md"):
        assert (tmp_path / "run" / name).is_file(), name
    report = json.loads((tmp_path / "run" / "report.json").read_text(encoding="utf-8"))
    assert report["metadata"]["variant"] == "temporal_sensor"
    assert 0.0 <= report["report"]["mean_f1"] <= 1.0
    assert "mean F1" in result.stdout


@pytest.mark.integration
def test_cli_pipeline_end_to_end(tmp_path):
    """Test gen-synthetic -> train -> eval -> export-attention on CSV files."""
    out = full_pipeline(tmp_path)

    train_report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    eval_report = json.loads((out / "eval.json").read_text(encoding="utf-8"))
    assert eval_report == train_report

    lines = (out / "trace.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 5
    record = json.loads(lines[0])
    assert len(record["alpha"]) == SYNTHETIC["T"]
    assert len(record["beta"][0]) == SYNTHETIC["M"]
    assert abs(sum(record["alpha"]) - 1.0) < 1e-9
    assert set(record["ground_truth"]) == {"start", "end", "modality"}
    assert 0.0 <= record["motif_alpha_mass"] <= 1.0


@pytest.mark.integration
@pytest.mark.slow
def test_cli_pipeline_is_deterministic(tmp_path):
    """Test that two runs with one seed write byte-identical artifacts."""
    first = full_pipeline(tmp_path / "a")
    second = full_pipeline(tmp_path / "b")

    artifacts = (
        "model.ckpt",
        "history.csv",
        "report.json",
        "report.md",
        "eval.json",
        "trace.jsonl",
    )
    for name in artifacts:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
    assert (tmp_path / "a" / "data" / "train.csv").read_bytes() == (
        tmp_path / "b" / "data" / "train.csv"
    ).read_bytes()


@pytest.mark.integration
def test_cli_eval_key_value_output(tmp_path):
    """Test eval writes key=value reports for unknown extensions."""
    config = write_config(tmp_path, {"synthetic": SYNTHETIC})
    check(run_cli("train", "-c", config, cwd=tmp_path))
    result = run_cli("eval", "-c", config, "--out", tmp_path / "scores.txt", cwd=tmp_path)
    check(result)

    text = (tmp_path / "scores.txt").read_text(encoding="utf-8")
    assert text.startswith("mean_f1=")
    assert "class_1_support=" in text
    assert "mean_f1=" in result.stdout


@pytest.mark.integration
def test_cli_invalid_lambda_exits_2(tmp_path):
    """Test that a negative continuity weight is a configuration error."""
    config = write_config(tmp_path, {"synthetic": SYNTHETIC}, model={"lambda1": -1})
    result = run_cli("train", "-c", config, cwd=tmp_path)
    check(result, 2)
    assert "model.lambda1" in result.stdout


@pytest.mark.integration
def test_cli_unknown_config_key_exits_2(tmp_path):
    config = write_config(tmp_path, {"synthetic": SYNTHETIC}, training={"epochs": 3})
    check(run_cli("train", "-c", config, cwd=tmp_path), 2)


@pytest.mark.integration
def test_cli_missing_dataset_file_exits_3(tmp_path):
    """Test that a missing CSV file is a data error."""
    gen_config = write_config(tmp_path, {"synthetic": SYNTHETIC})
    check(run_cli("gen-synthetic", "-c", gen_config, cwd=tmp_path))
    (tmp_path / "data" / "val.csv").unlink()
    result = run_cli("train", "-c", write_config(tmp_path, csv_dataset()), cwd=tmp_path)
    check(result, 3)
    assert "val.csv" in result.stdout


@pytest.mark.integration
def test_cli_checkpoint_dimension_mismatch_exits_3(tmp_path):
    """Test evaluating a D=4 model on D=6 data."""
    config = write_config(tmp_path, {"synthetic": SYNTHETIC})
    check(run_cli("train", "-c", config, cwd=tmp_path))
    wider = write_config(tmp_path / "wider", {"synthetic": {**SYNTHETIC, "D": 6}})
    result = run_cli("eval", "-c", wider, "-k", tmp_path / "run" / "model.ckpt", cwd=tmp_path)
    check(result, 3)


@pytest.mark.integration
def test_cli_export_rejects_zero_windows(tmp_path):
    config = write_config(tmp_path, {"synthetic": SYNTHETIC})
    check(run_cli("export-attention", "-c", config, "--n", 0, cwd=tmp_path), 2)


@pytest.mark.integration
def test_cli_missing_checkpoint_exits_3(tmp_path):
    config = write_config(tmp_path, {"synthetic": SYNTHETIC})
    check(run_cli("eval", "-c", config, cwd=tmp_path), 3)


@pytest.mark.integration
def test_cli_gen_synthetic_seed_override(tmp_path):
    """Test that --seed changes the generated data."""
    config = write_config(tmp_path, {"synthetic": SYNTHETIC})
    check(run_cli("gen-synthetic", "-c", config, "--out", tmp_path / "s1", cwd=tmp_path))
    result = run_cli(
        "gen-synthetic", "-c", config, "--out", tmp_path / "s2", "--seed", 6, cwd=tmp_path
    )
    check(result)

    manifest = json.loads((tmp_path / "s2" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["synthetic"]["seed"] == 6
    first, second = (tmp_path / d / "train.csv" for d in ("s1", "s2"))
    assert first.read_bytes() != second.read_bytes()


@pytest.mark.integration
def test_cli_checkpoint_without_dims_exits_3(tmp_path):
    """Test that a checkpoint header missing a key is a data error, not a crash."""
    config = write_config(tmp_path, {"synthetic": SYNTHETIC})
    check(run_cli("train", "-c", config, cwd=tmp_path))
    checkpoint = tmp_path / "run" / "model.ckpt"
    data = checkpoint.read_bytes()
    length = int.from_bytes(data[8:12], "little")
    header = json.loads(data[12 : 12 + length])
    del header["dims"]
    encoded = json.dumps(header).encode("utf-8")
    prefix = data[:8] + len(encoded).to_bytes(4, "little")
    checkpoint.write_bytes(prefix + encoded + data[12 + length :])

    result = run_cli("eval", "-c", config, cwd=tmp_path)
    check(result, 3)
    assert "dims" in result.stdout + result.stderr
