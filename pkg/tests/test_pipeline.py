import json

import numpy as np
import pytest

from attnhar.data.pipeline import prepare_splits
from attnhar.data.recording import ChannelStats
from attnhar.data.synthetic import SyntheticSpec, gen_synthetic, write_synthetic
from attnhar.data.windowing import PRESETS
from attnhar.errors import ConfigError, DataError
from attnhar.utils.config import DatasetConfig, SplitRule

SPEC = SyntheticSpec(n_windows=40, T=16, D=4, M=2, motif_min=4, motif_max=8, sample_rate=16.0)


@pytest.fixture
def recordings_dir(tmp_path):
    """Four participants at 8 Hz; participant S03 is shifted by +5 on every channel."""
    manifest = {
        "sample_rate": 8.0,
        "modalities": {"wrist": ["ax", "ay"], "ankle": ["gx"]},
        "class_names": ["still", "moving"],
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
    rng = np.random.default_rng(0)
    for name in ("S01", "S02R01", "S02R02", "S03"):
        shift = 5.0 if name == "S03" else 0.0
        lines = ["ax,ay,gx,label"]
        for t in range(32):
            x = rng.normal(size=3) + shift
            lines.append(",".join(repr(float(v)) for v in x) + f",{(t // 8) % 2}")
        (tmp_path / f"{name}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return tmp_path


def recordings_config(directory, **overrides):
    settings = dict(
        recordings=tuple(directory / f"{n}.csv" for n in ("S01", "S02R01", "S02R02", "S03")),
        manifest=directory / "manifest.json",
        split=SplitRule("recordings", val_ids=("S02",), test_ids=("S03",)),
        window_seconds=1.0,
        overlap=0.0,
    )
    settings.update(overrides)
    return DatasetConfig(**settings)


def test_synthetic_source_is_standardized_with_train_statistics():
    splits = prepare_splits(DatasetConfig(synthetic=SPEC))
    flat = splits.train.X.reshape(-1, SPEC.D)
    assert np.all(np.abs(flat.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(flat.var(axis=0) - 1.0) < 1e-6)
    assert splits.stats.provenance == "train"
    assert all(w.ground_truth is not None for w in splits.test)


def test_paths_source_reads_written_synthetic_data(tmp_path):
    """CSV splits reload the generated windows, stats and motif ground truth."""
    generated = gen_synthetic(SPEC)
    write_synthetic(SPEC, generated, tmp_path)
    cfg = DatasetConfig(
        paths={name: (tmp_path / f"{name}.csv",) for name in ("train", "val", "test")},
        manifest=tmp_path / "manifest.json",
    )
    splits = prepare_splits(cfg)
    direct = prepare_splits(DatasetConfig(synthetic=SPEC))

    assert splits.test.window_length == SPEC.T
    assert np.allclose(splits.stats.mean, direct.stats.mean, atol=1e-12)
    assert np.allclose(splits.test.X, direct.test.X, atol=1e-9)
    assert [w.ground_truth for w in splits.test] == [w.ground_truth for w in generated[2]]
    assert splits.test.channel_names == ("m0_ch0", "m0_ch1", "m1_ch2", "m1_ch3")


def test_recordings_split_by_participant(recordings_dir):
    splits = prepare_splits(recordings_config(recordings_dir))

    assert {w.recording_id for w in splits.train} == {"S01"}
    assert {w.recording_id for w in splits.val} == {"S02R01", "S02R02"}
    assert {w.recording_id for w in splits.test} == {"S03"}
    assert len(splits.train) == 4 and len(splits.val) == 8
    assert splits.train.modality_map == (0, 0, 1)
    assert [w.y for w in splits.train] == [0, 1, 0, 1]


def test_shifted_test_split_keeps_its_offset(recordings_dir):
    """Training statistics leave a shifted participant visibly off-center."""
    splits = prepare_splits(recordings_config(recordings_dir))
    assert np.all(splits.test.X.reshape(-1, 3).mean(axis=0) > 1.0)
    assert np.all(np.abs(splits.train.X.reshape(-1, 3).mean(axis=0)) < 1e-9)


def test_given_statistics_are_reused(recordings_dir):
    stats = ChannelStats(mean=np.zeros(3), std=np.full(3, 2.0))
    splits = prepare_splits(recordings_config(recordings_dir), stats=stats)
    unit = ChannelStats(mean=np.zeros(3), std=np.ones(3))
    raw = prepare_splits(recordings_config(recordings_dir), stats=unit)

    assert splits.stats is stats
    assert np.allclose(splits.test.X * 2.0, raw.test.X, atol=1e-12)


def test_per_class_split(recordings_dir):
    rule = SplitRule("per_class", fractions=(0.5, 0.25, 0.25))
    cfg = recordings_config(recordings_dir, split=rule)
    splits = prepare_splits(cfg)
    assert (len(splits.train), len(splits.val), len(splits.test)) == (8, 4, 4)
    assert splits.train.y.tolist().count(0) == 4


def test_downsampling_to_preset_rate(recordings_dir):
    """The preset's rate, window and split apply unless the config overrides them."""
    preset = PRESETS["dg"]
    cfg = recordings_config(
        recordings_dir, preset=preset, target_rate=4.0, window_seconds=None, overlap=None
    )
    splits = prepare_splits(cfg)
    # 32 samples at 8 Hz become 16 at 4 Hz; 1 s windows hold 4 samples
    assert splits.train.window_length == 4
    assert len(splits.train) == 4


def test_window_length_must_be_known(recordings_dir):
    with pytest.raises(ConfigError):
        prepare_splits(recordings_config(recordings_dir, window_seconds=None))


def test_missing_recording(recordings_dir):
    (recordings_dir / "S02R02.csv").unlink()
    with pytest.raises(DataError, match="not found"):
        prepare_splits(recordings_config(recordings_dir))


def test_unknown_split_name():
    splits = prepare_splits(DatasetConfig(synthetic=SPEC))
    assert splits.get("val") is splits.val
    with pytest.raises(ValueError):
        splits.get("holdout")
