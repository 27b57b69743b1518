import json

import numpy as np
import pytest

from attnhar.data.recording import (
    ChannelStats,
    DatasetManifest,
    Recording,
    block_bounds,
    compute_stats,
    downsample,
    fill_missing,
    load_csv,
    load_manifest,
    majority_label,
    standardize,
)
from attnhar.errors import DataError, ParseError


@pytest.fixture
def manifest():
    """Two modalities over three channels, three classes."""
    return DatasetManifest.from_dict(
        {
            "sample_rate": 4.0,
            "modalities": {"arm": ["acc_x", "acc_y"], "leg": ["gyr_x"]},
            "class_names": ["rest", "walk", "run"],
        }
    )


def recording(signals, labels=None, rate=4.0):
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim == 1:
        signals = signals[:, None]
    d = signals.shape[1]
    return Recording(
        recording_id="r",
        sample_rate=rate,
        signals=signals,
        labels=np.zeros(len(signals), dtype=np.int64) if labels is None else labels,
        channel_names=tuple(f"c{i}" for i in range(d)),
        modality_map=(0,) * d,
    )


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_manifest_from_dict(manifest):
    """Modalities are numbered in declaration order and channels follow them."""
    assert manifest.channels == ("acc_x", "acc_y", "gyr_x")
    assert manifest.modality_map == (0, 0, 1)
    assert manifest.modality_names == ("arm", "leg")
    assert manifest.n_classes == 3


def test_manifest_round_trip_keeps_extra_keys():
    """Unknown manifest keys survive a to_dict/from_dict round trip."""
    data = {
        "sample_rate": 32.0,
        "modalities": {"a": ["x"], "b": ["y", "z"]},
        "class_names": ["no", "yes"],
        "window": {"seconds": 1.0, "overlap": 0.0},
    }
    manifest = DatasetManifest.from_dict(data)
    assert manifest.extra == {"window": {"seconds": 1.0, "overlap": 0.0}}
    assert manifest.to_dict() == data


@pytest.mark.parametrize(
    "data",
    [
        {"modalities": {"a": ["x"]}, "class_names": ["c"]},
        {"sample_rate": 0, "modalities": {"a": ["x"]}, "class_names": ["c"]},
        {"sample_rate": 10, "modalities": {}, "class_names": ["c"]},
        {"sample_rate": 10, "modalities": {"a": ["x"], "b": ["x"]}, "class_names": ["c"]},
        {"sample_rate": 10, "modalities": {"a": []}, "class_names": ["c"]},
    ],
)
def test_manifest_rejects_bad_layouts(data):
    with pytest.raises(DataError):
        DatasetManifest.from_dict(data)


def test_load_manifest_invalid_json(tmp_path):
    path = write(tmp_path / "manifest.json", '{"sample_rate": 4,\n oops}')
    with pytest.raises(ParseError) as e:
        load_manifest(path)
    assert e.value.line == 2


def test_load_manifest_from_file(tmp_path, manifest):
    path = write(tmp_path / "manifest.json", json.dumps(manifest.to_dict()))
    assert load_manifest(path) == manifest


def test_load_csv_basic(tmp_path, manifest):
    """Channels are reordered to the manifest and empty cells become NaN."""
    path = write(
        tmp_path / "subject1.csv",
        "timestamp,gyr_x,acc_x,acc_y,label\n"
        "0.0,0.5,1.0,2.0,0\n"
        "0.25,0.6,,2.5,1\n"
        "0.5,0.7,3.0,-1e-3,2\n",
    )
    rec = load_csv(path, manifest)

    assert rec.recording_id == "subject1"
    assert rec.sample_rate == 4.0
    assert rec.channel_names == ("acc_x", "acc_y", "gyr_x")
    assert rec.labels.tolist() == [0, 1, 2]
    assert rec.signals[0].tolist() == [1.0, 2.0, 0.5]
    assert np.isnan(rec.signals[1, 0])
    assert rec.missing.sum() == 1
    assert rec.signals[2, 1] == -1e-3


def test_load_csv_without_timestamp(tmp_path, manifest):
    path = write(tmp_path / "s.csv", "acc_x,acc_y,gyr_x,label\n1,2,3,1\n")
    rec = load_csv(path, manifest, recording_id="custom")
    assert rec.recording_id == "custom"
    assert rec.signals.tolist() == [[1.0, 2.0, 3.0]]


@pytest.mark.parametrize(
    "body,line,message",
    [
        ("1,2,3,0\n1,2,0\n", 3, "expected 4 columns, got 3"),
        ("1,2\n", 2, "expected 4 columns, got 2"),
        ("1,abc,3,0\n", 2, "non-numeric"),
        ("1,nan,3,0\n", 2, "non-numeric value 'nan'"),
        ("1,2,NaN,0\n", 2, "non-numeric value 'NaN'"),
        ("1,2,3,0\n1,2,3,4,0\n", 3, "expected 4 columns, got 5"),
        ("1,inf,3,0\n", 2, "infinite"),
        ("1,2,3,walk\n", 2, "not an integer"),
        ("1,2,3,0\n1,2,3,0\n1,2,3,7\n", 4, "unknown label 7"),
    ],
)
def test_load_csv_reports_line_numbers(tmp_path, manifest, body, line, message):
    """Malformed rows are reported with their 1-based line number."""
    path = write(tmp_path / "bad.csv", "acc_x,acc_y,gyr_x,label\n" + body)
    with pytest.raises(ParseError, match=message) as e:
        load_csv(path, manifest)
    assert e.value.line == line
    assert e.value.path == str(path)


@pytest.mark.parametrize(
    "header",
    ["acc_x,acc_y,gyr_x\n", "acc_x,acc_y,label\n", "acc_x,acc_y,gyr_x,mag,label\n", ""],
)
def test_load_csv_rejects_bad_headers(tmp_path, manifest, header):
    path = write(tmp_path / "bad.csv", header)
    with pytest.raises(ParseError) as e:
        load_csv(path, manifest)
    assert e.value.line == 1


def test_load_csv_missing_file(tmp_path, manifest):
    with pytest.raises(DataError):
        load_csv(tmp_path / "absent.csv", manifest)


def test_fill_missing_interpolates():
    rec = fill_missing(recording([1.0, np.nan, 3.0]))
    assert rec.signals[:, 0].tolist() == [1.0, 2.0, 3.0]
    rec = fill_missing(recording([1.0, np.nan, np.nan, 4.0]))
    assert rec.signals[:, 0].tolist() == pytest.approx([1.0, 2.0, 3.0, 4.0])


def test_fill_missing_holds_edges():
    rec = fill_missing(recording([np.nan, 5.0, 5.0]))
    assert rec.signals[:, 0].tolist() == [5.0, 5.0, 5.0]
    rec = fill_missing(recording([2.0, 4.0, np.nan, np.nan]))
    assert rec.signals[:, 0].tolist() == [2.0, 4.0, 4.0, 4.0]


def test_fill_missing_without_gaps_is_identity():
    rec = recording([1.0, 2.0])
    assert fill_missing(rec) is rec


def test_fill_missing_rejects_empty_channel():
    rec = recording(np.array([[1.0, np.nan], [2.0, np.nan]]))
    with pytest.raises(DataError, match="c1"):
        fill_missing(rec)


def test_majority_label_ties():
    labels = np.array([2, 1, 1, 2, 0])
    assert majority_label(labels, ties="first") == 2
    assert majority_label(labels, ties="last") == 2
    assert majority_label(np.array([1, 2, 2, 1]), ties="last") == 1
    assert majority_label(np.array([1, 2, 2, 1]), ties="first") == 1
    assert majority_label(np.array([3, 3, 0])) == 3


def test_downsample_block_average():
    """Halving the rate averages sample pairs."""
    rec = recording([1.0, 3.0, 5.0, 7.0], labels=np.array([0, 0, 1, 2]))
    out = downsample(rec, 2.0)
    assert out.sample_rate == 2.0
    assert out.signals[:, 0].tolist() == [2.0, 6.0]
    # the tied second block takes its earliest label
    assert out.labels.tolist() == [0, 1]


def test_downsample_fractional_ratio():
    """100 Hz to 100/3 Hz keeps floor(N / 3) samples of three-sample blocks."""
    signals = np.arange(1000, dtype=np.float64)
    out = downsample(recording(signals, rate=100.0), 100.0 / 3.0)
    assert len(out) == 333
    assert out.signals[0, 0] == pytest.approx(1.0)
    assert out.signals[-1, 0] == pytest.approx(997.0)
    bounds = block_bounds(1000, 100.0, 100.0 / 3.0)
    assert bounds[:4].tolist() == [0, 3, 6, 9]


def test_downsample_uneven_blocks():
    signals = np.arange(10, dtype=np.float64)
    out = downsample(recording(signals, rate=10.0), 4.0)
    # r = 2.5: blocks [0, 2), [2, 5), [5, 7), [7, 10)
    assert out.signals[:, 0].tolist() == [0.5, 3.0, 5.5, 8.0]


def test_downsample_rejects_bad_rates():
    rec = recording([1.0, 2.0])
    with pytest.raises(ValueError):
        downsample(rec, 0.0)
    with pytest.raises(ValueError):
        downsample(rec, 8.0)
    assert downsample(rec, 4.0) is rec


def test_standardize_with_own_statistics():
    rng = np.random.default_rng(0)
    signals = rng.normal(loc=[3.0, -2.0, 10.0], scale=[0.5, 4.0, 2.0], size=(500, 3))
    rec = recording(signals)
    out = standardize(rec, compute_stats([rec]))
    assert np.all(np.abs(out.signals.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(out.signals.var(axis=0) - 1.0) < 1e-6)


def test_standardize_constant_channel_is_finite(caplog):
    """A constant channel gets a floored std and standardizes to zeros."""
    rec = recording(np.column_stack([np.full(4, 7.0), [1.0, 2.0, 3.0, 4.0]]))
    stats = compute_stats([rec])
    assert stats.std[0] == 1e-8
    assert "near-constant" in caplog.text
    out = standardize(rec, stats)
    assert np.all(out.signals[:, 0] == 0.0)


def test_standardize_is_shift_invariant():
    rng = np.random.default_rng(1)
    signals = rng.normal(size=(100, 2))
    a = standardize(recording(signals), compute_stats([recording(signals)]))
    shifted = recording(signals + 42.0)
    b = standardize(shifted, compute_stats([shifted]))
    assert np.allclose(a.signals, b.signals, atol=1e-9)


def test_standardize_refuses_non_training_statistics():
    rec = recording([1.0, 2.0, 3.0])
    stats = ChannelStats(mean=np.zeros(1), std=np.ones(1), provenance="test")
    with pytest.raises(DataError, match="training split"):
        standardize(rec, stats)
    with pytest.raises(DataError):
        standardize(rec, ChannelStats(mean=np.zeros(2), std=np.ones(2)))


def test_compute_stats_requires_filled_samples():
    with pytest.raises(DataError):
        compute_stats([recording([1.0, np.nan])])
    with pytest.raises(DataError):
        compute_stats([])
