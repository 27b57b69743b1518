"""From a dataset configuration to standardized train/validation/test windows."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from attnhar.data.recording import (
    ChannelStats,
    DatasetManifest,
    Recording,
    compute_stats,
    downsample,
    fill_missing,
    load_csv,
    load_manifest,
)
from attnhar.data.synthetic import attach_ground_truth, gen_synthetic, load_ground_truth
from attnhar.data.windowing import (
    SequenceWindow,
    WindowDataset,
    split_by_recordings,
    split_per_class,
    standardize_windows,
    window,
    window_stats,
)
from attnhar.errors import ConfigError, DataError
from attnhar.utils.config import SPLITS, DatasetConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DataSplits:
    """Standardized splits and the training statistics used on them."""

    train: WindowDataset
    val: WindowDataset
    test: WindowDataset
    stats: ChannelStats

    def get(self, name: str) -> WindowDataset:
        if name not in SPLITS:
            raise ValueError(f"split must be one of {list(SPLITS)}, got '{name}'")
        return getattr(self, name)


def _window_settings(cfg: DatasetConfig, manifest: DatasetManifest) -> Tuple[float, float]:
    declared = manifest.extra.get("window") or {}
    seconds = cfg.window_seconds
    overlap = cfg.overlap
    if cfg.preset is not None:
        seconds = seconds if seconds is not None else cfg.preset.window_seconds
        overlap = overlap if overlap is not None else cfg.preset.overlap
    seconds = seconds if seconds is not None else declared.get("seconds")
    overlap = overlap if overlap is not None else declared.get("overlap", 0.0)
    if seconds is None:
        raise ConfigError(
            "no window length from config, preset or manifest", "dataset.window_seconds"
        )
    return float(seconds), float(overlap)


def _load_recordings(
    paths: Sequence[Path], manifest: DatasetManifest, target_rate: Optional[float]
) -> List[Recording]:
    recordings = []
    for path in paths:
        if not Path(path).is_file():
            raise DataError(f"dataset file not found: {path}")
        rec = fill_missing(load_csv(path, manifest))
        if target_rate is not None and target_rate != rec.sample_rate:
            rec = downsample(rec, target_rate)
        recordings.append(rec)
    return recordings


def _windows(
    recordings: Sequence[Recording], seconds: float, overlap: float, label_rule: str
) -> List[SequenceWindow]:
    windows: List[SequenceWindow] = []
    for rec in recordings:
        windows.extend(window(rec, seconds, overlap, label_rule))  # type: ignore[arg-type]
    return windows


def _sidecars(cfg: DatasetConfig, manifest: DatasetManifest) -> Dict[str, Path]:
    if cfg.ground_truth is not None:
        return dict(cfg.ground_truth)
    # sidecars named in the manifest only line up with whole-file splits
    declared = manifest.extra.get("ground_truth") or {}
    if cfg.paths is None or not isinstance(declared, dict):
        return {}
    assert cfg.manifest is not None
    return {
        name: cfg.manifest.parent / str(declared[name])
        for name in SPLITS
        if name in declared and len(cfg.paths[name]) == 1
    }


def prepare_splits(cfg: DatasetConfig, stats: Optional[ChannelStats] = None) -> DataSplits:
    """Load, preprocess, window, split and standardize a dataset.

    CSV recordings are gap-filled, optionally downsampled (``target_rate``, else the preset's
    rate) and windowed. Standardization uses ``stats`` when given (a trained model's), else
    statistics of the training split: of the training recordings for file splits, of the
    training windows otherwise.

    Raises:
        ConfigError: If no window length can be determined.
        DataError: Missing files, malformed data or an empty training split.
    """
    if cfg.synthetic is not None:
        train, val, test = gen_synthetic(cfg.synthetic)
        stats = stats or window_stats(train)
        return DataSplits(*(standardize_windows(d, stats) for d in (train, val, test)), stats)

    assert cfg.manifest is not None
    manifest = load_manifest(cfg.manifest)
    target_rate = cfg.target_rate
    if target_rate is None and cfg.preset is not None:
        target_rate = cfg.preset.target_rate
    seconds, overlap = _window_settings(cfg, manifest)

    def dataset(windows: Sequence[SequenceWindow], name: str) -> WindowDataset:
        return WindowDataset(
            windows=tuple(windows),
            n_classes=manifest.n_classes,
            modality_map=manifest.modality_map,
            class_names=manifest.class_names,
            channel_names=manifest.channels,
            name=name,
        )

    if cfg.paths is not None:
        splits = []
        train_recordings: List[Recording] = []
        for name in SPLITS:
            recordings = _load_recordings(cfg.paths[name], manifest, target_rate)
            if name == "train":
                train_recordings = recordings
            splits.append(dataset(_windows(recordings, seconds, overlap, cfg.label_rule), name))
        stats = stats or compute_stats(train_recordings)
    else:
        assert cfg.recordings is not None
        recordings = _load_recordings(cfg.recordings, manifest, target_rate)
        windows = _windows(recordings, seconds, overlap, cfg.label_rule)
        if cfg.split.rule == "per_class":
            parts = split_per_class(windows, cfg.split.fractions)
        else:
            parts = split_by_recordings(windows, cfg.split.val_ids, cfg.split.test_ids)
        splits = [dataset(part, name) for part, name in zip(parts, SPLITS)]
        stats = stats or window_stats(splits[0])

    sidecars = _sidecars(cfg, manifest)
    for i, name in enumerate(SPLITS):
        if name in sidecars:
            splits[i] = attach_ground_truth(splits[i], load_ground_truth(sidecars[name]))

    logger.debug(
        f"Windows of {seconds:g}s (overlap {overlap:g}): "
        + ", ".join(f"{d.name} {len(d)}" for d in splits)
    )
    return DataSplits(*(standardize_windows(d, stats) for d in splits), stats)
