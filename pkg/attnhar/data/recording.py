"""Sensor recordings: CSV ingestion and per-recording preprocessing.

A dataset is a directory of CSV files plus a JSON manifest. Each CSV holds one recording,
one sample per row::

    timestamp,acc_x,acc_y,acc_z,gyr_x,label      <- optional leading timestamp column
    0.00,0.12,-0.98,0.05,0.001,0
    0.03,,-0.97,0.04,0.002,0                      <- empty cell = missing sample

The manifest declares the sampling rate, the channel -> modality grouping and the class names::

    {
      "sample_rate": 100.0,
      "modalities": {"hand": ["acc_x", "acc_y", "acc_z"], "chest": ["gyr_x"]},
      "class_names": ["lying", "walking"]
    }

Preprocessing follows the usual HAR recipe: fill gaps, decimate, standardize with statistics
of the training split only.
"""

import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Final, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from attnhar.errors import DataError, ParseError

logger = logging.getLogger(__name__)

LABEL_COLUMN: Final[str] = "label"
TIMESTAMP_COLUMN: Final[str] = "timestamp"

# Standard deviations below this are floored (constant channels).
STD_FLOOR: Final[float] = 1e-8

TRAIN_PROVENANCE: Final[str] = "train"

_FIELDS_ERROR: Final = re.compile(r"Expected (\d+) fields in line (\d+), saw (\d+)")


@dataclass(frozen=True)
class DatasetManifest:
    """Sidecar description of a CSV dataset.

    Attributes:
        sample_rate: Sampling rate of the recordings in Hz.
        channels: Channel names in model input order.
        modality_map: Modality index of every channel.
        modality_names: Modality names, indexed by modality.
        class_names: Class names, indexed by label id.
        extra: Other manifest keys (window settings, ground-truth sidecars, ...).
    """

    sample_rate: float
    channels: Tuple[str, ...]
    modality_map: Tuple[int, ...]
    modality_names: Tuple[str, ...]
    class_names: Tuple[str, ...]
    extra: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_modalities(self) -> int:
        return len(self.modality_names)

    def to_dict(self) -> Dict[str, Any]:
        modalities: Dict[str, List[str]] = {name: [] for name in self.modality_names}
        for channel, m in zip(self.channels, self.modality_map):
            modalities[self.modality_names[m]].append(channel)
        return {
            "sample_rate": self.sample_rate,
            "modalities": modalities,
            "class_names": list(self.class_names),
            **self.extra,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], source: str = "<manifest>") -> "DatasetManifest":
        """Build a manifest from its JSON object.

        Raises:
            DataError: If required keys are missing or malformed.
        """
        try:
            sample_rate = float(data["sample_rate"])
            modalities = data["modalities"]
            class_names = tuple(str(c) for c in data["class_names"])
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"{source}: manifest needs sample_rate, modalities, class_names ({e})")
        if not sample_rate > 0:
            raise DataError(f"{source}: sample_rate must be positive, got {sample_rate}")
        if not isinstance(modalities, dict) or not modalities:
            raise DataError(f"{source}: modalities must map modality names to channel lists")
        if not class_names:
            raise DataError(f"{source}: class_names must not be empty")

        channels: List[str] = []
        modality_map: List[int] = []
        for m, (name, members) in enumerate(modalities.items()):
            if not isinstance(members, list) or not members:
                raise DataError(f"{source}: modality '{name}' must list at least one channel")
            for channel in members:
                if channel in channels:
                    raise DataError(f"{source}: channel '{channel}' assigned twice")
                channels.append(str(channel))
                modality_map.append(m)

        known = {"sample_rate", "modalities", "class_names"}
        extra = {k: v for k, v in data.items() if k not in known}
        return cls(
            sample_rate=sample_rate,
            channels=tuple(channels),
            modality_map=tuple(modality_map),
            modality_names=tuple(str(n) for n in modalities),
            class_names=class_names,
            extra=extra,
        )


def load_manifest(path: Path) -> DatasetManifest:
    """Read a dataset manifest JSON file.

    Raises:
        ParseError: If the file is not valid JSON.
        DataError: If it is unreadable or lacks required keys.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON ({e.msg})", str(path), e.lineno)
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}")
    if not isinstance(data, dict):
        raise ParseError("manifest must be a JSON object", str(path), 1)
    return DatasetManifest.from_dict(data, str(path))


@dataclass(frozen=True, eq=False)
class Recording:
    """One continuous multichannel recording.

    Attributes:
        recording_id: Identifier (e.g. participant or file stem).
        sample_rate: Sampling rate in Hz.
        signals: ``N x D`` float64 samples; NaN marks a missing sample.
        labels: ``N`` integer class ids.
        channel_names: Names of the ``D`` channels.
        modality_map: Modality index of every channel.
    """

    recording_id: str
    sample_rate: float
    signals: np.ndarray
    labels: np.ndarray
    channel_names: Tuple[str, ...]
    modality_map: Tuple[int, ...]

    def __post_init__(self) -> None:
        signals = np.asarray(self.signals, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if signals.ndim != 2:
            raise DataError(f"{self.recording_id}: signals must be N x D, got {signals.shape}")
        if labels.shape != (signals.shape[0],):
            raise DataError(
                f"{self.recording_id}: {labels.shape[0]} labels for {signals.shape[0]} samples"
            )
        if not self.sample_rate > 0:
            raise DataError(f"{self.recording_id}: sample_rate must be positive")
        n_channels = signals.shape[1]
        if len(self.channel_names) != n_channels or len(self.modality_map) != n_channels:
            raise DataError(f"{self.recording_id}: channel names/modalities do not match D")
        object.__setattr__(self, "signals", signals)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.signals.shape[0])

    @property
    def n_channels(self) -> int:
        return int(self.signals.shape[1])

    @property
    def missing(self) -> np.ndarray:
        """Boolean ``N x D`` mask of missing samples."""
        return np.isnan(self.signals)


def _first_line(mask: pd.Series) -> Optional[int]:
    """File line of the first flagged body row (the header is line 1)."""
    flagged = np.flatnonzero(mask.to_numpy())
    return int(flagged[0]) + 2 if len(flagged) else None


def _parser_error(e: Exception, source: str) -> ParseError:
    # pandas: "Expected 4 fields in line 3, saw 5"
    match = _FIELDS_ERROR.search(str(e))
    if match is None:
        return ParseError(f"unreadable CSV ({e})", source, 1)
    expected, line, seen = (int(g) for g in match.groups())
    return ParseError(f"expected {expected} columns, got {seen}", source, line)


def load_csv(path: Path, schema: DatasetManifest, recording_id: Optional[str] = None) -> Recording:
    """Parse one recording CSV against its manifest.

    Channels are reordered to the manifest order; empty cells become missing samples. Text
    such as ``nan`` or ``NA`` is not a missing marker and is rejected like any other
    non-numeric cell.

    Raises:
        ParseError: Ragged rows, non-numeric cells, unknown labels or a bad header, with the
            1-based line number.
        DataError: If the file cannot be read.
    """
    path = Path(path)
    source = str(path)
    try:
        frame = pd.read_csv(
            path,
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}")
    except pd.errors.EmptyDataError:
        raise ParseError("empty file, expected a header row", source, 1)
    except pd.errors.ParserError as e:
        raise _parser_error(e, source)
    except UnicodeDecodeError as e:
        raise ParseError(f"unreadable CSV ({e})", source, 1)

    header = [str(name).strip() for name in frame.iloc[0]]
    if header[-1] != LABEL_COLUMN:
        raise ParseError(f"last column must be '{LABEL_COLUMN}'", source, 1)
    first = 1 if header[0] == TIMESTAMP_COLUMN else 0
    columns = header[first:-1]

    unknown = [c for c in columns if c not in schema.channels]
    absent = [c for c in schema.channels if c not in columns]
    if unknown or absent:
        raise ParseError(
            f"channels do not match manifest (unknown {unknown}, absent {absent})", source, 1
        )

    body = frame.iloc[1:].reset_index(drop=True)
    # short rows are padded with NaN; real empty cells read as ""
    present = body.notna().sum(axis=1)
    line = _first_line(present < len(header))
    if line is not None:
        got = int(present.iloc[line - 2])
        raise ParseError(f"expected {len(header)} columns, got {got}", source, line)

    problems = []
    signals = pd.DataFrame(index=body.index)
    for name in schema.channels:
        position = columns.index(name) + first
        cells = body[position].str.strip()
        values = pd.to_numeric(cells.where(cells != ""), errors="coerce")
        non_numeric = _first_line((cells != "") & values.isna())
        if non_numeric is not None:
            bad = cells.iloc[non_numeric - 2]
            problems.append((non_numeric, f"non-numeric value '{bad}' in column '{name}'"))
        infinite = _first_line(np.isinf(values))
        if infinite is not None:
            problems.append((infinite, f"infinite value in column '{name}'"))
        signals[name] = values.astype(np.float64)

    label_cells = body[len(header) - 1].str.strip()
    integral = label_cells.str.fullmatch(r"[+-]?\d+")
    line = _first_line(~integral)
    if line is not None:
        cell = label_cells.iloc[line - 2]
        problems.append((line, f"label '{cell}' is not an integer class id"))
    labels = pd.to_numeric(label_cells.where(integral, "0")).astype(np.int64)
    line = _first_line(integral & ((labels < 0) | (labels >= schema.n_classes)))
    if line is not None:
        problems.append(
            (
                line,
                f"unknown label {labels.iloc[line - 2]} "
                f"(classes 0..{schema.n_classes - 1})",
            )
        )
    if problems:
        line, message = min(problems)
        raise ParseError(message, source, line)

    return Recording(
        recording_id=recording_id or path.stem,
        sample_rate=schema.sample_rate,
        signals=signals.to_numpy(dtype=np.float64).reshape(len(body), len(schema.channels)),
        labels=labels.to_numpy(),
        channel_names=schema.channels,
        modality_map=schema.modality_map,
    )


def fill_missing(rec: Recording) -> Recording:
    """Linearly interpolate missing samples per channel.

    Leading and trailing gaps take the nearest present value.

    Raises:
        DataError: If a channel has no present sample at all.
    """
    if not rec.missing.any():
        return rec
    frame = pd.DataFrame(rec.signals, columns=list(rec.channel_names))
    empty = [name for name in frame.columns if frame[name].isna().all()]
    if empty:
        raise DataError(f"{rec.recording_id}: channel '{empty[0]}' has no samples")
    filled = frame.interpolate(method="linear", limit_direction="both")
    return replace(rec, signals=filled.to_numpy(dtype=np.float64))


def majority_label(labels: np.ndarray, ties: str = "first") -> int:
    """Most frequent label; ``ties`` picks the tied label occurring first or last."""
    values, counts = np.unique(labels, return_counts=True)
    tied = values[counts == counts.max()]
    if len(tied) == 1:
        return int(tied[0])
    if ties == "first":
        positions = [int(np.argmax(labels == v)) for v in tied]
        return int(tied[int(np.argmin(positions))])
    positions = [len(labels) - 1 - int(np.argmax(labels[::-1] == v)) for v in tied]
    return int(tied[int(np.argmax(positions))])


def block_bounds(n_samples: int, sample_rate: float, target_rate: float) -> np.ndarray:
    """Start indices ``floor(n * r)`` of the decimation blocks plus the final end index."""
    ratio = sample_rate / target_rate
    n_out = int(np.floor(n_samples * target_rate / sample_rate + 1e-9))
    bounds = np.floor(np.arange(n_out + 1) * ratio + 1e-9).astype(np.int64)
    return np.minimum(bounds, n_samples)


def downsample(rec: Recording, target_rate: float) -> Recording:
    """Decimate by block averaging over ``[floor(n r), floor((n+1) r))``, ``r = rate/target``.

    Labels take the block majority (ties: earliest label in the block).

    Raises:
        ValueError: If ``target_rate`` is not positive or exceeds the sampling rate.
    """
    if not target_rate > 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate > rec.sample_rate:
        raise ValueError(f"target_rate {target_rate} exceeds sample rate {rec.sample_rate}")
    if target_rate == rec.sample_rate:
        return rec

    bounds = block_bounds(len(rec), rec.sample_rate, target_rate)
    starts, ends = bounds[:-1], bounds[1:]
    if len(starts) == 0:
        signals = np.empty((0, rec.n_channels))
        labels = np.empty(0, dtype=np.int64)
    else:
        sums = np.add.reduceat(rec.signals, starts, axis=0)
        # reduceat runs the last block to the end of the array
        if ends[-1] < len(rec):
            sums[-1] -= rec.signals[ends[-1] :].sum(axis=0)
        signals = sums / (ends - starts)[:, None]
        labels = np.array(
            [majority_label(rec.labels[s:e], ties="first") for s, e in zip(starts, ends)],
            dtype=np.int64,
        )
    return replace(rec, sample_rate=float(target_rate), signals=signals, labels=labels)


@dataclass(frozen=True, eq=False)
class ChannelStats:
    """Per-channel mean and (floored) standard deviation.

    Attributes:
        mean: ``D`` means.
        std: ``D`` standard deviations, each at least ``STD_FLOOR``.
        provenance: Split the statistics were computed on; only ``"train"`` may standardize.
    """

    mean: np.ndarray
    std: np.ndarray
    provenance: str = TRAIN_PROVENANCE

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "provenance": self.provenance}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ChannelStats":
        return cls(
            mean=np.asarray(data["mean"], dtype=np.float64),
            std=np.asarray(data["std"], dtype=np.float64),
            provenance=str(data.get("provenance", TRAIN_PROVENANCE)),
        )


def stats_from_samples(samples: np.ndarray, provenance: str = TRAIN_PROVENANCE) -> ChannelStats:
    """Channel statistics of an ``N x D`` sample matrix.

    Raises:
        DataError: If there are no samples or some are missing.
    """
    if samples.shape[0] == 0:
        raise DataError("cannot compute channel statistics without samples")
    if np.isnan(samples).any():
        raise DataError("fill missing samples before computing channel statistics")
    mean = samples.mean(axis=0)
    std = samples.std(axis=0)
    low = std < STD_FLOOR
    if low.any():
        logger.warning(
            f"Flooring std of {int(low.sum())} near-constant channel(s) at {STD_FLOOR:g}: "
            f"{np.flatnonzero(low).tolist()}"
        )
        std = np.where(low, STD_FLOOR, std)
    return ChannelStats(mean=mean, std=std, provenance=provenance)


def compute_stats(
    recordings: Sequence[Recording], provenance: str = TRAIN_PROVENANCE
) -> ChannelStats:
    """Pooled per-channel statistics over the given (training) recordings."""
    if not recordings:
        raise DataError("cannot compute channel statistics without recordings")
    return stats_from_samples(np.concatenate([r.signals for r in recordings], axis=0), provenance)


def check_stats(stats: ChannelStats, n_channels: int) -> None:
    """Leakage and shape guard shared by the standardization helpers.

    Raises:
        DataError: If the statistics were not computed on the training split or have the
            wrong number of channels.
    """
    if stats.provenance != TRAIN_PROVENANCE:
        raise DataError(
            "standardization statistics must come from the training split, "
            f"got '{stats.provenance}'"
        )
    if stats.mean.shape != (n_channels,) or stats.std.shape != (n_channels,):
        raise DataError(f"statistics cover {stats.mean.shape[0]} channels, data has {n_channels}")


def standardize(rec: Recording, stats: ChannelStats) -> Recording:
    """``(x - mean) / std`` per channel, with training-split statistics."""
    check_stats(stats, rec.n_channels)
    return replace(rec, signals=(rec.signals - stats.mean) / stats.std)
