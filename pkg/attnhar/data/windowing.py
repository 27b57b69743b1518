"""Sliding-window segmentation, dataset presets and train/validation/test splits."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Final, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np

from attnhar.data.recording import (
    ChannelStats,
    Recording,
    check_stats,
    majority_label,
    stats_from_samples,
)
from attnhar.errors import DataError

logger = logging.getLogger(__name__)

LabelRule = Literal["majority", "last_sample"]
LABEL_RULES: Final[Tuple[str, ...]] = ("majority", "last_sample")


@dataclass(frozen=True)
class MotifTruth:
    """Where a synthetic motif was planted: steps ``start..end`` (inclusive) of ``modality``."""

    start: int
    end: int
    modality: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def to_dict(self) -> Dict[str, int]:
        return {"start": self.start, "end": self.end, "modality": self.modality}


@dataclass(frozen=True, eq=False)
class SequenceWindow:
    """One labeled ``T x D`` input segment and where it came from."""

    X: np.ndarray
    y: int
    recording_id: str
    start: int
    ground_truth: Optional[MotifTruth] = None

    @property
    def length(self) -> int:
        return int(self.X.shape[0])


def round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def window_length(window_seconds: float, sample_rate: float) -> int:
    """Samples per window, ``round(seconds * rate)``.

    Raises:
        ValueError: If the window would hold no sample.
    """
    length = round_half_up(window_seconds * sample_rate)
    if length < 1:
        raise ValueError(
            f"window of {window_seconds} s at {sample_rate} Hz holds no sample (L = {length})"
        )
    return length


def window_step(length: int, overlap: float) -> int:
    """Hop between window starts, ``max(1, round(L * (1 - overlap)))``."""
    if not 0.0 <= overlap < 1.0:
        raise ValueError(f"overlap must lie in [0, 1), got {overlap}")
    return max(1, round_half_up(length * (1.0 - overlap)))


def expected_window_count(n_samples: int, length: int, step: int) -> int:
    if n_samples < length:
        return 0
    return (n_samples - length) // step + 1


def window_label(labels: np.ndarray, label_rule: LabelRule = "majority") -> int:
    """Label of a window; majority ties go to the label of the last sample."""
    if label_rule == "last_sample":
        return int(labels[-1])
    if label_rule == "majority":
        return majority_label(labels, ties="last")
    raise ValueError(f"label_rule must be one of {LABEL_RULES}, got '{label_rule}'")


def window(
    rec: Recording,
    window_seconds: float,
    overlap: float,
    label_rule: LabelRule = "majority",
) -> List[SequenceWindow]:
    """Cut a recording into full-length windows at starts ``0, S, 2S, ...``.

    A trailing partial window is dropped; a recording shorter than one window yields none.

    Raises:
        ValueError: On a window shorter than one sample, an overlap outside ``[0, 1)`` or an
            unknown label rule.
    """
    if label_rule not in LABEL_RULES:
        raise ValueError(f"label_rule must be one of {LABEL_RULES}, got '{label_rule}'")
    length = window_length(window_seconds, rec.sample_rate)
    step = window_step(length, overlap)
    count = expected_window_count(len(rec), length, step)
    if count == 0:
        logger.debug(f"{rec.recording_id}: {len(rec)} samples, shorter than one window ({length})")

    windows = []
    for start in range(0, count * step, step):
        stop = start + length
        windows.append(
            SequenceWindow(
                X=rec.signals[start:stop].copy(),
                y=window_label(rec.labels[start:stop], label_rule),
                recording_id=rec.recording_id,
                start=start,
            )
        )
    return windows


@dataclass(frozen=True)
class Preset:
    """Published preprocessing recipe of a benchmark dataset.

    ``split`` is ``"recordings"`` (held-out participants, matched by recording-id prefix) or
    ``"per_class"`` (chronological fractions per class).
    """

    name: str
    target_rate: float
    window_seconds: float
    overlap: float
    n_channels: int
    split: Literal["recordings", "per_class"]
    val_ids: Tuple[str, ...] = ()
    test_ids: Tuple[str, ...] = ()
    fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    description: str = ""

    @property
    def length(self) -> int:
        return window_length(self.window_seconds, self.target_rate)

    @property
    def step(self) -> int:
        return window_step(self.length, self.overlap)


PRESETS: Final[Dict[str, Preset]] = {
    "pamap2": Preset(
        name="pamap2",
        target_rate=100.0 / 3.0,
        window_seconds=5.12,
        overlap=0.78,
        n_channels=52,
        split="recordings",
        val_ids=("subject105",),
        test_ids=("subject106",),
        description="PAMAP2 physical activities, 100 Hz downsampled 3:1, participant 6 held out",
    ),
    "dg": Preset(
        name="dg",
        target_rate=32.0,
        window_seconds=1.0,
        overlap=0.0,
        n_channels=9,
        split="recordings",
        val_ids=("S09",),
        test_ids=("S02",),
        description="Daphnet Gait, binary freezing-of-gait vs. no freezing, participant 2 held out",
    ),
    "skoda": Preset(
        name="skoda",
        target_rate=33.0,
        window_seconds=1.0,
        overlap=0.0,
        n_channels=60,
        split="per_class",
        description="Skoda checkpoint gestures, 80/10/10 chronological split per class",
    ),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset '{name}', expected one of {sorted(PRESETS)}")


@dataclass(frozen=True, eq=False)
class WindowDataset:
    """Windows of one split plus the dataset-wide layout they share."""

    windows: Tuple[SequenceWindow, ...]
    n_classes: int
    modality_map: Tuple[int, ...]
    class_names: Tuple[str, ...] = ()
    channel_names: Tuple[str, ...] = ()
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "windows", tuple(self.windows))
        if not self.class_names:
            names = tuple(f"class_{c}" for c in range(self.n_classes))
            object.__setattr__(self, "class_names", names)
        if len(self.class_names) != self.n_classes:
            raise DataError(f"{len(self.class_names)} class names for {self.n_classes} classes")
        lengths = {w.X.shape for w in self.windows}
        if len(lengths) > 1:
            raise DataError(f"{self.name or 'dataset'}: windows differ in shape {sorted(lengths)}")
        for w in self.windows:
            if not 0 <= w.y < self.n_classes:
                raise DataError(f"window label {w.y} outside [0, {self.n_classes})")
            if w.X.shape[1] != len(self.modality_map):
                raise DataError(
                    f"window has {w.X.shape[1]} channels, modality map {len(self.modality_map)}"
                )

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)

    @property
    def n_channels(self) -> int:
        return len(self.modality_map)

    @property
    def n_modalities(self) -> int:
        return max(self.modality_map) + 1 if self.modality_map else 0

    @property
    def window_length(self) -> int:
        return self.windows[0].length if self.windows else 0

    @property
    def X(self) -> np.ndarray:
        """``(N, T, D)`` stacked windows."""
        if not self.windows:
            return np.empty((0, 0, self.n_channels))
        return np.stack([w.X for w in self.windows])

    @property
    def y(self) -> np.ndarray:
        return np.array([w.y for w in self.windows], dtype=np.int64)

    def with_windows(self, windows: Iterable[SequenceWindow], name: str = "") -> "WindowDataset":
        return WindowDataset(
            windows=tuple(windows),
            n_classes=self.n_classes,
            modality_map=self.modality_map,
            class_names=self.class_names,
            channel_names=self.channel_names,
            name=name or self.name,
        )

    def head(self, n: int) -> "WindowDataset":
        return self.with_windows(self.windows[:n])

    def check_compatible(self, other: "WindowDataset") -> None:
        """Raise DataError if ``other`` differs in channels, classes, modalities or T."""
        if (other.n_channels, other.n_classes, other.modality_map) != (
            self.n_channels,
            self.n_classes,
            self.modality_map,
        ):
            raise DataError(
                f"{other.name or 'split'} layout (D={other.n_channels}, C={other.n_classes}) "
                f"differs from {self.name or 'split'} (D={self.n_channels}, C={self.n_classes})"
            )
        if self.windows and other.windows and other.window_length != self.window_length:
            raise DataError(
                f"window length {other.window_length} differs from {self.window_length}"
            )


def _matches(recording_id: str, ids: Sequence[str]) -> bool:
    return any(recording_id.startswith(i) for i in ids)


def split_by_recordings(
    windows: Sequence[SequenceWindow], val_ids: Sequence[str], test_ids: Sequence[str]
) -> Tuple[List[SequenceWindow], List[SequenceWindow], List[SequenceWindow]]:
    """Hold out whole recordings (participants) for validation and test.

    Ids match recordings by prefix, so ``"S02"`` selects ``S02R01`` and ``S02R02``.

    Raises:
        DataError: If an id matches no window or lands in both held-out sets.
    """
    overlap = set(val_ids) & set(test_ids)
    if overlap:
        raise DataError(f"recording ids {sorted(overlap)} are both validation and test")
    recording_ids = {w.recording_id for w in windows}
    for i in list(val_ids) + list(test_ids):
        if not any(r.startswith(i) for r in recording_ids):
            raise DataError(f"recording id '{i}' matches no recording")

    train, val, test = [], [], []
    for w in windows:
        if _matches(w.recording_id, test_ids):
            test.append(w)
        elif _matches(w.recording_id, val_ids):
            val.append(w)
        else:
            train.append(w)
    return train, val, test


def fraction_counts(n: int, fractions: Tuple[float, float, float]) -> Tuple[int, int]:
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(
            f"split fractions must be three non-negative values summing to 1, got {fractions}"
        )
    n_train = int(np.floor(n * fractions[0] + 1e-9))
    n_val = int(np.floor(n * fractions[1] + 1e-9))
    return n_train, n_val


def split_per_class(
    windows: Sequence[SequenceWindow], fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
) -> Tuple[List[SequenceWindow], List[SequenceWindow], List[SequenceWindow]]:
    """Chronological split within each class: first share trains, next validates, rest tests."""
    assignment = np.zeros(len(windows), dtype=np.int64)
    labels = np.array([w.y for w in windows], dtype=np.int64)
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        n_train, n_val = fraction_counts(len(members), fractions)
        assignment[members[n_train : n_train + n_val]] = 1
        assignment[members[n_train + n_val :]] = 2
    splits: Tuple[List[SequenceWindow], ...] = ([], [], [])
    for w, a in zip(windows, assignment):
        splits[a].append(w)
    return splits[0], splits[1], splits[2]


def split_shuffled(
    windows: Sequence[SequenceWindow],
    fractions: Tuple[float, float, float],
    rng: np.random.Generator,
) -> Tuple[List[SequenceWindow], List[SequenceWindow], List[SequenceWindow]]:
    """Random split by fractions, using ``rng`` for the permutation."""
    order = rng.permutation(len(windows))
    n_train, n_val = fraction_counts(len(windows), fractions)
    picked = [windows[i] for i in order]
    return picked[:n_train], picked[n_train : n_train + n_val], picked[n_train + n_val :]


def window_stats(dataset: WindowDataset) -> ChannelStats:
    """Channel statistics over every sample of the (training) windows."""
    if not dataset.windows:
        raise DataError(f"{dataset.name or 'dataset'}: no windows to compute statistics on")
    return stats_from_samples(dataset.X.reshape(-1, dataset.n_channels))


def standardize_windows(dataset: WindowDataset, stats: ChannelStats) -> WindowDataset:
    """Standardize every window with training-split statistics."""
    check_stats(stats, dataset.n_channels)
    return dataset.with_windows(
        SequenceWindow(
            X=(w.X - stats.mean) / stats.std,
            y=w.y,
            recording_id=w.recording_id,
            start=w.start,
            ground_truth=w.ground_truth,
        )
        for w in dataset.windows
    )
