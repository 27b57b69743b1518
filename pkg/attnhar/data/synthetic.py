"""Planted-motif benchmark with attention ground truth.

Every window is Gaussian noise on all channels plus one class-specific biased sinusoid
``A_c * (1.5 + sin(2 pi f_c tau / rate))`` written into a random contiguous interval of the
channels of the class's informative modality. The interval and modality are kept as
:class:`MotifTruth` so learned attention can be scored against them.
"""

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Final, List, Tuple

import numpy as np

from attnhar.data.recording import DatasetManifest
from attnhar.data.windowing import (
    MotifTruth,
    SequenceWindow,
    WindowDataset,
    fraction_counts,
)
from attnhar.errors import ConfigError, DataError, ParseError
from attnhar.model.params import contiguous_modality_map

logger = logging.getLogger(__name__)

MOTIF_BIAS: Final[float] = 1.5
SPLIT_FRACTIONS: Final[Tuple[float, float, float]] = (0.7, 0.15, 0.15)
SPLIT_NAMES: Final[Tuple[str, str, str]] = ("train", "val", "test")


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and randomness of a planted-motif dataset.

    Per-class settings left empty default to frequency ``1 + 2c`` Hz, amplitude 1 and
    informative modality ``c mod M``.
    """

    n_windows: int = 2000
    T: int = 64
    D: int = 6
    M: int = 3
    C: int = 2
    frequencies: Tuple[float, ...] = ()
    amplitudes: Tuple[float, ...] = ()
    informative_modality: Tuple[int, ...] = ()
    motif_min: int = 8
    motif_max: int = 19
    noise_std: float = 0.5
    sample_rate: float = 32.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_windows", "T", "D", "M", "C", "motif_min", "motif_max"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"must be a positive integer, got {value}", f"synthetic.{name}")
        if self.M > self.D:
            raise ConfigError(f"{self.M} modalities for {self.D} channels", "synthetic.M")
        if self.motif_min > self.motif_max:
            raise ConfigError("motif_min exceeds motif_max", "synthetic.motif_min")
        if self.motif_max > self.T:
            raise ConfigError(
                f"motif of {self.motif_max} steps exceeds T={self.T}", "synthetic.motif_max"
            )
        if not self.noise_std >= 0:
            raise ConfigError(f"must be non-negative, got {self.noise_std}", "synthetic.noise_std")
        if not self.sample_rate > 0:
            raise ConfigError(f"must be positive, got {self.sample_rate}", "synthetic.sample_rate")

        defaults = {
            "frequencies": tuple(1.0 + 2.0 * c for c in range(self.C)),
            "amplitudes": (1.0,) * self.C,
            "informative_modality": tuple(c % self.M for c in range(self.C)),
        }
        for name, default in defaults.items():
            value = tuple(getattr(self, name)) or default
            if len(value) != self.C:
                raise ConfigError(f"needs one entry per class ({self.C})", f"synthetic.{name}")
            object.__setattr__(self, name, value)
        for c, m in enumerate(self.informative_modality):
            if not 0 <= m < self.M:
                raise ConfigError(
                    f"class {c} uses modality {m}, expected [0, {self.M})",
                    "synthetic.informative_modality",
                )

    @property
    def modality_map(self) -> Tuple[int, ...]:
        return contiguous_modality_map(self.D, self.M)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown keys {unknown}", "synthetic")
        values = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(str(e), "synthetic")


def motif_waveform(spec: SyntheticSpec, label: int, length: int) -> np.ndarray:
    tau = np.arange(length)
    phase = 2.0 * np.pi * spec.frequencies[label] * tau / spec.sample_rate
    return spec.amplitudes[label] * (MOTIF_BIAS + np.sin(phase))


def gen_windows(spec: SyntheticSpec) -> List[SequenceWindow]:
    """All windows of the dataset in generation order, classes balanced."""
    rng = np.random.default_rng(spec.seed)
    labels = rng.permutation(np.arange(spec.n_windows) % spec.C)
    modality_map = np.asarray(spec.modality_map)

    windows = []
    for n, label in enumerate(labels):
        label = int(label)
        X = rng.normal(0.0, spec.noise_std, size=(spec.T, spec.D))
        length = int(rng.integers(spec.motif_min, spec.motif_max + 1))
        start = int(rng.integers(0, spec.T - length + 1))
        modality = spec.informative_modality[label]
        channels = np.flatnonzero(modality_map == modality)
        X[start : start + length, channels] += motif_waveform(spec, label, length)[:, None]
        windows.append(
            SequenceWindow(
                X=X,
                y=label,
                recording_id="synthetic",
                start=n * spec.T,
                ground_truth=MotifTruth(start=start, end=start + length - 1, modality=modality),
            )
        )
    return windows


def gen_synthetic(spec: SyntheticSpec) -> Tuple[WindowDataset, WindowDataset, WindowDataset]:
    """Deterministic 70/15/15 train/validation/test split of a planted-motif dataset."""
    windows = gen_windows(spec)
    n_train, n_val = fraction_counts(len(windows), SPLIT_FRACTIONS)
    parts = (windows[:n_train], windows[n_train : n_train + n_val], windows[n_train + n_val :])
    logger.debug(
        f"Generated {len(windows)} synthetic windows "
        f"({len(parts[0])}/{len(parts[1])}/{len(parts[2])}), seed {spec.seed}"
    )
    return tuple(  # type: ignore[return-value]
        WindowDataset(
            windows=tuple(
                SequenceWindow(w.X, w.y, name, k * spec.T, w.ground_truth)
                for k, w in enumerate(part)
            ),
            n_classes=spec.C,
            modality_map=spec.modality_map,
            class_names=tuple(f"class_{c}" for c in range(spec.C)),
            channel_names=channel_names(spec),
            name=name,
        )
        for name, part in zip(SPLIT_NAMES, parts)
    )


def channel_names(spec: SyntheticSpec) -> Tuple[str, ...]:
    return tuple(f"m{m}_ch{d}" for d, m in enumerate(spec.modality_map))


def synthetic_manifest(spec: SyntheticSpec) -> DatasetManifest:
    """Manifest describing the CSV files written by :func:`write_synthetic`."""
    return DatasetManifest(
        sample_rate=spec.sample_rate,
        channels=channel_names(spec),
        modality_map=spec.modality_map,
        modality_names=tuple(f"m{m}" for m in range(spec.M)),
        class_names=tuple(f"class_{c}" for c in range(spec.C)),
        extra={
            "window": {"seconds": spec.T / spec.sample_rate, "overlap": 0.0},
            "files": {name: f"{name}.csv" for name in SPLIT_NAMES},
            "ground_truth": {name: f"{name}.truth.jsonl" for name in SPLIT_NAMES},
            "synthetic": spec.to_dict(),
        },
    )


def _format(value: float) -> str:
    return repr(float(value))


def write_synthetic(
    spec: SyntheticSpec,
    splits: Tuple[WindowDataset, WindowDataset, WindowDataset],
    out_dir: Path,
) -> List[Path]:
    """Write each split as one CSV of concatenated windows, plus manifest and truth sidecars.

    Window ``k`` of a split occupies rows ``k*T .. (k+1)*T - 1``; the ground-truth line
    ``{"window": k, ...}`` describes it.

    Raises:
        DataError: If the directory cannot be written.
    """
    out_dir = Path(out_dir)
    manifest = synthetic_manifest(spec)
    written: List[Path] = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, dataset in zip(SPLIT_NAMES, splits):
            csv_path = out_dir / f"{name}.csv"
            with open(csv_path, "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(["timestamp", *manifest.channels, "label"])
                row = 0
                for w in dataset.windows:
                    for x in w.X:
                        writer.writerow(
                            [_format(row / spec.sample_rate), *map(_format, x), w.y]
                        )
                        row += 1
            truth_path = out_dir / f"{name}.truth.jsonl"
            with open(truth_path, "w", encoding="utf-8") as f:
                for k, w in enumerate(dataset.windows):
                    assert w.ground_truth is not None
                    record = {"window": k, "y": w.y, **w.ground_truth.to_dict()}
                    f.write(json.dumps(record, sort_keys=True) + "\n")
            written += [csv_path, truth_path]

        manifest_path = out_dir / "manifest.json"
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(manifest.to_dict(), f, indent=2)
            f.write("\n")
        written.append(manifest_path)
    except OSError as e:
        raise DataError(f"cannot write synthetic dataset to {out_dir}: {e}")
    return written


def load_ground_truth(path: Path) -> Dict[int, MotifTruth]:
    """Read a ground-truth sidecar, keyed by window index.

    Raises:
        ParseError: On malformed lines.
        DataError: If the file cannot be read.
    """
    truth: Dict[int, MotifTruth] = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise DataError(f"cannot read ground truth {path}: {e}")
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            truth[int(record["window"])] = MotifTruth(
                start=int(record["start"]), end=int(record["end"]), modality=int(record["modality"])
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ParseError(f"bad ground-truth record ({e})", str(path), n)
    return truth


def attach_ground_truth(dataset: WindowDataset, truth: Dict[int, MotifTruth]) -> WindowDataset:
    """Attach sidecar truth to windows by their index in the dataset.

    Raises:
        DataError: If the sidecar covers a different number of windows or a motif falls
            outside its window.
    """
    if len(truth) != len(dataset):
        raise DataError(f"ground truth covers {len(truth)} windows, dataset has {len(dataset)}")
    windows = []
    for k, w in enumerate(dataset.windows):
        gt = truth.get(k)
        if gt is None or not 0 <= gt.start <= gt.end < w.length:
            raise DataError(f"ground truth of window {k} is missing or outside [0, {w.length})")
        windows.append(SequenceWindow(w.X, w.y, w.recording_id, w.start, gt))
    return dataset.with_windows(windows)

