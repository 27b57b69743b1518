"""Run configuration loading and validation.

Precedence across sources:
1. CLI arguments (highest priority, dotted keys such as ``training.seed``)
2. The JSON config file (``attnhar.config.json`` by convention)
3. ``Config.DEFAULT_CONFIG`` (lowest priority)

The file has four sections::

    {
      "dataset":  {"synthetic": {...}} or {"paths": {...}, "manifest": ...} or {"recordings": ...},
      "model":    {"variant": "temporal_sensor", "hidden_size": 128, "lambda1": 0.1, ...},
      "training": {"learning_rate": 0.05, "max_grad_norm": 1.0, "batch_size": 64, ...},
      "output":   {"dir": "runs", "checkpoint": "model.ckpt", ...}
    }

Relative paths are resolved against the directory holding the config file.

Example:
    >>> config = load_config(Path("attnhar.config.json"), {"training.seed": 3})
    >>> run = config.to_run_config()
    >>> run.training.seed
    3
"""

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Final, List, Optional, Tuple

from attnhar.data.synthetic import SyntheticSpec
from attnhar.data.windowing import LABEL_RULES, PRESETS, Preset
from attnhar.errors import ConfigError
from attnhar.model.params import LossConfig
from attnhar.training.trainer import TrainConfig

SPLITS: Final[Tuple[str, str, str]] = ("train", "val", "test")


@dataclass(frozen=True)
class SplitRule:
    """How windows of ``recordings`` are divided into train/val/test."""

    rule: str = "recordings"
    val_ids: Tuple[str, ...] = ()
    test_ids: Tuple[str, ...] = ()
    fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class DatasetConfig:
    """Where windows come from and how they are cut.

    Exactly one of ``synthetic``, ``paths`` and ``recordings`` is set.
    """

    synthetic: Optional[SyntheticSpec] = None
    paths: Optional[Dict[str, Tuple[Path, ...]]] = None
    recordings: Optional[Tuple[Path, ...]] = None
    split: SplitRule = field(default_factory=SplitRule)
    manifest: Optional[Path] = None
    preset: Optional[Preset] = None
    target_rate: Optional[float] = None
    window_seconds: Optional[float] = None
    overlap: Optional[float] = None
    label_rule: str = "majority"
    ground_truth: Optional[Dict[str, Path]] = None

    @property
    def source(self) -> str:
        if self.synthetic is not None:
            return "synthetic"
        return "paths" if self.paths is not None else "recordings"


@dataclass(frozen=True)
class OutputConfig:
    dir: Path
    checkpoint: Path
    history: Path
    report: Path
    report_markdown: Path
    trace: Path
    synthetic_dir: Path


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully resolved configuration of one command."""

    dataset: DatasetConfig
    training: TrainConfig
    output: OutputConfig
    base_dir: Path


class Config:
    """Configuration manager: defaults, then the config file, then CLI overrides.

    Attributes:
        config_file: Path of the JSON file, or None for defaults only.
        base_dir: Directory relative paths are resolved against.
        config: Merged configuration, one dictionary per section.

    Class Attributes:
        DEFAULT_CONFIG: Default values of every section.

    Raises:
        ConfigError: If the file is missing, unreadable, not valid JSON or has unknown sections.
    """

    DEFAULT_CONFIG: Final[Dict[str, Dict[str, Any]]] = {
        "dataset": {
            "synthetic": None,
            "paths": None,
            "recordings": None,
            "split": None,
            "manifest": None,
            "preset": None,
            "target_rate": None,
            "window_seconds": None,
            "overlap": None,
            "label_rule": "majority",
            "ground_truth": None,
        },
        "model": {
            "variant": "temporal_sensor",
            "hidden_size": 128,
            "sensor_hidden": None,
            "stacked": False,
            "cell_bias": False,
            "lambda1": 0.1,
            "lambda2": 0.5,
        },
        "training": {
            "learning_rate": 0.05,
            "max_grad_norm": 1.0,
            "batch_size": 64,
            "max_epochs": 30,
            "patience": 5,
            "seed": 0,
            "tie_break": "earlier",
        },
        "output": {
            "dir": "runs",
            "checkpoint": "model.ckpt",
            "history": "history.csv",
            "report": "report.json",
            "report_markdown": "report.md",
            "trace": "trace.jsonl",
            "synthetic_dir": "synthetic",
        },
    }

    def __init__(self, config_file: Optional[Path] = None):
        self.config_file = config_file
        self.base_dir = config_file.parent if config_file is not None else Path.cwd()
        self.config: Dict[str, Dict[str, Any]] = copy.deepcopy(self.DEFAULT_CONFIG)
        if config_file is not None:
            self._load_config()

    def _load_config(self) -> None:
        assert self.config_file is not None
        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                file_config = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON at line {e.lineno}: {e.msg}", str(self.config_file))
        except OSError as e:
            raise ConfigError(f"cannot read config file ({e.strerror})", str(self.config_file))
        if not isinstance(file_config, dict):
            raise ConfigError("must hold a JSON object", str(self.config_file))
        self._merge(file_config)

    def _merge(self, overrides: Dict[str, Any]) -> None:
        for section, values in overrides.items():
            if section not in self.config:
                raise ConfigError(f"unknown section, expected {sorted(self.config)}", section)
            if not isinstance(values, dict):
                raise ConfigError("must be a JSON object", section)
            for key, value in values.items():
                if key not in self.config[section]:
                    raise ConfigError("unknown key", f"{section}.{key}")
                self.config[section][key] = value

    def merge_cli_config(self, cli_config: Dict[str, Any]) -> None:
        """Override values with dotted CLI keys, e.g. ``{"training.seed": 7}``.

        ``None`` values mean "not given" and are skipped.
        """
        for dotted, value in cli_config.items():
            if value is None:
                continue
            section, _, key = dotted.partition(".")
            self._merge({section: {key: value}})

    def get(self, key: str, default: Optional[Any] = None) -> Any:
        """Value of a dotted key such as ``model.variant``."""
        section, _, name = key.partition(".")
        return self.config.get(section, {}).get(name, default)

    def resolve(self, value: Any) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    def _dataset(self) -> DatasetConfig:
        ds = self.config["dataset"]
        sources = [k for k in ("synthetic", "paths", "recordings") if ds[k] is not None]
        if len(sources) != 1:
            raise ConfigError(
                f"exactly one of synthetic, paths, recordings must be set, got {sources or 'none'}",
                "dataset",
            )

        synthetic = None
        if ds["synthetic"] is not None:
            if not isinstance(ds["synthetic"], dict):
                raise ConfigError("must be a JSON object", "dataset.synthetic")
            synthetic = SyntheticSpec.from_dict(ds["synthetic"])

        paths = None
        if ds["paths"] is not None:
            if not isinstance(ds["paths"], dict) or set(ds["paths"]) != set(SPLITS):
                raise ConfigError(f"must map each of {list(SPLITS)} to CSV files", "dataset.paths")
            paths = {
                split: self._path_list(ds["paths"][split], f"dataset.paths.{split}")
                for split in SPLITS
            }

        recordings = None
        if ds["recordings"] is not None:
            recordings = self._path_list(ds["recordings"], "dataset.recordings")

        preset = None
        if ds["preset"] is not None:
            if ds["preset"] not in PRESETS:
                raise ConfigError(
                    f"unknown preset, expected one of {sorted(PRESETS)}", "dataset.preset"
                )
            preset = PRESETS[ds["preset"]]

        if synthetic is None and ds["manifest"] is None:
            raise ConfigError("CSV datasets need a manifest", "dataset.manifest")
        if ds["label_rule"] not in LABEL_RULES:
            raise ConfigError(f"must be one of {list(LABEL_RULES)}", "dataset.label_rule")
        for key in ("target_rate", "window_seconds"):
            if ds[key] is not None and not (isinstance(ds[key], (int, float)) and ds[key] > 0):
                raise ConfigError(f"must be a positive number, got {ds[key]}", f"dataset.{key}")
        if ds["overlap"] is not None and not (
            isinstance(ds["overlap"], (int, float)) and 0 <= ds["overlap"] < 1
        ):
            raise ConfigError(f"must lie in [0, 1), got {ds['overlap']}", "dataset.overlap")

        ground_truth = None
        if ds["ground_truth"] is not None:
            sidecars = ds["ground_truth"]
            if not isinstance(sidecars, dict) or not set(sidecars) <= set(SPLITS):
                raise ConfigError("must map split names to sidecar files", "dataset.ground_truth")
            ground_truth = {k: self.resolve(v) for k, v in ds["ground_truth"].items()}

        return DatasetConfig(
            synthetic=synthetic,
            paths=paths,
            recordings=recordings,
            split=self._split_rule(ds["split"], preset),
            manifest=self.resolve(ds["manifest"]) if ds["manifest"] is not None else None,
            preset=preset,
            target_rate=ds["target_rate"],
            window_seconds=ds["window_seconds"],
            overlap=ds["overlap"],
            label_rule=ds["label_rule"],
            ground_truth=ground_truth,
        )

    def _path_list(self, value: Any, name: str) -> Tuple[Path, ...]:
        items: List[Any] = [value] if isinstance(value, str) else value
        if not isinstance(items, list) or not all(isinstance(v, str) for v in items):
            raise ConfigError("must be a path or a list of paths", name)
        return tuple(self.resolve(v) for v in items)

    @staticmethod
    def _split_rule(value: Any, preset: Optional[Preset]) -> SplitRule:
        if value is None:
            if preset is None:
                return SplitRule()
            return SplitRule(preset.split, preset.val_ids, preset.test_ids, preset.fractions)
        if not isinstance(value, dict):
            raise ConfigError("must be a JSON object", "dataset.split")
        rule = value.get("rule", "recordings")
        if rule not in ("recordings", "per_class"):
            raise ConfigError("rule must be 'recordings' or 'per_class'", "dataset.split")
        fractions = tuple(value.get("fractions", (0.8, 0.1, 0.1)))
        if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(
                "fractions must be three non-negative values summing to 1", "dataset.split"
            )
        return SplitRule(
            rule=rule,
            val_ids=tuple(str(i) for i in value.get("val_ids", ())),
            test_ids=tuple(str(i) for i in value.get("test_ids", ())),
            fractions=fractions,  # type: ignore[arg-type]
        )

    def _training(self) -> TrainConfig:
        model, training = self.config["model"], self.config["training"]
        try:
            loss = LossConfig(
                variant=model["variant"], lambda1=model["lambda1"], lambda2=model["lambda2"]
            )
        except ConfigError as e:
            raise ConfigError(e.message, f"model.{e.field}") from e
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e), "model")
        try:
            return TrainConfig(
                hidden_size=model["hidden_size"],
                sensor_hidden=model["sensor_hidden"],
                stacked=bool(model["stacked"]),
                cell_bias=bool(model["cell_bias"]),
                loss=loss,
                **training,
            )
        except ConfigError as e:
            section = "model" if e.field in ("hidden_size", "sensor_hidden") else "training"
            raise ConfigError(e.message, f"{section}.{e.field}") from e
        except TypeError as e:
            raise ConfigError(str(e), "training")

    def _output(self) -> OutputConfig:
        out = self.config["output"]
        out_dir = self.resolve(out["dir"])

        def under(key: str) -> Path:
            path = Path(out[key])
            return path if path.is_absolute() else out_dir / path

        return OutputConfig(
            dir=out_dir,
            checkpoint=under("checkpoint"),
            history=under("history"),
            report=under("report"),
            report_markdown=under("report_markdown"),
            trace=under("trace"),
            synthetic_dir=self.resolve(out["synthetic_dir"]),
        )

    def to_run_config(self) -> RunConfig:
        """Validate every section.

        Raises:
            ConfigError: Naming the offending field, e.g. ``model.lambda1``.
        """
        return RunConfig(
            dataset=self._dataset(),
            training=self._training(),
            output=self._output(),
            base_dir=self.base_dir,
        )

    def __repr__(self) -> str:
        return f"Config({self.config})"


def load_config(
    config_path: Optional[Path], cli_overrides: Optional[Dict[str, Any]] = None
) -> Config:
    """Factory: load ``config_path`` (or defaults only) and apply CLI overrides.

    Example:
        >>> config = load_config(Path("attnhar.config.json"), {"training.seed": 1})
        >>> config.get("training.seed")
        1
    """
    config = Config(config_path)

    if cli_overrides:
        config.merge_cli_config(cli_overrides)

    return config
