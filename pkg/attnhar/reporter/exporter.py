"""Export of evaluation reports, training histories and attention traces.

Formats:
- JSON: machine-readable evaluation report
- Markdown: human-readable report with a per-class table
- CSV: one row per training epoch
- JSON lines: one attention trace record per window

Files hold no wall-clock data, so reruns with one seed produce identical bytes.

Example:
    >>> Exporter.export_report_json(result, Path("report.json"), metadata={"split": "test"})
    >>> Exporter.export_history_csv(history, Path("history.csv"))
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from attnhar.data.windowing import MotifTruth, WindowDataset
from attnhar.model.network import attention_mass_in_interval, mean_modality_weight
from attnhar.reporter.metrics import EvalReport
from attnhar.training.trainer import Prediction, TrainHistory


@dataclass(frozen=True)
class TraceRecord:
    """Attention behind one window's prediction.

    Attributes:
        window: Index of the window in its split.
        recording_id: Recording the window was cut from.
        start: First sample of the window in that recording.
        true_class: Label.
        predicted_class: Model decision.
        alpha: ``T`` temporal weights.
        beta: ``T x M`` sensor weights.
        X: Raw window, only when requested.
        ground_truth: Planted motif of synthetic windows.
    """

    window: int
    recording_id: str
    start: int
    true_class: int
    predicted_class: int
    alpha: List[float]
    beta: List[List[float]]
    X: Optional[List[List[float]]] = None
    ground_truth: Optional[MotifTruth] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "window": self.window,
            "recording_id": self.recording_id,
            "start": self.start,
            "true_class": self.true_class,
            "predicted_class": self.predicted_class,
            "alpha": self.alpha,
            "beta": self.beta,
        }
        if self.X is not None:
            data["X"] = self.X
        if self.ground_truth is not None:
            gt = self.ground_truth
            data["ground_truth"] = gt.to_dict()
            data["motif_alpha_mass"] = float(
                attention_mass_in_interval(np.asarray(self.alpha), gt.start, gt.end)
            )
            data["motif_beta_weight"] = float(
                mean_modality_weight(np.asarray(self.beta), gt.modality)
            )
        return data


def trace_records(
    dataset: WindowDataset, prediction: Prediction, include_x: bool = False
) -> List[TraceRecord]:
    """Pair each window with its prediction and attention weights."""
    records = []
    for k, w in enumerate(dataset.windows):
        trace = prediction.trace.window(k)
        records.append(
            TraceRecord(
                window=k,
                recording_id=w.recording_id,
                start=w.start,
                true_class=w.y,
                predicted_class=int(prediction.classes[k]),
                alpha=trace.alpha.tolist(),
                beta=trace.beta.tolist(),
                X=w.X.tolist() if include_x else None,
                ground_truth=w.ground_truth,
            )
        )
    return records


class Exporter:
    """Static helpers writing run outputs.

    Methods:
        export_report_json: Evaluation report as JSON.
        export_report_markdown: Evaluation report as Markdown.
        export_history_csv: Training history, one row per epoch.
        export_trace_jsonl: Attention traces, one JSON object per line.
    """

    @staticmethod
    def _open(output_path: Path, newline: Optional[str] = None):
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        return open(output_path, "w", encoding="utf-8", newline=newline)

    @staticmethod
    def export_report_json(
        result: EvalReport, output_path: Path, metadata: Optional[Dict[str, Any]] = None
    ) -> None:
        """Write the report under ``"report"`` next to caller-supplied ``"metadata"``.

        Output Structure:
            {
              "metadata": {"split": "test", "variant": "temporal", ...},
              "report": {"mean_f1": 0.97, "weighted_f1": ..., "per_class": [...], ...}
            }
        """
        data = {"metadata": dict(metadata or {}), "report": result.to_dict()}
        with Exporter._open(output_path) as f:
            json.dump(data, f, indent=2, ensure_ascii=False, sort_keys=True)
            f.write("\n")

    @staticmethod
    def export_report_markdown(
        result: EvalReport, output_path: Path, metadata: Optional[Dict[str, Any]] = None
    ) -> None:
        """Write a Markdown report: summary, run details and a per-class table."""
        lines = [
            "# Attention LSTM Evaluation Report",
            "",
            "## Summary",
            "",
            f"- Windows: {result.total}",
            f"- Mean F1: {result.mean_f1:.4f}",
            f"- Weighted F1: {result.weighted_f1:.4f}",
            f"- Accuracy: {result.accuracy:.4f}",
            "",
        ]

        if metadata:
            lines.extend(["## Run Details", ""])
            lines.extend(f"- **{key}:** `{value}`" for key, value in metadata.items())
            lines.append("")

        lines.extend(
            [
                "## Per-class Scores",
                "",
                "| Class | Precision | Recall | F1 | Support |",
                "|-------|-----------|--------|----|---------|",
            ]
        )
        for i, name in enumerate(result.names()):
            lines.append(
                f"| {name} | {result.precision[i]:.4f} | {result.recall[i]:.4f} | "
                f"{result.f1[i]:.4f} | {result.support[i]} |"
            )
        lines.append("")

        names = result.names()
        lines.extend(
            [
                "## Confusion Matrix",
                "",
                "| true \\ predicted | " + " | ".join(names) + " |",
                "|---" * (len(names) + 1) + "|",
            ]
        )
        for name, row in zip(names, result.confusion):
            lines.append(f"| {name} | " + " | ".join(str(v) for v in row) + " |")
        lines.append("")

        with Exporter._open(output_path) as f:
            f.write("\n".join(lines))

    @staticmethod
    def export_history_csv(history: TrainHistory, output_path: Path) -> None:
        """Write ``epoch,train_loss,val_mean_f1,val_loss,best`` rows; timings stay in the log."""
        with Exporter._open(output_path, newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_mean_f1", "val_loss", "best"])
            for r in history.records:
                writer.writerow(
                    [
                        r.epoch,
                        repr(r.train_loss),
                        repr(r.val_mean_f1),
                        repr(r.val_loss),
                        int(r.epoch == history.best_epoch),
                    ]
                )

    @staticmethod
    def export_trace_jsonl(records: Iterable[TraceRecord], output_path: Path) -> int:
        """Write one record per line and return how many were written."""
        count = 0
        with Exporter._open(output_path) as f:
            for record in records:
                f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
                count += 1
        return count
