"""Run reports, candidate-vs-free comparison and CSV emitters."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .acquisition import AcquisitionStrategy

SECONDS_PER_HOUR = 3600.0
COMPARISON_HEADER = ["method", "candidate_used", "time_saved_h", "annotation_sim_time_h", "accuracy_mean", "accuracy_std"]
CURVE_HEADER = ["strategy", "labels_used", "accuracy_mean", "accuracy_std"]


class IncompatibleReportsError(ValueError):
    pass


class UnreadableReportError(ValueError):
    pass


@dataclass
class IterationRecord:
    iteration: int
    phase: str
    selected: int
    labels_used: int
    selection_s: float
    train_s: float
    accuracy: float

    def __post_init__(self):
        if self.selection_s < 0 or self.train_s < 0:
            raise ValueError("wall-times must be non-negative")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")


@dataclass
class ReplicateResult:
    replicate: int
    seeds: dict
    records: list[IterationRecord]
    history: list[list[int]]
    candidate_train_s: float | None = None

    @property
    def annotation_sim_s(self) -> float:
        return math.fsum(r.selection_s + r.train_s for r in self.records)

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].accuracy

    def to_dict(self) -> dict:
        return {
            "replicate": self.replicate,
            "seeds": self.seeds,
            "candidate_train_s": self.candidate_train_s,
            "annotation_sim_s": self.annotation_sim_s,
            "final_accuracy": self.final_accuracy,
            "iterations": [asdict(r) for r in self.records],
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReplicateResult":
        return cls(
            replicate=d["replicate"],
            seeds=d["seeds"],
            records=[IterationRecord(**r) for r in d["iterations"]],
            history=[list(h) for h in d["history"]],
            candidate_train_s=d.get("candidate_train_s"),
        )


def _mean_std(values: Sequence[float]) -> tuple[float, float | None]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size >= 2 else None
    return float(arr.mean()), std


@dataclass
class RunReport:
    """Everything a run produced. ``metadata`` holds wall-clock stamps only."""

    config: dict
    replicates: list[ReplicateResult]
    network_spec: dict | None = None
    preprocessing: str = "none"
    time_saved_h: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return self.config["mode"]

    @property
    def candidate_used(self) -> bool:
        return self.mode == "candidate"

    @property
    def strategy_label(self) -> str:
        return AcquisitionStrategy.from_value(self.config["strategy"]).label

    @property
    def method(self) -> str:
        return self.strategy_label + ("+candidate" if self.candidate_used else "")

    @property
    def final_accuracy_mean(self) -> float:
        return _mean_std([r.final_accuracy for r in self.replicates])[0]

    @property
    def final_accuracy_std(self) -> float | None:
        return _mean_std([r.final_accuracy for r in self.replicates])[1]

    @property
    def annotation_sim_time_h(self) -> float:
        return float(np.mean([r.annotation_sim_s for r in self.replicates])) / SECONDS_PER_HOUR

    @property
    def candidate_train_time_h(self) -> float | None:
        vals = [r.candidate_train_s for r in self.replicates]
        if any(v is None for v in vals):
            return None
        return float(np.mean(vals)) / SECONDS_PER_HOUR

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "network_spec": self.network_spec,
            "preprocessing": self.preprocessing,
            "method": self.method,
            "final_accuracy_mean": self.final_accuracy_mean,
            "final_accuracy_std": self.final_accuracy_std,
            "annotation_sim_time_h": self.annotation_sim_time_h,
            "candidate_train_time_h": self.candidate_train_time_h,
            "time_saved_h": self.time_saved_h,
            "replicates": [r.to_dict() for r in self.replicates],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(
            config=d["config"],
            replicates=[ReplicateResult.from_dict(r) for r in d["replicates"]],
            network_spec=d.get("network_spec"),
            preprocessing=d.get("preprocessing", "none"),
            time_saved_h=d.get("time_saved_h"),
            metadata=d.get("metadata", {}),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n")
        return path


def load_report(path) -> RunReport:
    try:
        return RunReport.from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UnreadableReportError(f"{path}: {exc}") from exc


# --- comparison ------------------------------------------------------------


@dataclass
class ComparisonRow:
    method: str
    candidate_used: bool
    time_saved_h: float
    annotation_sim_time_h: float
    accuracy_mean: float
    accuracy_std: float | None

    def as_csv(self) -> list:
        return [
            self.method,
            "yes" if self.candidate_used else "no",
            f"{self.time_saved_h:.9f}",
            f"{self.annotation_sim_time_h:.9f}",
            f"{self.accuracy_mean:.6f}",
            "" if self.accuracy_std is None else f"{self.accuracy_std:.6f}",
        ]


@dataclass
class Comparison:
    time_saved_h: float
    accuracy_delta: float
    rows: list[ComparisonRow]


_SHARED_KEYS = ("dataset", "network", "budget")


def compare(free: RunReport, cand: RunReport) -> Comparison:
    """Time saved by skipping the candidate model, plus the accuracy gap.

    Time saved is the candidate run's measured candidate-training time (zero
    when the second report did not train a candidate).
    """
    for key in _SHARED_KEYS:
        if free.config[key] != cand.config[key]:
            raise IncompatibleReportsError(f"reports differ in {key!r}")
    saved = cand.candidate_train_time_h if cand.candidate_used else 0.0
    rows = [
        ComparisonRow(free.method, free.candidate_used, saved, free.annotation_sim_time_h,
                      free.final_accuracy_mean, free.final_accuracy_std),
        ComparisonRow(cand.method, cand.candidate_used, 0.0, cand.annotation_sim_time_h,
                      cand.final_accuracy_mean, cand.final_accuracy_std),
    ]
    return Comparison(saved, free.final_accuracy_mean - cand.final_accuracy_mean, rows)


def summary_row(report: RunReport, time_saved_h: float = 0.0) -> ComparisonRow:
    return ComparisonRow(report.method, report.candidate_used, time_saved_h, report.annotation_sim_time_h,
                         report.final_accuracy_mean, report.final_accuracy_std)


def write_comparison_csv(rows: Iterable[ComparisonRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARISON_HEADER)
        for row in rows:
            w.writerow(row.as_csv())
    return path


# --- accuracy curves -------------------------------------------------------


def curve_rows(reports: Iterable[RunReport]) -> list[tuple[str, int, float, float | None]]:
    """Mean/std accuracy per (method, labels used), pooled over all replicates given."""
    acc: dict[tuple[str, int], list[float]] = defaultdict(list)
    for rep in reports:
        for r in rep.replicates:
            for rec in r.records:
                acc[(rep.method, rec.labels_used)].append(rec.accuracy)
    rows = []
    for (method, labels), vals in acc.items():
        mean, std = _mean_std(vals)
        rows.append((method, labels, mean, std))
    rows.sort(key=lambda r: (r[1], r[0]))
    return rows


def write_curves_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for method, labels, mean, std in rows:
            w.writerow([method, labels, f"{mean:.6f}", "" if std is None else f"{std:.6f}"])
    return path
