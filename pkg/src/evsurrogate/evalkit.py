"""Metric tables and result files for trained predictors and network runs."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .circuits import CircuitSpec
from .dataset import EventTable
from .models.features import M_O, PREDICTORS, QUANTITY, table_features
from .models.selection import TrainedModel, evaluate, predictor_view

METRICS_HEADER = ["predictor", "family", "n", "mse", "mse_unit", "mape_percent", "selected"]


@dataclass(frozen=True)
class MetricRow:
    predictor: str
    family: str
    n: int
    mse: float  # squared reporting unit
    mse_unit: str
    mape: float  # percent
    selected: bool

    def cells(self) -> list[str]:
        return [self.predictor, self.family, str(self.n), repr(self.mse), self.mse_unit,
                repr(self.mape), str(int(self.selected))]


def mse_unit(spec: CircuitSpec, predictor: str) -> str:
    return spec.report_units[QUANTITY[predictor]][0] + "^2"


def metrics_table(
    spec: CircuitSpec,
    candidates: dict[str, list[TrainedModel]],
    test: EventTable,
    selected: dict[str, str] | None = None,
) -> list[MetricRow]:
    """Test MSE and MAPE of every candidate, one row per (predictor, family).

    ``selected`` maps predictor to the family chosen for the bundle.
    """
    rows = []
    for p in PREDICTORS:
        for m in candidates.get(p, []):
            r = evaluate(m, test, spec)
            chosen = selected is not None and selected.get(p) == m.family
            rows.append(MetricRow(p, m.family, r["n"], r["mse"], mse_unit(spec, p), r["mape"], chosen))
    return rows


def write_metrics_csv(rows: list[MetricRow], sink: str | os.PathLike) -> None:
    with open(sink, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow(r.cells())


def read_metrics_csv(source: str | os.PathLike) -> list[MetricRow]:
    with open(source, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != METRICS_HEADER:
        raise ValueError(f"{source}: not a metrics table")
    return [MetricRow(r[0], r[1], int(r[2]), float(r[3]), r[4], float(r[5]), r[6] == "1") for r in rows[1:]]


def best_of(rows: list[MetricRow], predictor: str, families: tuple[str, ...], key: str = "mse") -> MetricRow:
    """Row with the lowest ``key`` among the given families (first on ties)."""
    cands = [r for r in rows if r.predictor == predictor and r.family in families]
    if not cands:
        raise KeyError(f"no rows for {predictor} in {families}")
    return min(cands, key=lambda r: (np.inf if np.isnan(getattr(r, key)) else getattr(r, key)))


REPORT_HEADER = ["predictor", "family", "hyper", "val_mse", "val_mape_percent", "train_seconds", "selected"]


def write_training_report(report: list[dict], sink: str | os.PathLike, timings: bool = True) -> None:
    """One row per trained candidate; ``timings=False`` blanks the wall-clock column."""
    with open(sink, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in report:
            w.writerow([r["predictor"], r["family"], json.dumps(r["hyper"], sort_keys=True),
                        repr(float(r["val_mse"])), repr(float(r["val_mape"])),
                        f"{r['train_seconds']:.3f}" if timings else "", str(int(r["selected"]))])


def spike_accuracy(spec: CircuitSpec, model: TrainedModel, t: EventTable) -> float:
    """Fraction of input-change events whose predicted output falls on the true side of the spike threshold."""
    if model.predictor != M_O:
        raise ValueError("spike accuracy needs the output predictor")
    v = predictor_view(M_O, t)
    if len(v) == 0:
        return float("nan")
    o = model.predict(table_features(spec, M_O, v))
    thr = spec.spike_threshold
    return float(np.mean((o > thr) == (v.o > thr)))


INFERENCE_HEADER = ["image", "truth", "oracle_class", "surrogate_class", "oracle_energy_j",
                    "surrogate_energy_j", "surrogate_latency_s"]


def write_inference_csv(
    sink: str | os.PathLike,
    truth: np.ndarray,
    oracle_classes: np.ndarray,
    surrogate_classes: np.ndarray,
    oracle_energy: np.ndarray,
    surrogate_energy: np.ndarray,
    surrogate_latency: np.ndarray | None = None,
) -> None:
    n = len(truth)
    lat = np.full(n, np.nan) if surrogate_latency is None else surrogate_latency
    with open(sink, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INFERENCE_HEADER)
        for i in range(n):
            w.writerow([i, int(truth[i]), int(oracle_classes[i]), int(surrogate_classes[i]),
                        repr(float(oracle_energy[i])), repr(float(surrogate_energy[i])), repr(float(lat[i]))])


@dataclass(frozen=True)
class WorkloadSummary:
    n_images: int
    oracle_accuracy: float
    surrogate_accuracy: float
    class_agreement: float
    oracle_energy_per_inference: float
    surrogate_energy_per_inference: float

    @property
    def accuracy_gap_pp(self) -> float:
        return 100.0 * abs(self.surrogate_accuracy - self.oracle_accuracy)

    @property
    def energy_error(self) -> float:
        """Relative error of the mean energy per inference."""
        o = self.oracle_energy_per_inference
        return abs(self.surrogate_energy_per_inference - o) / o

    def as_dict(self) -> dict[str, float]:
        return {
            "n_images": self.n_images, "oracle_accuracy": self.oracle_accuracy,
            "surrogate_accuracy": self.surrogate_accuracy, "class_agreement": self.class_agreement,
            "accuracy_gap_pp": self.accuracy_gap_pp,
            "oracle_energy_per_inference_j": self.oracle_energy_per_inference,
            "surrogate_energy_per_inference_j": self.surrogate_energy_per_inference,
            "energy_error": self.energy_error,
        }


def summarize_workload(truth, oracle_classes, surrogate_classes, oracle_energy, surrogate_energy) -> WorkloadSummary:
    truth = np.asarray(truth)
    return WorkloadSummary(
        len(truth),
        float(np.mean(oracle_classes == truth)),
        float(np.mean(surrogate_classes == truth)),
        float(np.mean(oracle_classes == surrogate_classes)),
        float(np.mean(oracle_energy)),
        float(np.mean(surrogate_energy)),
    )


def write_summary_csv(summary: WorkloadSummary, sink: str | os.PathLike) -> None:
    with open(sink, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in summary.as_dict().items():
            w.writerow([k, repr(v)])
