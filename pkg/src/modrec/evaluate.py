"""Evaluation artifacts: per-SNR accuracy curve, Maximum/LowSNR/Average
summary metrics, confusion matrix, and the analytic complexity report."""

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ModelConfig, count_macs, count_params, mac_breakdown, param_breakdown
from .siggen import Dataset

MAC_CONVENTION = ("one multiply-accumulate per connection over conv/dense/LSTM/attention "
                  "matmuls including talking-heads mixes; elementwise, softmax and "
                  "normalization ops excluded; double for FLOPs")


def _fmt_snr(snr):
    return f"{float(snr):g}"


@dataclass
class EvalReport:
    per_snr_accuracy: dict
    max_acc: float
    low_snr_acc: float | None
    low_snr_ref: float
    avg_acc: float
    confusion: np.ndarray
    params: int
    macs: int
    class_names: list

    def to_dict(self):
        return {
            "per_snr_accuracy": {_fmt_snr(k): v for k, v in sorted(self.per_snr_accuracy.items())},
            "max_acc": self.max_acc,
            "low_snr_acc": self.low_snr_acc,
            "low_snr_ref": self.low_snr_ref,
            "avg_acc": self.avg_acc,
            "confusion": self.confusion.tolist(),
            "params": self.params,
            "macs": self.macs,
            "class_names": list(self.class_names),
            "mac_convention": MAC_CONVENTION,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            per_snr_accuracy={float(k): v for k, v in data["per_snr_accuracy"].items()},
            max_acc=data["max_acc"],
            low_snr_acc=data["low_snr_acc"],
            low_snr_ref=data["low_snr_ref"],
            avg_acc=data["avg_acc"],
            confusion=np.asarray(data["confusion"], dtype=np.int64),
            params=data["params"],
            macs=data["macs"],
            class_names=list(data["class_names"]),
        )


def evaluate(model, dataset: Dataset, which="test", low_snr_ref=-6.0,
             batch_size=512) -> EvalReport:
    """Argmax over logits per frame, accuracies grouped by SNR cell.

    The SNR grid is taken from the whole dataset; a grid cell with no frames
    in the evaluated split is reported as absent and excluded from averages,
    with a warning.
    """
    frames = dataset.subset(which) if which else list(dataset.frames)
    if not frames:
        raise ValueError(f"no frames in split {which!r}")
    n_classes = len(dataset.class_names)
    x = np.stack([f.data for f in frames])
    y_true = np.asarray([f.label for f in frames])
    y_pred = model.predict(x, batch_size=batch_size)

    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)

    snrs = np.asarray([f.snr_db for f in frames])
    per_snr = {}
    for snr in dataset.snr_grid:
        mask = snrs == snr
        if not mask.any():
            warnings.warn(f"no {which} frames at snr {snr:g} dB; cell excluded from averages")
            continue
        per_snr[float(snr)] = float((y_pred[mask] == y_true[mask]).mean())

    low = per_snr.get(float(low_snr_ref))
    if low is None:
        warnings.warn(f"low-SNR reference {low_snr_ref:g} dB absent from the grid")
    accs = list(per_snr.values())
    return EvalReport(
        per_snr_accuracy=per_snr,
        max_acc=float(max(accs)),
        low_snr_acc=low,
        low_snr_ref=float(low_snr_ref),
        avg_acc=float(np.mean(accs)),
        confusion=confusion,
        params=count_params(model.config),
        macs=count_macs(model.config),
        class_names=list(dataset.class_names),
    )


def complexity_report(config: ModelConfig) -> dict:
    """Analytic parameter and MAC totals with a per-stage breakdown."""
    return {
        "params": count_params(config),
        "macs": count_macs(config),
        "params_by_stage": param_breakdown(config),
        "macs_by_stage": mac_breakdown(config),
        "mac_convention": MAC_CONVENTION,
    }


def compare_runs(report_a, report_b) -> dict:
    """Per-SNR and summary deltas (B minus A); SNR grids must match."""
    a = report_a.to_dict() if isinstance(report_a, EvalReport) else dict(report_a)
    b = report_b.to_dict() if isinstance(report_b, EvalReport) else dict(report_b)
    grid_a = sorted(a["per_snr_accuracy"], key=float)
    grid_b = sorted(b["per_snr_accuracy"], key=float)
    if grid_a != grid_b:
        raise ValueError(f"SNR grid mismatch: {grid_a} vs {grid_b}")
    per_snr_delta = {snr: b["per_snr_accuracy"][snr] - a["per_snr_accuracy"][snr]
                     for snr in grid_a}
    low_a, low_b = a.get("low_snr_acc"), b.get("low_snr_acc")
    return {
        "per_snr_delta": per_snr_delta,
        "max_delta": b["max_acc"] - a["max_acc"],
        "low_snr_delta": (low_b - low_a) if (low_a is not None and low_b is not None) else None,
        "avg_delta": b["avg_acc"] - a["avg_acc"],
    }


def write_report(report: EvalReport, out_dir):
    """Emit report.json, acc_vs_snr.csv and confusion.csv into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "acc_vs_snr.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snr_db", "accuracy"])
        for snr in sorted(report.per_snr_accuracy):
            writer.writerow([_fmt_snr(snr), repr(report.per_snr_accuracy[snr])])
    with open(out_dir / "confusion.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in report.confusion:
            writer.writerow([int(v) for v in row])
    return out_dir


def load_report(path) -> dict:
    with open(Path(path)) as fh:
        return json.load(fh)
