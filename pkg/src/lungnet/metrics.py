"""Evaluation metrics: confusion matrix, accuracy, and support-weighted
precision/recall/F1, plus the comparison-table renderers.

Weighted (support-weighted) averaging is used throughout; one useful
fingerprint of that choice is that weighted recall always equals accuracy:
sum_k (n_k/N) * (M_kk/n_k) = trace/N.  Degenerate 0/0 ratios (empty class or
never-predicted column) resolve to 0 so desk-scale runs never produce NaNs.
"""

import csv
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import DataError

TABLE_COLUMNS = ("Model", "Ave. Loss", "Accuracy", "Precision", "Recall", "F1-Score")


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (K, K), rows = true class, columns = predicted
    class_names: list

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    avg_loss: float
    per_class_precision: list
    per_class_recall: list
    per_class_f1: list
    support: list


def confusion(preds, labels, num_classes, class_names=None):
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise DataError(
            f"preds/labels must be equal-length vectors, got {preds.shape} "
            f"and {labels.shape}")
    if preds.size and (min(preds.min(), labels.min()) < 0
                       or max(preds.max(), labels.max()) >= num_classes):
        raise DataError(f"class id out of range [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    if class_names is None:
        class_names = [str(i) for i in range(num_classes)]
    return ConfusionMatrix(counts=counts, class_names=list(class_names))


def _safe_div(num, den):
    return num / den if den > 0 else 0.0


def compute_report(cm, avg_loss):
    counts = cm.counts
    total = cm.total
    if total == 0:
        raise DataError("confusion matrix is empty")
    k = counts.shape[0]
    row_sum = counts.sum(axis=1)
    col_sum = counts.sum(axis=0)
    precision = [_safe_div(float(counts[i, i]), float(col_sum[i])) for i in range(k)]
    recall = [_safe_div(float(counts[i, i]), float(row_sum[i])) for i in range(k)]
    f1 = [_safe_div(2.0 * p * r, p + r) for p, r in zip(precision, recall)]
    weights = row_sum / total
    return MetricsReport(
        accuracy=float(np.trace(counts)) / total,
        precision=float(np.dot(weights, precision)),
        recall=float(np.dot(weights, recall)),
        f1=float(np.dot(weights, f1)),
        avg_loss=float(avg_loss),
        per_class_precision=precision,
        per_class_recall=recall,
        per_class_f1=f1,
        support=[int(s) for s in row_sum],
    )


def fmt4(value):
    """Render to 4 decimals, rounding halves away from zero."""
    return str(Decimal(repr(float(value))).quantize(
        Decimal("0.0001"), rounding=ROUND_HALF_UP))


def format_table(named_reports):
    """Fixed-width comparison table, one row per (model name, report)."""
    if not named_reports:
        raise DataError("format_table needs at least one report")
    rows = [[name, fmt4(r.avg_loss), fmt4(r.accuracy), fmt4(r.precision),
             fmt4(r.recall), fmt4(r.f1)] for name, r in named_reports]
    widths = [max(len(TABLE_COLUMNS[c]), *(len(row[c]) for row in rows))
              for c in range(len(TABLE_COLUMNS))]
    lines = ["  ".join(h.ljust(widths[c]) if c == 0 else h.rjust(widths[c])
                       for c, h in enumerate(TABLE_COLUMNS))]
    for row in rows:
        lines.append("  ".join(v.ljust(widths[c]) if c == 0 else v.rjust(widths[c])
                               for c, v in enumerate(row)))
    return "\n".join(lines)


def write_report_csv(named_reports, path):
    """CSV mirror of the comparison table, one row per model run."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["model", "avg_loss", "accuracy", "precision",
                         "recall", "f1"])
        for name, r in named_reports:
            writer.writerow([name, fmt4(r.avg_loss), fmt4(r.accuracy),
                             fmt4(r.precision), fmt4(r.recall), fmt4(r.f1)])
