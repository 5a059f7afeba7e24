"""Confusion matrices and per-class classification metrics.

Convention: confusion rows are the predicted class, columns the actual
class. Per class (one versus rest): TP is the diagonal cell, FP the rest
of the row, FN the rest of the column, TN everything else. Derived
scores are precision, recall, F1 and false positive rate, plus macro
(class-equal) and micro (count-pooled) averages and overall accuracy.

A class never predicted has TP+FP = 0, so its precision is undefined.
Such classes are flagged, score 0 wherever an average needs a number,
and print as "NaN%" in text reports.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np


def confusion(predictions, labels, n_classes: int) -> np.ndarray:
    """Count (predicted, actual) pairs into an [N, N] integer matrix."""
    pred = np.asarray(predictions, dtype=np.int64)
    act = np.asarray(labels, dtype=np.int64)
    if pred.shape != act.shape or pred.ndim != 1:
        raise ValueError("predictions and labels must be equal-length 1-d sequences")
    if n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    for name, arr in (("prediction", pred), ("label", act)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} out of range [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (pred, act), 1)
    return cm


@dataclass
class ClassMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    fpr: float
    precision_undefined: bool


@dataclass
class MetricsReport:
    per_class: list[ClassMetrics]
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    macro_fpr: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    micro_fpr: float


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def compute_metrics(cm: np.ndarray) -> MetricsReport:
    """Per-class and averaged metrics from a confusion matrix.

    Degenerate ratios with a zero denominator score 0; only an undefined
    precision (an empty predicted row) additionally raises the flag,
    mirroring how reports mark that case.
    """
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] < 1:
        raise ValueError(f"confusion matrix must be square, got {cm.shape}")
    if (cm < 0).any():
        raise ValueError("confusion matrix entries must be >= 0")
    total = int(cm.sum())
    if total == 0:
        raise ValueError("confusion matrix is empty")

    per_class: list[ClassMetrics] = []
    for i in range(cm.shape[0]):
        tp = int(cm[i, i])
        fp = int(cm[i, :].sum() - tp)
        fn = int(cm[:, i].sum() - tp)
        tn = total - tp - fp - fn
        undefined = (tp + fp) == 0
        pre = _safe_div(tp, tp + fp)
        rec = _safe_div(tp, tp + fn)
        f1 = _safe_div(2.0 * pre * rec, pre + rec)
        fpr = _safe_div(fp, fp + tn)
        per_class.append(ClassMetrics(tp, fp, fn, tn, pre, rec, f1, fpr, undefined))

    k = len(per_class)
    tp_sum = sum(c.tp for c in per_class)
    fp_sum = sum(c.fp for c in per_class)
    fn_sum = sum(c.fn for c in per_class)
    tn_sum = sum(c.tn for c in per_class)
    micro_pre = _safe_div(tp_sum, tp_sum + fp_sum)
    micro_rec = _safe_div(tp_sum, tp_sum + fn_sum)
    return MetricsReport(
        per_class=per_class,
        accuracy=float(np.trace(cm)) / total,
        macro_precision=sum(c.precision for c in per_class) / k,
        macro_recall=sum(c.recall for c in per_class) / k,
        macro_f1=sum(c.f1 for c in per_class) / k,
        macro_fpr=sum(c.fpr for c in per_class) / k,
        micro_precision=micro_pre,
        micro_recall=micro_rec,
        micro_f1=_safe_div(2.0 * micro_pre * micro_rec, micro_pre + micro_rec),
        micro_fpr=_safe_div(fp_sum, fp_sum + tn_sum),
    )


def _pct(value: float, undefined: bool = False) -> str:
    return "NaN%" if undefined else f"{100.0 * value:.1f}%"


def render_report(
    cm: np.ndarray, report: MetricsReport, class_names: list[str] | None = None
) -> str:
    """Deterministic text report: count grid with per-cell percent of the
    total, a precision column, a recall row and the overall accuracy in
    the corner. Percents carry one decimal place."""
    cm = np.asarray(cm)
    k = cm.shape[0]
    names = class_names or [f"class{i + 1}" for i in range(k)]
    if len(names) != k:
        raise ValueError("class_names length must match the matrix")
    total = int(cm.sum())

    label_w = max(len("predicted"), *(len(n) for n in names))
    cell_w = max(9, *(len(n) for n in names)) + 2

    def cell(top: str, _=None) -> str:
        return top.rjust(cell_w)

    out = io.StringIO()
    out.write("rows: predicted class, columns: actual class\n")
    out.write("counts with percent of all events; right column precision, bottom row recall\n\n")
    out.write(" " * label_w)
    for n in names:
        out.write(cell(n))
    out.write(cell("PRE") + "\n")

    for i in range(k):
        out.write(names[i].ljust(label_w))
        for j in range(k):
            out.write(cell(str(int(cm[i, j]))))
        out.write(cell(_pct(report.per_class[i].precision, report.per_class[i].precision_undefined)))
        out.write("\n")
        out.write(" " * label_w)
        for j in range(k):
            out.write(cell(_pct(int(cm[i, j]) / total)))
        out.write("\n")

    out.write("REC".ljust(label_w))
    for j in range(k):
        out.write(cell(_pct(report.per_class[j].recall)))
    out.write(cell(_pct(report.accuracy)) + "\n\n")

    out.write(f"overall accuracy {_pct(report.accuracy)}\n")
    out.write(
        "macro  PRE {} REC {} F1 {} FPR {}\n".format(
            _pct(report.macro_precision),
            _pct(report.macro_recall),
            _pct(report.macro_f1),
            _pct(report.macro_fpr),
        )
    )
    out.write(
        "micro  PRE {} REC {} F1 {} FPR {}\n".format(
            _pct(report.micro_precision),
            _pct(report.micro_recall),
            _pct(report.micro_f1),
            _pct(report.micro_fpr),
        )
    )
    undef = [names[i] for i, c in enumerate(report.per_class) if c.precision_undefined]
    if undef:
        out.write(f"precision undefined (never predicted): {', '.join(undef)}\n")
    return out.getvalue()


def metrics_csv(report: MetricsReport, class_names: list[str] | None = None) -> str:
    """Full-precision CSV: one row per class plus macro, micro and
    accuracy summary rows."""
    names = class_names or [f"class{i + 1}" for i in range(len(report.per_class))]
    if len(names) != len(report.per_class):
        raise ValueError("class_names length must match the report")
    lines = ["class,TP,FP,FN,TN,PRE,REC,F1,FPR,undefined_flag"]
    for name, c in zip(names, report.per_class):
        lines.append(
            f"{name},{c.tp},{c.fp},{c.fn},{c.tn},"
            f"{c.precision:.12g},{c.recall:.12g},{c.f1:.12g},{c.fpr:.12g},"
            f"{int(c.precision_undefined)}"
        )
    lines.append(
        f"macro,,,,,{report.macro_precision:.12g},{report.macro_recall:.12g},"
        f"{report.macro_f1:.12g},{report.macro_fpr:.12g},"
    )
    lines.append(
        f"micro,,,,,{report.micro_precision:.12g},{report.micro_recall:.12g},"
        f"{report.micro_f1:.12g},{report.micro_fpr:.12g},"
    )
    lines.append(f"accuracy,,,,,{report.accuracy:.12g},,,,")
    return "\n".join(lines) + "\n"


def confusion_csv(cm: np.ndarray, class_names: list[str] | None = None) -> str:
    cm = np.asarray(cm)
    names = class_names or [f"class{i + 1}" for i in range(cm.shape[0])]
    lines = ["predicted\\actual," + ",".join(names)]
    for i in range(cm.shape[0]):
        lines.append(names[i] + "," + ",".join(str(int(v)) for v in cm[i]))
    return "\n".join(lines) + "\n"
