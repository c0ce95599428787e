"""Confusion matrix, precision/recall/F1, one-vs-rest ROC and AUC."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

LABELS = ("negative", "neutral", "positive")


def confusion(preds, targets, n_classes: int = 3) -> np.ndarray:
    """cm[t, p] counts samples of true class t predicted as p."""
    preds = np.asarray(preds, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if preds.shape != targets.shape:
        raise ValueError(f"length mismatch: {preds.shape[0] if preds.ndim else 0} predictions, "
                         f"{targets.shape[0] if targets.ndim else 0} targets")
    for name, arr in (("prediction", preds), ("target", targets)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} outside 0..{n_classes - 1}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (targets, preds), 1)
    return cm


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass
class ClassReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    ovr_accuracy: np.ndarray  # per class, treating it one-vs-rest
    support: np.ndarray
    accuracy: float
    zero_division: bool = False  # some 0/0 ratio was set to 0

    @property
    def macro_precision(self) -> float:
        return float(self.precision.mean())

    @property
    def macro_recall(self) -> float:
        return float(self.recall.mean())

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())


def class_report(cm) -> ClassReport:
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(cm).astype(np.float64)
    col, row = cm.sum(axis=0), cm.sum(axis=1)
    precision = _safe_div(tp, col)
    recall = _safe_div(tp, row)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    tn = total - row - col + tp
    zero_div = bool(np.any(col == 0) or np.any(row == 0))
    return ClassReport(precision, recall, f1, (tp + tn) / total, row, float(tp.sum() / total), zero_div)


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # one per point; +inf for the (0, 0) start
    auc: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("fpr,tpr\n")
        for f, t in zip(self.fpr, self.tpr):
            buf.write(f"{f!r},{t!r}\n")
        return buf.getvalue()


def roc_curve(scores, targets, positive: int) -> RocCurve:
    """One-vs-rest ROC for class ``positive``; one step per distinct score."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(targets) == positive
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("degenerate ROC: targets contain a single class for this split")
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], pos[order]
    tps = np.cumsum(p)
    fps = np.cumsum(~p)
    # last index of each run of equal scores
    ends = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tpr = np.r_[0.0, tps[ends] / n_pos]
    fpr = np.r_[0.0, fps[ends] / n_neg]
    thresholds = np.r_[np.inf, s[ends]]
    return RocCurve(fpr, tpr, thresholds, float(np.trapezoid(tpr, fpr)))


@dataclass
class EvalReport:
    confusion: np.ndarray
    report: ClassReport
    rocs: list = field(default_factory=list)  # one RocCurve (or None) per class
    n_samples: int = 0

    @property
    def macro_auc(self) -> float | None:
        aucs = [r.auc for r in self.rocs if r is not None]
        return float(np.mean(aucs)) if aucs else None

    def headline(self) -> dict:
        r = self.report
        return {"Accuracy": r.accuracy, "Precision": r.macro_precision,
                "Recall": r.macro_recall, "F1 score": r.macro_f1}

    def to_dict(self) -> dict:
        r = self.report
        per_class = {
            name: {"precision": float(r.precision[i]), "recall": float(r.recall[i]), "f1": float(r.f1[i]),
                   "ovr_accuracy": float(r.ovr_accuracy[i]), "support": int(r.support[i]),
                   "auc": None if self.rocs[i] is None else self.rocs[i].auc}
            for i, name in enumerate(LABELS[: len(r.precision)])
        }
        return {"n_samples": self.n_samples, **self.headline(), "macro_auc": self.macro_auc,
                "per_class": per_class, "confusion_matrix": self.confusion.tolist(),
                "zero_division": r.zero_division}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        r = self.report
        lines = [f"{'class':<10}{'precision':>10}{'recall':>10}{'f1':>10}{'ovr acc':>10}{'auc':>10}{'support':>9}"]
        for i, name in enumerate(LABELS[: len(r.precision)]):
            auc = "-" if self.rocs[i] is None else f"{self.rocs[i].auc:.4f}"
            lines.append(f"{name:<10}{r.precision[i]:>10.4f}{r.recall[i]:>10.4f}{r.f1[i]:>10.4f}"
                         f"{r.ovr_accuracy[i]:>10.4f}{auc:>10}{int(r.support[i]):>9d}")
        macro_auc = "-" if self.macro_auc is None else f"{self.macro_auc:.4f}"
        lines.append(f"{'macro':<10}{r.macro_precision:>10.4f}{r.macro_recall:>10.4f}{r.macro_f1:>10.4f}"
                     f"{'':>10}{macro_auc:>10}{self.n_samples:>9d}")
        lines.append(f"accuracy  {r.accuracy:.4f}")
        lines.append("")
        lines.append("confusion (rows true, cols predicted): " + " ".join(LABELS[: len(r.precision)]))
        for i, row in enumerate(self.confusion):
            lines.append(f"{LABELS[i]:<10}" + "".join(f"{int(v):>8d}" for v in row))
        if r.zero_division:
            lines.append("note: some precision/recall ratios were 0/0 and were set to 0")
        return "\n".join(lines)


def evaluate(probs, targets) -> EvalReport:
    probs = np.asarray(probs)
    targets = np.asarray(targets)
    if len(targets) == 0:
        raise ValueError("no samples")
    n_classes = probs.shape[1]
    cm = confusion(np.argmax(probs, axis=1), targets, n_classes)
    rocs = []
    for c in range(n_classes):
        try:
            rocs.append(roc_curve(probs[:, c], targets, c))
        except ValueError:
            rocs.append(None)
    return EvalReport(cm, class_report(cm), rocs, len(targets))


def average_headlines(reports) -> dict:
    """Arithmetic mean of the headline metrics over several reports."""
    keys = ("Accuracy", "Precision", "Recall", "F1 score")
    heads = [r.headline() for r in reports]
    out = {k: float(np.mean([h[k] for h in heads])) for k in keys}
    aucs = [r.macro_auc for r in reports if r.macro_auc is not None]
    out["macro_auc"] = float(np.mean(aucs)) if aucs else None
    return out
