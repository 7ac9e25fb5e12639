"""Multiclass classification metrics over probability scores.

All functions are pure and operate on plain numpy arrays:

* ``scores``: [n_samples, n_classes] of class probabilities (or any
  per-class ranking scores for the AUROC family),
* ``labels``: integer true classes in [0, n_classes).

Conventions, fixed and relied on by tests:

* argmax ties break toward the lowest class index,
* any 0/0 metric term is defined as 0 (e.g. precision of a class that is
  never predicted),
* AUROC counts tied positive/negative score pairs as 1/2 via midranks;
  a class with no positives or no negatives has undefined AUROC and is
  excluded from the macro average (NaN if no class is defined),
* macro averages weight every class equally.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "roc_auc", "kappa", "mcc")


@dataclass
class PredictionSet:
    """Validated bundle of probability rows plus true labels."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.ndim != 2 or self.scores.shape[0] == 0:
            raise DataError(f"scores must be a non-empty [n, classes] matrix, got {self.scores.shape}")
        n, c = self.scores.shape
        if self.labels.shape != (n,):
            raise DataError(f"{n} score rows but {self.labels.shape} labels")
        if self.labels.min() < 0 or self.labels.max() >= c:
            raise DataError(f"labels must lie in [0, {c})")
        bad = np.abs(self.scores.sum(axis=1) - 1.0) > 1e-9
        if np.any(bad):
            row = int(np.argmax(bad))
            raise DataError(f"score row {row} sums to {self.scores[row].sum():.12f}, not 1")

    @property
    def num_classes(self) -> int:
        return self.scores.shape[1]


def confusion(scores, labels) -> np.ndarray:
    """C x C count matrix; rows index true class, columns predicted class."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] == 0:
        raise DataError(f"confusion needs a non-empty [n, classes] matrix, got {scores.shape}")
    c = scores.shape[1]
    predicted = scores.argmax(axis=1)  # np.argmax takes the first (lowest) index on ties
    cm = np.zeros((c, c), dtype=np.int64)
    np.add.at(cm, (labels, predicted), 1)
    return cm


def accuracy(cm: np.ndarray) -> float:
    """trace / total: the fraction classified correctly."""
    total = cm.sum()
    return float(np.trace(cm) / total) if total else 0.0


def _per_class_prf(cm: np.ndarray):
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(precision + recall > 0,
                      2 * precision * recall / (precision + recall), 0.0)
    return precision, recall, f1


def precision(cm: np.ndarray, average: str = "macro"):
    """TP / (TP + FP) per class; macro = unweighted mean over classes."""
    per_class = _per_class_prf(cm)[0]
    return float(per_class.mean()) if average == "macro" else per_class


def recall(cm: np.ndarray, average: str = "macro"):
    """TP / (TP + FN) per class; macro = unweighted mean over classes."""
    per_class = _per_class_prf(cm)[1]
    return float(per_class.mean()) if average == "macro" else per_class


def f1_score(cm: np.ndarray, average: str = "macro"):
    """Harmonic mean of precision and recall, 2PR / (P + R), per class."""
    per_class = _per_class_prf(cm)[2]
    return float(per_class.mean()) if average == "macro" else per_class


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their rank range."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # mean of ranks i+1 .. j+1
        i = j + 1
    return ranks


def binary_auroc(scores: np.ndarray, positives: np.ndarray) -> float:
    """AUROC via the rank-sum statistic.

    Equals P(score_pos > score_neg) + P(score_pos = score_neg)/2 over all
    positive/negative pairs; NaN when either side of the pairing is empty.
    """
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = _midranks(np.asarray(scores, dtype=np.float64))
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auroc(scores, labels, average: str = "macro"):
    """One-vs-rest AUROC per class, macro-averaged over defined classes.

    Column k of ``scores`` ranks class k against the rest. Classes missing
    a positive or a negative sample are undefined (NaN) and skipped by the
    macro mean; the result is NaN only if every class is undefined.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    per_class = np.array([binary_auroc(scores[:, k], labels == k)
                          for k in range(scores.shape[1])])
    if average != "macro":
        return per_class
    defined = per_class[~np.isnan(per_class)]
    return float(defined.mean()) if defined.size else float("nan")


def roc_curve(scores: np.ndarray, positives: np.ndarray):
    """(FPR, TPR) points from a threshold sweep over the distinct scores.

    Thresholds run from above the largest score (predict nothing) down
    through every distinct value (predict score >= threshold), so both
    coordinate sequences are monotone from (0, 0) to (1, 1).
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("roc_curve needs at least one positive and one negative")
    order = np.argsort(-scores, kind="stable")
    fpr = [0.0]
    tpr = [0.0]
    tp = fp = 0
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        block = order[i:j + 1]
        tp += int(positives[block].sum())
        fp += len(block) - int(positives[block].sum())
        fpr.append(fp / n_neg)
        tpr.append(tp / n_pos)
        i = j + 1
    return np.array(fpr), np.array(tpr)


def cohens_kappa(cm: np.ndarray) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    p_o is the observed agreement rate and p_e the agreement expected from
    the row/column marginals alone; a degenerate p_e = 1 yields 0.
    """
    total = cm.sum()
    if total == 0:
        raise DataError("cohens_kappa needs a non-empty confusion matrix")
    p_o = np.trace(cm) / total
    p_e = float((cm.sum(axis=1) * cm.sum(axis=0)).sum()) / (total * total)
    if p_e == 1.0:
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def mcc(cm: np.ndarray) -> float:
    """Generalized multiclass Matthews correlation coefficient.

    (c*s - sum_k p_k t_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2))
    with c = trace, s = total, p_k predicted-class totals, t_k true-class
    totals; a zero denominator yields 0.
    """
    cm = np.asarray(cm, dtype=np.float64)
    s = cm.sum()
    if s == 0:
        raise DataError("mcc needs a non-empty confusion matrix")
    c = np.trace(cm)
    p = cm.sum(axis=0)
    t = cm.sum(axis=1)
    denom_sq = (s * s - (p * p).sum()) * (s * s - (t * t).sum())
    if denom_sq <= 0:
        return 0.0
    return float((c * s - (p * t).sum()) / np.sqrt(denom_sq))


def evaluate(scores, labels) -> dict[str, float]:
    """Every reported metric in one pass; keys follow METRIC_NAMES."""
    cm = confusion(scores, labels)
    return {
        "accuracy": accuracy(cm),
        "precision": precision(cm),
        "recall": recall(cm),
        "f1": f1_score(cm),
        "roc_auc": auroc(scores, labels),
        "kappa": cohens_kappa(cm),
        "mcc": mcc(cm),
    }


def read_score_file(path) -> PredictionSet:
    """Load a ``label,score_0,...,score_{C-1}`` CSV into a PredictionSet."""
    labels = []
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "label" or len(header) < 3:
            raise DataError(f"{path}: expected header label,score_0,...,score_(C-1)")
        width = len(header) - 1
        if header[1:] != [f"score_{i}" for i in range(width)]:
            raise DataError(f"{path}: malformed score column names")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 1:
                raise DataError(f"{path}:{lineno}: expected {width + 1} fields, got {len(row)}")
            try:
                labels.append(int(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return PredictionSet(np.array(rows), np.array(labels))


def write_score_file(path, scores, labels) -> None:
    scores = np.asarray(scores, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"score_{i}" for i in range(scores.shape[1])])
        for label, row in zip(labels, scores):
            writer.writerow([int(label)] + [f"{v:.10g}" for v in row])
