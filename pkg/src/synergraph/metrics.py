"""Classification metrics: ranking (AUROC, AUPRC) and thresholded scores.

AUROC is the probability that a random positive outscores a random negative,
ties counted half, computed from average ranks.  AUPRC is the step integral
of precision over recall across distinct score thresholds.  Thresholded
metrics predict positive at score >= threshold; macro variants average the
two per-class values, with undefined per-class terms counted as zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import LengthMismatch


def _validate(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if s.shape[0] != y.shape[0]:
        raise LengthMismatch(f"{s.shape[0]} scores vs {y.shape[0]} labels")
    if s.shape[0] == 0:
        raise LengthMismatch("need at least one sample")
    if not set(np.unique(y)).issubset({0, 1}):
        raise ValueError("labels must be binary 0/1")
    return s, y


def _average_ranks(s: np.ndarray) -> np.ndarray:
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average of ranks i+1..j+1
        i = j + 1
    return ranks


def auroc_score(scores, labels) -> float:
    """Rank-based AUROC with the ties-count-half convention."""
    s, y = _validate(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes")
    ranks = _average_ranks(s)
    r_pos = float(ranks[y == 1].sum())
    return (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auprc_score(scores, labels) -> float:
    """Precision-recall step integration over distinct score thresholds."""
    s, y = _validate(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise ValueError("AUPRC needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    ap = 0.0
    tp = fp = 0
    prev_recall = 0.0
    i = 0
    while i < len(s_sorted):
        j = i
        while j + 1 < len(s_sorted) and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        tp += int(y_sorted[i : j + 1].sum())
        fp += (j - i + 1) - int(y_sorted[i : j + 1].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return ap


@dataclass
class MetricsReport:
    au_roc: Optional[float]
    au_prc: Optional[float]
    acc: float
    bacc: float
    macro_precision: float
    macro_f1: float
    n: int
    threshold: float
    single_class: bool = False

    def to_dict(self) -> dict:
        return {
            "au_roc": self.au_roc,
            "au_prc": self.au_prc,
            "acc": self.acc,
            "bacc": self.bacc,
            "macro_precision": self.macro_precision,
            "macro_f1": self.macro_f1,
            "n": self.n,
            "threshold": self.threshold,
            "single_class": self.single_class,
        }


def _safe_div(num: float, den: float) -> Optional[float]:
    return num / den if den > 0 else None


def evaluate(scores, labels, threshold: float = 0.5) -> MetricsReport:
    """Full metrics report at a classification cutoff.

    If only one class is present, AUROC/AUPRC are undefined (None) and the
    report is flagged single_class.
    """
    s, y = _validate(scores, labels)
    single = len(np.unique(y)) < 2
    au_roc = au_prc = None
    if not single:
        au_roc = auroc_score(s, y)
        au_prc = auprc_score(s, y)

    pred = (s >= threshold).astype(np.int64)
    tp = int(((pred == 1) & (y == 1)).sum())
    tn = int(((pred == 0) & (y == 0)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())

    acc = (tp + tn) / len(y)
    rates = [r for r in (_safe_div(tp, tp + fn), _safe_div(tn, tn + fp)) if r is not None]
    bacc = float(np.mean(rates)) if rates else 0.0

    prec_pos = _safe_div(tp, tp + fp) or 0.0
    prec_neg = _safe_div(tn, tn + fn) or 0.0
    rec_pos = _safe_div(tp, tp + fn) or 0.0
    rec_neg = _safe_div(tn, tn + fp) or 0.0
    f1_pos = 2 * prec_pos * rec_pos / (prec_pos + rec_pos) if prec_pos + rec_pos > 0 else 0.0
    f1_neg = 2 * prec_neg * rec_neg / (prec_neg + rec_neg) if prec_neg + rec_neg > 0 else 0.0

    return MetricsReport(
        au_roc=au_roc,
        au_prc=au_prc,
        acc=acc,
        bacc=bacc,
        macro_precision=0.5 * (prec_pos + prec_neg),
        macro_f1=0.5 * (f1_pos + f1_neg),
        n=len(y),
        threshold=threshold,
        single_class=single,
    )
