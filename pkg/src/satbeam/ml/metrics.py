from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MultilabelScores:
    precision: float
    recall: float
    f1: float
    accuracy: float
    tp: int
    fp: int
    fn: int
    tn: int


def multilabel_metrics(predicted, true) -> MultilabelScores:
    """Micro-averaged precision/recall/F1 and Hamming accuracy over all bit pairs."""
    p = np.asarray(predicted).astype(bool)
    t = np.asarray(true).astype(bool)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} != label shape {t.shape}")
    tp = int((p & t).sum())
    fp = int((p & ~t).sum())
    fn = int((~p & t).sum())
    tn = int((~p & ~t).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    # perfect prediction of an all-zero label set counts as a perfect score
    if tp + fp + fn == 0:
        precision = recall = f1 = 1.0
    acc = (tp + tn) / p.size if p.size else 1.0
    return MultilabelScores(precision, recall, f1, acc, tp, fp, fn, tn)
