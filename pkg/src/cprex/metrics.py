"""Micro-averaged precision / recall / F1 over positive predictions."""

from __future__ import annotations

from .labels import NEG


def prf_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def micro_prf_tuples(predicted, gold) -> tuple[float, float, float]:
    """Exact-tuple micro P/R/F between two relation-tuple collections."""
    predicted = set(predicted)
    gold = set(gold)
    tp = len(predicted & gold)
    return prf_from_counts(tp, len(predicted) - tp, len(gold) - tp)


def micro_f1_labels(predicted_labels, gold_labels, neg: str = NEG) -> float:
    """Instance-aligned micro F1 ignoring the negative class, used for dev-set
    model selection during neural training."""
    tp = fp = fn = 0
    for pred, gold in zip(predicted_labels, gold_labels, strict=True):
        if pred != neg:
            if pred == gold:
                tp += 1
            else:
                fp += 1
                if gold != neg:
                    fn += 1
        elif gold != neg:
            fn += 1
    return prf_from_counts(tp, fp, fn)[2]
