"""Evaluation measures: set-level precision/recall/F1/exact-match, length
error, and reference-normalized word error rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SetScore:
    precision: float
    recall: float
    f1: float
    exact_match: bool


def set_score(pred, truth) -> SetScore:
    """Score a predicted label set against the true set.

    Conventions for empty sets: precision is 1.0 when both sides are empty
    and 0.0 when only the prediction is empty; recall mirrors that for an
    empty truth set.
    """
    p = frozenset(pred)
    t = frozenset(truth)
    inter = len(p & t)
    if p:
        precision = inter / len(p)
    else:
        precision = 1.0 if not t else 0.0
    if t:
        recall = inter / len(t)
    else:
        recall = 1.0 if not p else 0.0
    f1 = 0.0 if precision + recall == 0.0 else 2.0 * precision * recall / (precision + recall)
    return SetScore(precision=precision, recall=recall, f1=f1, exact_match=p == t)


def length_error(inferred_s: int, true_s: int) -> int:
    """Absolute distance between the inferred and true label counts."""
    if inferred_s < 0 or true_s < 0:
        raise ValueError("counts must be non-negative")
    return abs(inferred_s - true_s)


def wer(reference, hypothesis) -> float:
    """Word error rate: unit-cost edit distance divided by reference length.

    Tokens are compared by equality; the result can exceed 1 when the
    hypothesis is much longer than the reference.
    """
    ref = list(reference)
    hyp = list(hypothesis)
    if not ref:
        raise ValueError("reference must be non-empty")
    prev = np.arange(len(hyp) + 1)
    for i, rtok in enumerate(ref, start=1):
        cur = np.empty_like(prev)
        cur[0] = i
        for j, htok in enumerate(hyp, start=1):
            cost = 0 if rtok == htok else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return float(prev[-1]) / len(ref)
