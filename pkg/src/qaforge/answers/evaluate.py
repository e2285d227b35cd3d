"""Set-level scoring of candidate answers against gold answers."""

from __future__ import annotations

from typing import Iterable

from ..metrics import normalize_answer


def evaluate_candidates(predicted: Iterable[str], gold: Iterable[str]) -> dict[str, float]:
    """Entity-level precision/recall/F1 on unique normalized candidates.

    Both sides are normalized and deduplicated before the set comparison.
    F1 is the harmonic mean, 0 when both precision and recall are 0.
    """
    pred_set = {normalize_answer(t) for t in predicted}
    gold_set = {normalize_answer(t) for t in gold}
    pred_set.discard("")
    gold_set.discard("")
    if not pred_set and not gold_set:
        return {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    inter = len(pred_set & gold_set)
    precision = inter / len(pred_set) if pred_set else 0.0
    recall = inter / len(gold_set) if gold_set else 0.0
    if precision + recall == 0.0:
        return {"precision": precision, "recall": recall, "f1": 0.0}
    return {"precision": precision, "recall": recall, "f1": 2 * precision * recall / (precision + recall)}
