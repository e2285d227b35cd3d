"""QA scoring and adversarial-evaluation metrics.

Answer normalization and EM/F1 follow the official SQuAD v1.1 evaluation
conventions (lowercase, strip punctuation and the articles a/an/the,
collapse whitespace; multi-gold scores take the max over golds). The
validated-model-error-rate metrics summarize human-in-the-loop evaluation
logs where every model-fooling example has been manually validated.
"""

from __future__ import annotations

import csv
import json
import re
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def normalize_answer(text: str) -> str:
    """Lower text and remove punctuation, articles and extra whitespace."""
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    text = _ARTICLES_RE.sub(" ", text)
    return " ".join(text.split())


def exact_match(prediction: str, golds: Sequence[str]) -> int:
    """1 iff the normalized prediction equals any normalized gold."""
    if not golds:
        raise ValueError("exact_match requires at least one gold answer")
    pred = normalize_answer(prediction)
    return int(any(pred == normalize_answer(g) for g in golds))


def _single_f1(prediction: str, gold: str) -> float:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, golds: Sequence[str]) -> float:
    """Max over golds of bag-of-tokens F1 on normalized tokens."""
    if not golds:
        raise ValueError("token_f1 requires at least one gold answer")
    return max(_single_f1(prediction, g) for g in golds)


@dataclass(frozen=True)
class ScoredPrediction:
    """One prediction scored against one or more gold answers."""

    prediction: str
    golds: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.golds:
            raise ValueError("golds must be non-empty")


def dataset_em_f1(pairs: Sequence[ScoredPrediction]) -> dict[str, float]:
    """Dataset-level EM and F1 as percentages (means over examples x 100)."""
    if not pairs:
        raise ValueError("dataset_em_f1 requires a non-empty input")
    em = sum(exact_match(p.prediction, p.golds) for p in pairs) / len(pairs)
    f1 = sum(token_f1(p.prediction, p.golds) for p in pairs) / len(pairs)
    return {"em_pct": 100.0 * em, "f1_pct": 100.0 * f1}


def aggregate_runs(runs: Sequence[Mapping[str, float]]) -> dict[str, float]:
    """Mean and standard deviation of per-run EM/F1 percentages."""
    if not runs:
        raise ValueError("aggregate_runs requires at least one run")
    out: dict[str, float] = {}
    for key in ("em_pct", "f1_pct"):
        vals = [run[key] for run in runs]
        mean = sum(vals) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / len(vals)
        out[f"{key}_mean"] = mean
        out[f"{key}_std"] = var ** 0.5
    return out


class FoolingRecord(Protocol):
    """Minimal view of one human-vs-model interaction used for vMER.

    ``fooled`` marks the model failing the live match check; ``validation``
    is one of auto_valid/pending/valid/invalid, where non-fooling records
    are auto-validated by the model's own success.
    """

    @property
    def fooled(self) -> bool: ...

    @property
    def validation(self) -> str: ...


def vmer(records: Sequence[FoolingRecord], mode: str = "strict") -> float:
    """Validated model error rate as a percentage.

    Numerator: fooling records whose validation verdict is ``valid``.
    Denominator in ``strict`` mode: model-correct records plus validated
    fooling records (invalidated fooling attempts are excluded entirely).
    ``inclusive`` mode keeps invalidated attempts in the denominator.
    """
    if mode not in ("strict", "inclusive"):
        raise ValueError(f"unknown vmer mode: {mode!r}")
    errors = 0
    denom = 0
    for rec in records:
        if rec.fooled:
            if rec.validation == "pending":
                raise ValueError("vmer requires all fooling records to be validated")
            if rec.validation == "valid":
                errors += 1
                denom += 1
            elif mode == "inclusive":
                denom += 1
        else:
            denom += 1
    if denom == 0:
        return 0.0
    return 100.0 * errors / denom


@dataclass(frozen=True)
class AnnotatorStats:
    """Per-annotator counts feeding the macro-averaged error rate.

    ``n_examples`` counts the annotator's examples contributing to the
    error-rate denominator (invalidated fooling attempts already removed),
    so that pooling stats over annotators reproduces the record-level rate.
    """

    annotator_id: str
    n_examples: int
    n_validated_errors: int

    def __post_init__(self) -> None:
        if self.n_examples < 1:
            raise ValueError("n_examples must be >= 1")
        if not 0 <= self.n_validated_errors <= self.n_examples:
            raise ValueError("n_validated_errors must be in [0, n_examples]")

    @property
    def error_rate(self) -> float:
        return self.n_validated_errors / self.n_examples


def mvmer(stats: Sequence[AnnotatorStats]) -> float:
    """Unweighted mean of per-annotator error rates, as a percentage."""
    if not stats:
        raise ValueError("mvmer requires at least one annotator")
    return 100.0 * sum(s.error_rate for s in stats) / len(stats)


def write_annotator_csv(stats: Iterable[AnnotatorStats], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["annotator_id", "n_examples", "n_validated_errors", "vmer_pct"])
        for s in stats:
            writer.writerow([s.annotator_id, s.n_examples, s.n_validated_errors, f"{100.0 * s.error_rate:.4f}"])


def evaluate_prediction_file(predictions_path: str | Path, gold_squad_path: str | Path) -> dict[str, float]:
    """Score a {question_id: prediction} JSON file against SQuAD-style gold JSON."""
    with open(predictions_path, encoding="utf-8") as fh:
        predictions: Mapping[str, str] = json.load(fh)
    with open(gold_squad_path, encoding="utf-8") as fh:
        gold = json.load(fh)
    pairs = []
    for article in gold["data"]:
        for paragraph in article["paragraphs"]:
            for qa in paragraph["qas"]:
                qid = qa["id"]
                golds = tuple(ans["text"] for ans in qa["answers"])
                pred = predictions.get(qid, "")
                pairs.append(ScoredPrediction(prediction=pred, golds=golds))
    scores = dataset_em_f1(pairs)
    return {"em": scores["em_pct"], "f1": scores["f1_pct"]}
