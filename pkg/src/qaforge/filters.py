"""Filtering and relabelling of synthetic question-answer pairs.

Four families: score thresholds (answer-candidate and generator
confidence), ensemble roundtrip consistency (how many QA models recover
the prompted answer), self-training relabelling from ensemble agreement,
and influence-based filtering (estimated effect on validation loss). The
best combination applies the answer confidence threshold first and
self-training on the survivors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .answers.spans import AnswerSpan
from .corpus import Passage
from .interfaces import InverseHessianBackend, QAModel
from .metrics import normalize_answer

EXAMPLE_STATES = ("raw", "kept", "relabelled", "discarded")


@dataclass(frozen=True)
class SyntheticExample:
    """One generated QA pair with its lifecycle state."""

    id: str
    passage_id: str
    answer: AnswerSpan
    question: str
    answer_confidence: float
    gen_score: float
    state: str = "raw"
    final_answer: AnswerSpan | None = None

    def __post_init__(self) -> None:
        if self.state not in EXAMPLE_STATES:
            raise ValueError(f"unknown example state: {self.state!r}")
        if not 0.0 <= self.answer_confidence <= 1.0:
            raise ValueError("answer_confidence must be in [0, 1]")
        if not 0.0 <= self.gen_score <= 1.0:
            raise ValueError("gen_score must be in [0, 1]")
        if self.state == "discarded" and self.final_answer is not None:
            raise ValueError("discarded examples may not carry a final answer")
        if self.state in ("kept", "relabelled") and self.final_answer is None:
            raise ValueError(f"{self.state} examples must carry a final answer")
        if self.state == "relabelled" and self.final_answer is not None:
            if normalize_answer(self.final_answer.text) == normalize_answer(self.answer.text):
                raise ValueError("relabelled answer must differ from the original under normalization")


@dataclass(frozen=True)
class Prediction:
    text: str
    confidence: float
    error: str | None = None


@dataclass(frozen=True)
class EnsembleVerdict:
    """Per-member predictions for one example, with the roundtrip count."""

    example_id: str
    predictions: tuple[Prediction, ...]
    n_members: int
    n_correct: int

    def __post_init__(self) -> None:
        if len(self.predictions) != self.n_members:
            raise ValueError("predictions must have exactly n_members entries")
        if not 0 <= self.n_correct <= self.n_members:
            raise ValueError("n_correct out of range")


@dataclass(frozen=True)
class FilterConfig:
    """Hyper-parameters for the filtering stage; defaults follow the best
    observed settings (combined filter: answer confidence 0.5 with
    self-training keep-at-5 / relabel-at-2 over a 6-model ensemble)."""

    answer_conf_thresh: float = 0.5
    gen_conf_thresh: float = 0.3
    roundtrip_min_correct: int = 6
    selftrain_keep_at: int = 5
    selftrain_relabel_at: int = 2
    n_members: int = 6

    def __post_init__(self) -> None:
        if not 0.0 <= self.answer_conf_thresh <= 1.0:
            raise ValueError("answer_conf_thresh must be in [0, 1]")
        if not 0.0 <= self.gen_conf_thresh <= 1.0:
            raise ValueError("gen_conf_thresh must be in [0, 1]")
        if not 0 <= self.selftrain_relabel_at <= self.selftrain_keep_at <= self.n_members:
            raise ValueError("need 0 <= relabel_at <= keep_at <= n_members")
        if not 0 <= self.roundtrip_min_correct <= self.n_members:
            raise ValueError("roundtrip_min_correct must be in [0, n_members]")


def filter_by_answer_confidence(
    examples: Sequence[SyntheticExample], thresh: float
) -> tuple[list[SyntheticExample], list[SyntheticExample]]:
    """(kept, dropped) by answer_confidence >= thresh; examples unmodified."""
    if not 0.0 <= thresh <= 1.0:
        raise ValueError("thresh must be in [0, 1]")
    kept = [ex for ex in examples if ex.answer_confidence >= thresh]
    dropped = [ex for ex in examples if ex.answer_confidence < thresh]
    return kept, dropped


def filter_by_generator_confidence(
    examples: Sequence[SyntheticExample], thresh: float
) -> tuple[list[SyntheticExample], list[SyntheticExample]]:
    """(kept, dropped) by gen_score >= thresh; examples unmodified."""
    if not 0.0 <= thresh <= 1.0:
        raise ValueError("thresh must be in [0, 1]")
    kept = [ex for ex in examples if ex.gen_score >= thresh]
    dropped = [ex for ex in examples if ex.gen_score < thresh]
    return kept, dropped


def roundtrip_verdict(
    example: SyntheticExample, passage: Passage, ensemble: Sequence[QAModel]
) -> EnsembleVerdict:
    """Ask every ensemble member the generated question over the passage.

    Correctness is normalized exact match with the prompted answer text.
    A failing member is recorded as incorrect with a diagnostic rather
    than aborting the verdict.
    """
    if not ensemble:
        raise ValueError("ensemble must be non-empty")
    target = normalize_answer(example.answer.text)
    predictions = []
    n_correct = 0
    for member in ensemble:
        try:
            text, confidence = member.answer(passage.text, example.question)
        except Exception as exc:
            predictions.append(Prediction(text="", confidence=0.0, error=str(exc)))
            continue
        predictions.append(Prediction(text=text, confidence=confidence))
        if normalize_answer(text) == target:
            n_correct += 1
    return EnsembleVerdict(
        example_id=example.id,
        predictions=tuple(predictions),
        n_members=len(ensemble),
        n_correct=n_correct,
    )


def filter_roundtrip(verdicts: Sequence[EnsembleVerdict], min_correct: int) -> set[str]:
    """Ids of examples where at least min_correct members recovered the answer."""
    if min_correct < 0:
        raise ValueError("min_correct must be >= 0")
    return {v.example_id for v in verdicts if v.n_correct >= min_correct}


def _plurality(predictions: Sequence[Prediction]) -> tuple[int, str | None]:
    """Largest agreement group over normalized predictions.

    Returns (group size, representative raw text). Ties between groups of
    equal size break by highest summed member confidence; a residual tie
    yields (size, None) meaning unresolvable.
    """
    groups: dict[str, list[Prediction]] = {}
    order: dict[str, int] = {}
    for idx, pred in enumerate(predictions):
        key = normalize_answer(pred.text)
        groups.setdefault(key, []).append(pred)
        order.setdefault(key, idx)
    m = max(len(g) for g in groups.values())
    top = [key for key, g in groups.items() if len(g) == m]
    if len(top) > 1:
        sums = {key: sum(p.confidence for p in groups[key]) for key in top}
        best = max(sums.values())
        top = [key for key in top if sums[key] == best]
        if len(top) > 1:
            return m, None
    key = top[0]
    # representative raw text: highest-confidence member, earliest on ties
    rep = max(enumerate(groups[key]), key=lambda ip: (ip[1].confidence, -ip[0]))[1]
    return m, rep.text


def self_train_relabel(
    verdict: EnsembleVerdict,
    keep_at: int = 5,
    relabel_at: int = 2,
    prompted_answer: str | None = None,
) -> tuple[str, str | None]:
    """Keep/relabel/discard one example from its ensemble verdict.

    With m the size of the largest agreement group over normalized
    predictions and a* its answer: m >= keep_at keeps a*; otherwise
    m >= relabel_at relabels to a* (state stays kept when a* matches the
    prompted answer); otherwise the example is discarded. Unresolvable
    plurality ties discard.
    """
    if not verdict.predictions:
        raise ValueError("verdict has no predictions")
    if not 0 <= relabel_at <= keep_at <= verdict.n_members:
        raise ValueError("need 0 <= relabel_at <= keep_at <= n_members")
    m, answer = _plurality(verdict.predictions)
    if answer is None:
        return "discarded", None
    if m >= keep_at:
        return "kept", answer
    if m >= relabel_at:
        matches_prompt = prompted_answer is not None and normalize_answer(answer) == normalize_answer(
            prompted_answer
        )
        return ("kept" if matches_prompt else "relabelled"), answer
    return "discarded", None


def apply_self_training(
    example: SyntheticExample,
    verdict: EnsembleVerdict,
    passage: Passage,
    keep_at: int = 5,
    relabel_at: int = 2,
) -> SyntheticExample:
    """Materialize the self-training decision onto the example.

    A relabelled (or kept-but-reassigned) answer must be locatable as a
    contiguous passage span (first occurrence); otherwise the example is
    discarded.
    """
    state, answer_text = self_train_relabel(
        verdict, keep_at=keep_at, relabel_at=relabel_at, prompted_answer=example.answer.text
    )
    if state == "discarded" or answer_text is None:
        return replace(example, state="discarded", final_answer=None)
    if normalize_answer(answer_text) == normalize_answer(example.answer.text):
        return replace(example, state="kept", final_answer=example.answer)
    start = passage.text.find(answer_text)
    if start < 0:
        return replace(example, state="discarded", final_answer=None)
    final = AnswerSpan(
        passage_id=passage.id,
        char_start=start,
        char_end=start + len(answer_text),
        text=answer_text,
        source_dataset="synthetic",
    )
    return replace(example, state=state, final_answer=final)


def combined_filter(
    examples: Sequence[SyntheticExample],
    verdicts: Mapping[str, EnsembleVerdict],
    passages: Mapping[str, Passage],
    config: FilterConfig,
) -> tuple[list[SyntheticExample], "FilterManifest"]:
    """Answer-confidence filter, then self-training on the survivors.

    Output contains only kept/relabelled examples, each with final_answer
    set. A surviving example without a verdict is an error.
    """
    survivors, below = filter_by_answer_confidence(examples, config.answer_conf_thresh)
    out: list[SyntheticExample] = []
    n_relabelled = 0
    n_discarded = len(below)
    for ex in survivors:
        verdict = verdicts.get(ex.id)
        if verdict is None:
            raise KeyError(f"missing ensemble verdict for surviving example {ex.id!r}")
        passage = passages.get(ex.passage_id)
        if passage is None:
            raise KeyError(f"unknown passage {ex.passage_id!r} for example {ex.id!r}")
        updated = apply_self_training(
            ex, verdict, passage, keep_at=config.selftrain_keep_at, relabel_at=config.selftrain_relabel_at
        )
        if updated.state == "discarded":
            n_discarded += 1
        else:
            if updated.state == "relabelled":
                n_relabelled += 1
            out.append(updated)
    manifest = FilterManifest(
        config=config,
        counts={
            "input": len(examples),
            "kept": len(out) - n_relabelled,
            "relabelled": n_relabelled,
            "discarded": n_discarded,
        },
    )
    return out, manifest


def influence_score(
    train_grad: np.ndarray,
    val_grads: Sequence[np.ndarray],
    hessian_mode: str = "identity",
    inverse_hessian: InverseHessianBackend | None = None,
) -> float:
    """Estimated effect of upweighting a training example on validation loss.

    Positive scores are harmful (estimated to increase validation loss).
    Identity mode is the documented simplification -<g_train, mean g_val>;
    lissa mode routes the mean validation gradient through a backend
    inverse-Hessian-vector product first.
    """
    train_grad = np.asarray(train_grad, dtype=float)
    if not val_grads:
        raise ValueError("need at least one validation gradient")
    stacked = np.stack([np.asarray(v, dtype=float) for v in val_grads])
    if stacked.shape[1:] != train_grad.shape:
        raise ValueError(
            f"gradient dimension mismatch: train {train_grad.shape} vs val {stacked.shape[1:]}"
        )
    mean_val = stacked.mean(axis=0)
    if hessian_mode == "identity":
        direction = mean_val
    elif hessian_mode == "lissa":
        if inverse_hessian is None:
            raise ValueError("lissa mode requires an inverse-Hessian backend")
        direction = np.asarray(inverse_hessian.inverse_hvp(mean_val), dtype=float)
    else:
        raise ValueError(f"unknown hessian mode: {hessian_mode!r}")
    return float(-np.dot(train_grad, direction))


def filter_by_influence(
    scored_examples: Sequence[tuple[SyntheticExample, float]]
) -> list[SyntheticExample]:
    """Keep examples whose influence score is <= 0 (boundary inclusive)."""
    return [ex for ex, score in scored_examples if score <= 0.0]


@dataclass(frozen=True)
class FilterManifest:
    config: FilterConfig
    counts: Mapping[str, int]

    def to_dict(self) -> dict:
        return {
            "config": {
                "answer_conf_thresh": self.config.answer_conf_thresh,
                "gen_conf_thresh": self.config.gen_conf_thresh,
                "roundtrip_min_correct": self.config.roundtrip_min_correct,
                "selftrain_keep_at": self.config.selftrain_keep_at,
                "selftrain_relabel_at": self.config.selftrain_relabel_at,
                "n_members": self.config.n_members,
            },
            "counts": dict(self.counts),
        }


def write_verdicts_jsonl(verdicts: Iterable[EnsembleVerdict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in verdicts:
            rec = {
                "example_id": v.example_id,
                "predictions": [
                    {"text": p.text, "confidence": p.confidence, **({"error": p.error} if p.error else {})}
                    for p in v.predictions
                ],
                "n_correct": v.n_correct,
            }
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_verdicts_jsonl(path: str | Path) -> dict[str, EnsembleVerdict]:
    out: dict[str, EnsembleVerdict] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            predictions = tuple(
                Prediction(text=p["text"], confidence=p["confidence"], error=p.get("error"))
                for p in rec["predictions"]
            )
            out[rec["example_id"]] = EnsembleVerdict(
                example_id=rec["example_id"],
                predictions=predictions,
                n_members=len(predictions),
                n_correct=rec["n_correct"],
            )
    return out
