"""Merge annotated answers from multiple datasets into per-split aligned sets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from ..corpus import Passage
from .spans import AlignedAnswerSet, AnswerSpan


@dataclass(frozen=True)
class RejectedAnswer:
    passage_id: str
    reason: str
    answer: AnswerSpan | None = None


@dataclass
class AlignmentResult:
    by_split: dict[str, list[AlignedAnswerSet]]
    rejected: list[RejectedAnswer] = field(default_factory=list)


def align_answer_sets(
    passages: Mapping[str, Passage],
    datasets: Sequence[Mapping[str, Sequence[AnswerSpan]]],
    passage_splits: Mapping[str, str],
) -> AlignmentResult:
    """Union answers per passage across datasets, deduplicated by offsets.

    Answers referencing unknown passages or whose stored text disagrees
    with the passage slice are rejected with a diagnostic instead of
    crashing the merge. Each passage lands in exactly one split.
    """
    merged: dict[str, dict[tuple[int, int], AnswerSpan]] = {pid: {} for pid in passages}
    rejected: list[RejectedAnswer] = []
    for dataset in datasets:
        for passage_id, answers in dataset.items():
            passage = passages.get(passage_id)
            if passage is None:
                rejected.append(RejectedAnswer(passage_id, "unknown passage"))
                continue
            for answer in answers:
                try:
                    answer.validate_against(passage)
                except ValueError as exc:
                    rejected.append(RejectedAnswer(passage_id, str(exc), answer))
                    continue
                merged[passage_id].setdefault((answer.char_start, answer.char_end), answer)

    by_split: dict[str, list[AlignedAnswerSet]] = {}
    for passage_id in sorted(merged):
        split = passage_splits.get(passage_id, "none")
        aligned = AlignedAnswerSet(
            passage=passages[passage_id],
            answers=tuple(merged[passage_id][k] for k in sorted(merged[passage_id])),
        )
        by_split.setdefault(split, []).append(aligned)
    return AlignmentResult(by_split=by_split, rejected=rejected)


def _intervals_intersect(a: AnswerSpan, b: AnswerSpan) -> bool:
    return a.char_start < b.char_end and b.char_start < a.char_end


def overlap_stats(sets: Sequence[AlignedAnswerSet]) -> dict[str, float]:
    """Answer-density and interval-overlap statistics over aligned sets.

    An answer is overlapping iff its character interval intersects another
    answer's interval in the same passage.
    """
    if not sets:
        raise ValueError("overlap_stats requires a non-empty input")
    n_answers = 0
    n_overlapping = 0
    n_passages_with_overlap = 0
    for aligned in sets:
        answers = aligned.answers
        n_answers += len(answers)
        passage_has_overlap = False
        for i, a in enumerate(answers):
            if any(_intervals_intersect(a, b) for j, b in enumerate(answers) if j != i):
                n_overlapping += 1
                passage_has_overlap = True
        if passage_has_overlap:
            n_passages_with_overlap += 1
    return {
        "answers_per_passage": n_answers / len(sets),
        "pct_overlapping_answers": 100.0 * n_overlapping / n_answers if n_answers else 0.0,
        "pct_passages_with_overlap": 100.0 * n_passages_with_overlap / len(sets),
    }


def write_aligned_jsonl(result: AlignmentResult, path: str | Path) -> None:
    """One record per passage: {passage_id, split, text, answers: [...]}."""
    with open(path, "w", encoding="utf-8") as fh:
        for split in sorted(result.by_split):
            for aligned in result.by_split[split]:
                rec = {
                    "passage_id": aligned.passage.id,
                    "split": split,
                    "text": aligned.passage.text,
                    "answers": [
                        {
                            "start": a.char_start,
                            "end": a.char_end,
                            "text": a.text,
                            "source_dataset": a.source_dataset,
                        }
                        for a in aligned.answers
                    ],
                }
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_aligned_jsonl(path: str | Path) -> AlignmentResult:
    by_split: dict[str, list[AlignedAnswerSet]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            passage = Passage(id=rec["passage_id"], title="", text=rec["text"], split=rec["split"])
            answers = tuple(
                AnswerSpan(
                    passage_id=rec["passage_id"],
                    char_start=a["start"],
                    char_end=a["end"],
                    text=a["text"],
                    source_dataset=a.get("source_dataset", "synthetic"),
                )
                for a in rec["answers"]
            )
            by_split.setdefault(rec["split"], []).append(AlignedAnswerSet(passage=passage, answers=answers))
    return AlignmentResult(by_split=by_split)


def answers_from_squad_json(
    path: str | Path, passages: Mapping[str, Passage], source_dataset: str = "squad"
) -> dict[str, list[AnswerSpan]]:
    """Extract answer spans from SQuAD-style JSON keyed by passage id.

    Passage ids must follow the ``title#paragraph_index`` convention used by
    ``corpus.passages_from_squad_json``.
    """
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    out: dict[str, list[AnswerSpan]] = {}
    for ai, article in enumerate(data["data"]):
        title = article.get("title", "")
        for pi, paragraph in enumerate(article["paragraphs"]):
            passage_id = f"{title or ai}#{pi}"
            if passage_id not in passages:
                continue
            spans = out.setdefault(passage_id, [])
            for qa in paragraph["qas"]:
                for ans in qa["answers"]:
                    start = ans["answer_start"]
                    spans.append(
                        AnswerSpan(
                            passage_id=passage_id,
                            char_start=start,
                            char_end=start + len(ans["text"]),
                            text=ans["text"],
                            source_dataset=source_dataset,
                        )
                    )
    return out
