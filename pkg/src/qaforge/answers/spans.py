"""Character-addressed answer spans and candidates."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from ..corpus import Passage

SOURCE_DATASETS = ("squad", "aqa_bidaf", "aqa_bert", "aqa_roberta", "synthetic")
SELECTION_METHODS = (
    "pos_extended",
    "noun_chunks",
    "named_entities",
    "span_extraction",
    "generative",
    "sal",
)


@dataclass(frozen=True)
class AnswerSpan:
    """A [char_start, char_end) slice of a passage."""

    passage_id: str
    char_start: int
    char_end: int
    text: str
    source_dataset: str = "synthetic"

    def __post_init__(self) -> None:
        if not 0 <= self.char_start < self.char_end:
            raise ValueError(
                f"invalid span offsets [{self.char_start}, {self.char_end}) for passage {self.passage_id!r}"
            )
        if self.source_dataset not in SOURCE_DATASETS:
            raise ValueError(f"unknown source dataset: {self.source_dataset!r}")

    def validate_against(self, passage: Passage) -> None:
        if passage.id != self.passage_id:
            raise ValueError(f"span belongs to {self.passage_id!r}, not {passage.id!r}")
        if self.char_end > len(passage.text):
            raise ValueError(
                f"span end {self.char_end} exceeds passage length {len(passage.text)} ({self.passage_id!r})"
            )
        actual = passage.text[self.char_start : self.char_end]
        if actual != self.text:
            raise ValueError(
                f"span text mismatch in {self.passage_id!r}: stored {self.text!r} != passage slice {actual!r}"
            )


def span_from_passage(passage: Passage, char_start: int, char_end: int, source_dataset: str = "synthetic") -> AnswerSpan:
    if not 0 <= char_start < char_end <= len(passage.text):
        raise ValueError(f"offsets [{char_start}, {char_end}) out of range for passage {passage.id!r}")
    return AnswerSpan(
        passage_id=passage.id,
        char_start=char_start,
        char_end=char_end,
        text=passage.text[char_start:char_end],
        source_dataset=source_dataset,
    )


@dataclass(frozen=True)
class AnswerCandidate:
    """An answer span proposed by a selection method, with its confidence.

    Methods without calibrated scores report confidence 1.0.
    """

    span: AnswerSpan
    confidence: float
    method: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.method not in SELECTION_METHODS:
            raise ValueError(f"unknown selection method: {self.method!r}")


@dataclass(frozen=True)
class AlignedAnswerSet:
    """All annotated answers for one passage, deduplicated by offsets."""

    passage: Passage
    answers: tuple[AnswerSpan, ...]

    def __post_init__(self) -> None:
        offsets = [(a.char_start, a.char_end) for a in self.answers]
        if len(offsets) != len(set(offsets)):
            raise ValueError(f"duplicate answer offsets in passage {self.passage.id!r}")


def write_candidates_jsonl(
    candidates_by_passage: Mapping[str, Sequence[AnswerCandidate]], path: str | Path
) -> None:
    """Candidate output: one record per (passage, method) group."""
    with open(path, "w", encoding="utf-8") as fh:
        for passage_id in sorted(candidates_by_passage):
            by_method: dict[str, list[AnswerCandidate]] = {}
            for cand in candidates_by_passage[passage_id]:
                by_method.setdefault(cand.method, []).append(cand)
            for method in sorted(by_method):
                rec = {
                    "passage_id": passage_id,
                    "method": method,
                    "candidates": [
                        {
                            "start": c.span.char_start,
                            "end": c.span.char_end,
                            "text": c.span.text,
                            "confidence": c.confidence,
                        }
                        for c in by_method[method]
                    ],
                }
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_candidates_jsonl(path: str | Path) -> dict[str, list[AnswerCandidate]]:
    out: dict[str, list[AnswerCandidate]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            spans = out.setdefault(rec["passage_id"], [])
            for c in rec["candidates"]:
                spans.append(
                    AnswerCandidate(
                        span=AnswerSpan(
                            passage_id=rec["passage_id"],
                            char_start=c["start"],
                            char_end=c["end"],
                            text=c["text"],
                        ),
                        confidence=c["confidence"],
                        method=rec["method"],
                    )
                )
    return out
