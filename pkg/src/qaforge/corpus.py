"""Passage ingestion and n-gram decontamination.

External passages are checked against evaluation corpora by word-level
n-gram overlap (default n=8) after normalizing to lower-cased alphanumeric
words with a single space delimiter. Any shared window drops the passage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

PASSAGE_SOURCES = ("squad_train", "external", "eval_set")
SPLITS = ("train", "dev", "test", "none")


@dataclass(frozen=True)
class Passage:
    """A unit of source text with identity, split assignment, and provenance."""

    id: str
    title: str
    text: str
    source: str = "external"
    split: str = "none"

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"passage {self.id!r} has empty text")
        if self.source not in PASSAGE_SOURCES:
            raise ValueError(f"unknown passage source: {self.source!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split: {self.split!r}")


def normalize_text(text: str) -> str:
    """Normalize to lower-cased alphanumeric words joined by single spaces.

    Unicode letters and digits are word characters; every other character
    acts as a separator. Idempotent.
    """
    lowered = text.lower()
    return " ".join("".join(ch if ch.isalnum() else " " for ch in lowered).split())


@dataclass(frozen=True)
class ShingleSet:
    """All contiguous n-word windows of a passage's normalized text."""

    passage_id: str
    n: int
    shingles: frozenset[tuple[str, ...]]


def build_shingles(passage: Passage, n: int = 8) -> ShingleSet:
    if n < 1:
        raise ValueError(f"shingle size must be >= 1, got {n}")
    words = normalize_text(passage.text).split()
    windows = frozenset(tuple(words[i : i + n]) for i in range(len(words) - n + 1))
    return ShingleSet(passage_id=passage.id, n=n, shingles=windows)


@dataclass(frozen=True)
class OverlapReport:
    n: int
    total: int
    dropped: int

    @property
    def dropped_fraction(self) -> float:
        return self.dropped / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "total": self.total,
            "dropped": self.dropped,
            "dropped_fraction": self.dropped_fraction,
        }


def decontaminate(
    candidates: Sequence[Passage],
    eval_corpora: Sequence[Passage],
    n: int = 8,
    extra_eval_texts: Sequence[str] = (),
) -> tuple[list[Passage], list[Passage], OverlapReport]:
    """Partition candidates into (kept, dropped) by n-gram overlap with eval text.

    A candidate is dropped iff it shares at least one normalized n-word
    window with any eval passage (or any extra eval text stream, e.g.
    questions or answers, supplied through ``extra_eval_texts``).
    """
    if n < 1:
        raise ValueError(f"shingle size must be >= 1, got {n}")
    eval_shingles: set[tuple[str, ...]] = set()
    for passage in eval_corpora:
        eval_shingles |= build_shingles(passage, n).shingles
    for text in extra_eval_texts:
        words = normalize_text(text).split()
        eval_shingles.update(tuple(words[i : i + n]) for i in range(len(words) - n + 1))

    kept: list[Passage] = []
    dropped: list[Passage] = []
    for candidate in candidates:
        if build_shingles(candidate, n).shingles & eval_shingles:
            dropped.append(candidate)
        else:
            kept.append(candidate)
    report = OverlapReport(n=n, total=len(candidates), dropped=len(dropped))
    return kept, dropped, report


class NGramDecontaminator(BaseEstimator):
    """Estimator-style wrapper: fit on eval corpora, transform candidate passages.

    ``transform`` returns the kept passages; the per-call report is stored
    on ``last_report_``.
    """

    def __init__(self, n: int = 8):
        self.n = n

    def fit(self, eval_passages: Sequence[Passage], y=None, extra_eval_texts: Sequence[str] = ()):
        if self.n < 1:
            raise ValueError(f"shingle size must be >= 1, got {self.n}")
        shingles: set[tuple[str, ...]] = set()
        for passage in eval_passages:
            shingles |= build_shingles(passage, self.n).shingles
        for text in extra_eval_texts:
            words = normalize_text(text).split()
            shingles.update(tuple(words[i : i + self.n]) for i in range(len(words) - self.n + 1))
        self.eval_shingles_ = frozenset(shingles)
        return self

    def transform(self, candidates: Sequence[Passage]) -> list[Passage]:
        if not hasattr(self, "eval_shingles_"):
            raise NotFittedError("NGramDecontaminator must be fitted before transform")
        kept = []
        dropped = 0
        for candidate in candidates:
            if build_shingles(candidate, self.n).shingles & self.eval_shingles_:
                dropped += 1
            else:
                kept.append(candidate)
        self.last_report_ = OverlapReport(n=self.n, total=len(candidates), dropped=dropped)
        return kept


def passages_from_squad_json(path: str | Path, source: str = "squad_train", split: str = "none") -> list[Passage]:
    """Read passages from SQuAD v1.1-style JSON (article -> paragraphs -> context)."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    passages = []
    for ai, article in enumerate(data["data"]):
        title = article.get("title", "")
        for pi, paragraph in enumerate(article["paragraphs"]):
            passages.append(
                Passage(
                    id=f"{title or ai}#{pi}",
                    title=title,
                    text=paragraph["context"],
                    source=source,
                    split=split,
                )
            )
    return passages


def read_passages_jsonl(path: str | Path) -> list[Passage]:
    passages = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            passages.append(
                Passage(
                    id=rec["id"],
                    title=rec.get("title", ""),
                    text=rec["text"],
                    source=rec.get("source", "external"),
                    split=rec.get("split", "none"),
                )
            )
    return passages


def write_passages_jsonl(passages: Iterable[Passage], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in passages:
            rec = {"id": p.id, "title": p.title, "text": p.text, "source": p.source, "split": p.split}
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def with_split(passage: Passage, split: str) -> Passage:
    return replace(passage, split=split)
