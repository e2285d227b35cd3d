"""Linguistic baseline candidate selection.

Tagging itself is not implemented here; any POS/NER/chunking provider is
consumed through the ``LinguisticAnnotator`` protocol. The extended mode is
the deduplicated union of six annotation categories: named entities,
adjectives, noun phrases, numbers, distinct proper nouns, and clauses.
"""

from __future__ import annotations

from typing import Mapping

from ..corpus import Passage
from ..interfaces import LinguisticAnnotation, LinguisticAnnotator
from .spans import AnswerCandidate, span_from_passage

LINGUISTIC_MODES = ("noun_chunks", "named_entities", "pos_extended")


class AnnotatorError(RuntimeError):
    pass


def _category_offsets(annotation: LinguisticAnnotation, mode: str, text: str) -> list[tuple[int, int]]:
    if mode == "noun_chunks":
        return list(annotation.noun_chunks)
    if mode == "named_entities":
        return list(annotation.named_entities)
    # pos_extended: union of all six categories, proper nouns deduplicated by surface form
    seen_proper: set[str] = set()
    distinct_proper = []
    for start, end in annotation.proper_nouns:
        surface = text[start:end]
        if surface not in seen_proper:
            seen_proper.add(surface)
            distinct_proper.append((start, end))
    return (
        list(annotation.named_entities)
        + list(annotation.adjectives)
        + list(annotation.noun_chunks)
        + list(annotation.numbers)
        + distinct_proper
        + list(annotation.clauses)
    )


def select_linguistic_candidates(
    passage: Passage, annotator: LinguisticAnnotator, mode: str
) -> list[AnswerCandidate]:
    """Turn annotator spans for the requested mode into answer candidates.

    Offsets are deduplicated; candidates carry confidence 1.0 (no calibrated
    score). Annotator failures propagate with the passage id attached.
    """
    if mode not in LINGUISTIC_MODES:
        raise ValueError(f"unknown linguistic mode: {mode!r}")
    try:
        annotation = annotator.annotate(passage)
    except Exception as exc:
        raise AnnotatorError(f"annotator failed on passage {passage.id!r}: {exc}") from exc

    candidates = []
    seen: set[tuple[int, int]] = set()
    for start, end in _category_offsets(annotation, mode, passage.text):
        if (start, end) in seen:
            continue
        seen.add((start, end))
        candidates.append(
            AnswerCandidate(span=span_from_passage(passage, start, end), confidence=1.0, method=mode)
        )
    return candidates


class StaticAnnotator:
    """Annotator backed by precomputed per-passage annotations."""

    def __init__(self, annotations: Mapping[str, LinguisticAnnotation]):
        self._annotations = dict(annotations)

    def annotate(self, passage: Passage) -> LinguisticAnnotation:
        try:
            return self._annotations[passage.id]
        except KeyError:
            raise KeyError(f"no annotation for passage {passage.id!r}") from None
