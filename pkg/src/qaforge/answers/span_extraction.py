"""Top-k span sampling from a start/end distribution model."""

from __future__ import annotations

import numpy as np

from ..corpus import Passage
from ..interfaces import SpanPredictor
from ..metrics import normalize_answer
from .spans import AnswerCandidate, span_from_passage


def select_span_extraction_candidates(
    passage: Passage,
    span_model: SpanPredictor,
    k: int,
    max_answer_len: int = 30,
) -> list[AnswerCandidate]:
    """Top-k admissible spans ranked by joint score p_start(i) * p_end(j).

    Admissible spans have i <= j and at most ``max_answer_len`` tokens. Ties
    break by earlier start, then shorter span. Candidates are deduplicated
    on normalized surface text after ranking, before truncation to k.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    dist = span_model.predict_spans(passage)
    start = np.asarray(dist.start_probs, dtype=float)
    end = np.asarray(dist.end_probs, dtype=float)
    if ((start < 0) | (start > 1)).any() or ((end < 0) | (end > 1)).any():
        raise ValueError("start/end distributions must lie in [0, 1]")

    scored: list[tuple[float, int, int]] = []
    n = len(start)
    for i in range(n):
        for j in range(i, min(n, i + max_answer_len)):
            scored.append((float(start[i] * end[j]), i, j))
    scored.sort(key=lambda t: (-t[0], t[1], t[2] - t[1]))

    candidates: list[AnswerCandidate] = []
    seen_text: set[str] = set()
    dropped_unmappable = 0
    for score, i, j in scored:
        if len(candidates) >= k:
            break
        start_off = dist.token_offsets[i]
        end_off = dist.token_offsets[j]
        if start_off is None or end_off is None:
            dropped_unmappable += 1
            continue
        span = span_from_passage(passage, start_off[0], end_off[1])
        key = normalize_answer(span.text)
        if key in seen_text:
            continue
        seen_text.add(key)
        candidates.append(AnswerCandidate(span=span, confidence=score, method="span_extraction"))
    return candidates
