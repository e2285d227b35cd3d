"""Question generation plumbing: prompt serialization, decode sweeps,
output parsing, and answerability bookkeeping.

The generator itself is a pluggable ``SequenceGenerator`` backend; this
module owns the wire format around it. Prompts are serialized as
``<s> answer </s> passage </s>``; the end-to-end mode prompts with the
passage alone and parses ``answer <sep> question`` outputs.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .answers.spans import AnswerSpan
from .corpus import Passage
from .interfaces import SequenceGenerator

PROMPT_OPEN = "<s>"
PROMPT_SEP = "</s>"
END_TO_END_SEP = "<sep>"

BEAM_SIZES = (1, 3, 5, 10)
NBEST_VALUES = (1, 3, 5, 10)
BEAM_STRENGTHS = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
TOP_P_VALUES = (0.1, 0.5, 0.75)

ANSWERABILITY_LABELS = ("valid", "target_answer_mismatch", "ungrammatical", "invalid")


@dataclass(frozen=True)
class DecodeConfig:
    """One point in the decoding sweep."""

    strategy: str
    beam_size: int = 1
    nbest: int = 1
    beam_strength: float = 1.0
    top_p: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in ("beam", "diverse_beam", "nucleus"):
            raise ValueError(f"unknown decode strategy: {self.strategy!r}")
        if self.nbest < 1:
            raise ValueError("nbest must be >= 1")
        if self.strategy in ("beam", "diverse_beam"):
            if self.beam_size < 1:
                raise ValueError("beam_size must be >= 1")
            if self.nbest > self.beam_size:
                raise ValueError(f"nbest {self.nbest} exceeds beam_size {self.beam_size}")
        if self.strategy == "diverse_beam" and not 0.0 < self.beam_strength <= 1.0:
            raise ValueError(f"beam_strength must be in (0, 1], got {self.beam_strength}")
        if self.strategy == "nucleus" and not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")

    @property
    def config_id(self) -> str:
        if self.strategy == "beam":
            return f"beam_b{self.beam_size}_n{self.nbest}"
        if self.strategy == "diverse_beam":
            return f"diverse_beam_s{self.beam_strength:g}_b{self.beam_size}_n{self.nbest}"
        return f"nucleus_p{self.top_p:g}_n{self.nbest}"


DEFAULT_BEAM_CONFIG = DecodeConfig(strategy="beam", beam_size=5, nbest=1)
DEFAULT_NUCLEUS_CONFIG = DecodeConfig(strategy="nucleus", top_p=0.75, nbest=1)


def build_decode_grid(seed: int = 0) -> list[DecodeConfig]:
    """The full decoding sweep.

    Beam sizes cross with nbest (subject to nbest <= beam_size); diverse
    beam strengths and nucleus top_p values are swept at beam size 5 with
    one output each.
    """
    grid: list[DecodeConfig] = []
    for beam_size in BEAM_SIZES:
        for nbest in NBEST_VALUES:
            if nbest <= beam_size:
                grid.append(DecodeConfig(strategy="beam", beam_size=beam_size, nbest=nbest, seed=seed))
    for strength in BEAM_STRENGTHS:
        grid.append(
            DecodeConfig(strategy="diverse_beam", beam_size=5, nbest=1, beam_strength=strength, seed=seed)
        )
    for top_p in TOP_P_VALUES:
        grid.append(DecodeConfig(strategy="nucleus", top_p=top_p, nbest=1, seed=seed))
    return grid


@dataclass(frozen=True)
class GeneratedQuestion:
    """One generated question with its normalized generator score."""

    text: str
    score: float
    config_id: str
    prompt_answer: AnswerSpan | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("generated question text must be non-empty")
        if not math.isfinite(self.score):
            raise ValueError("generated question score must be finite")


class GenerationError(RuntimeError):
    pass


def serialize_prompt(answer: AnswerSpan, passage: Passage) -> str:
    """``<s> answer </s> passage </s>`` with literal delimiter markers."""
    answer.validate_against(passage)
    return f"{PROMPT_OPEN} {answer.text} {PROMPT_SEP} {passage.text} {PROMPT_SEP}"


def parse_prompt(prompt: str) -> tuple[str, str]:
    """Recover (answer text, passage text) from a serialized prompt."""
    if not prompt.startswith(PROMPT_OPEN + " ") or not prompt.endswith(" " + PROMPT_SEP):
        raise ValueError("prompt does not match the serialization template")
    body = prompt[len(PROMPT_OPEN) + 1 : -(len(PROMPT_SEP) + 1)]
    answer, sep, passage = body.partition(f" {PROMPT_SEP} ")
    if not sep:
        raise ValueError("prompt is missing the answer/passage delimiter")
    return answer, passage


def sequence_score(log_prob: float, text: str) -> float:
    """exp(mean per-word log-probability), in (0, 1] for valid log-probs.

    Length normalization uses whitespace word count since backends only
    report a sequence-level log-probability.
    """
    n_words = max(1, len(text.split()))
    return math.exp(min(0.0, log_prob) / n_words)


def generate(
    generator: SequenceGenerator,
    prompt: str,
    config: DecodeConfig,
    prompt_answer: AnswerSpan | None = None,
    prompt_id: str | None = None,
) -> list[GeneratedQuestion]:
    """Run the backend and post-process: dedup exact texts, sort by
    descending score, truncate to nbest."""
    try:
        raw = generator.generate(prompt, config)
    except Exception as exc:
        raise GenerationError(f"generator failed on prompt {prompt_id or prompt[:60]!r}: {exc}") from exc
    best: dict[str, float] = {}
    for text, log_prob in raw:
        if not text:
            continue
        score = sequence_score(log_prob, text)
        if text not in best or score > best[text]:
            best[text] = score
    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))[: config.nbest]
    return [
        GeneratedQuestion(text=text, score=score, config_id=config.config_id, prompt_answer=prompt_answer)
        for text, score in ranked
    ]


def serialize_end_to_end(passage: Passage) -> str:
    """Prompt for joint answer+question generation: passage only."""
    return f"{PROMPT_OPEN} {passage.text} {PROMPT_SEP}"


@dataclass(frozen=True)
class EndToEndParse:
    answer: str | None
    question: str | None
    usable: bool
    reason: str | None = None


def parse_end_to_end(output: str, passage_text: str) -> EndToEndParse:
    """Split a joint generation into (answer, question).

    The answer must occur verbatim in the passage; malformed outputs are
    flagged unusable rather than raising.
    """
    parts = output.split(END_TO_END_SEP)
    if len(parts) != 2:
        return EndToEndParse(None, None, usable=False, reason="expected exactly one separator")
    answer = parts[0].strip()
    question = parts[1].strip()
    if not answer or not question:
        return EndToEndParse(None, None, usable=False, reason="empty answer or question")
    if answer not in passage_text:
        return EndToEndParse(answer, question, usable=False, reason="answer not found verbatim in passage")
    return EndToEndParse(answer, question, usable=True)


@dataclass(frozen=True)
class AnswerabilityRecord:
    question_id: str
    label: str

    def __post_init__(self) -> None:
        if self.label not in ANSWERABILITY_LABELS:
            raise ValueError(f"unknown answerability label: {self.label!r}")


def aggregate_answerability(records: Sequence[AnswerabilityRecord]) -> dict[str, float]:
    """Percentage of records per answerability label (all labels present)."""
    if not records:
        raise ValueError("aggregate_answerability requires a non-empty input")
    counts = {label: 0 for label in ANSWERABILITY_LABELS}
    for rec in records:
        counts[rec.label] += 1
    return {label: 100.0 * counts[label] / len(records) for label in ANSWERABILITY_LABELS}


def build_generator_training_set(
    squad_examples: Sequence[Mapping],
    target_passage_ids: Iterable[str],
    limit: int = 10_000,
    seed: int = 0,
) -> list[Mapping]:
    """Subsample generator training data to examples over target passages.

    Keeps only examples whose passage id is in ``target_passage_ids``, then
    takes a seeded sample of at most ``limit``, so that large-scale
    generation later mostly sees passages unseen during fine-tuning.
    """
    wanted = set(target_passage_ids)
    pool = [ex for ex in squad_examples if ex.get("passage_id") in wanted]
    if len(pool) <= limit:
        return pool
    rng = random.Random(seed)
    return rng.sample(pool, limit)


def write_generated_jsonl(records: Iterable[Mapping], path: str | Path) -> None:
    """Generated output: {example_id, passage_id, answer, question, gen_score, config_id}."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
