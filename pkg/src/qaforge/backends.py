"""Deterministic reference backends.

These implement the pluggable model contracts with seeded, hash-driven
stand-ins so the pipeline, CLI, and tests run end-to-end without any
trained models. Real deployments swap in actual annotators, span models,
generators, and QA models behind the same protocols.
"""

from __future__ import annotations

import hashlib
import re
from typing import Sequence

import numpy as np

from .corpus import Passage
from .interfaces import SpanDistribution, TokenizedText
from .qgen import PROMPT_SEP, DecodeConfig, parse_prompt

_WORD_RE = re.compile(r"\S+")


def _stable_u64(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _rng_for(*parts: str) -> np.random.Generator:
    return np.random.default_rng(_stable_u64(*parts))


class WhitespaceTokenEncoder:
    """Word tokenizer with hashing-trick feature vectors.

    Token vectors are deterministic functions of the token string, so two
    runs (and two processes) produce identical representations.
    """

    def __init__(self, d_model: int = 16, seed: int = 0):
        self.d_model = d_model
        self.seed = seed

    def tokenize(self, text: str) -> TokenizedText:
        tokens = []
        offsets = []
        for match in _WORD_RE.finditer(text):
            tokens.append(match.group(0))
            offsets.append((match.start(), match.end()))
        return TokenizedText(tokens=tuple(tokens), offsets=tuple(offsets))

    def encode(self, text: str) -> tuple[TokenizedText, np.ndarray]:
        tokenized = self.tokenize(text)
        if not tokenized.tokens:
            return tokenized, np.zeros((0, self.d_model))
        rows = [
            _rng_for(f"tok{self.seed}", token).normal(size=self.d_model) for token in tokenized.tokens
        ]
        return tokenized, np.stack(rows)


class SeededSpanPredictor:
    """Passage-only span scorer with hash-seeded start/end distributions."""

    def __init__(self, seed: int = 0, d_model: int = 16):
        self.seed = seed
        self._encoder = WhitespaceTokenEncoder(d_model=d_model, seed=seed)

    def predict_spans(self, passage: Passage) -> SpanDistribution:
        tokenized = self._encoder.tokenize(passage.text)
        n = len(tokenized.tokens)
        if n == 0:
            raise ValueError(f"passage {passage.id!r} has no tokens")
        rng = _rng_for(f"span{self.seed}", passage.id)
        start = rng.random(n)
        end = rng.random(n)
        return SpanDistribution(
            start_probs=start / start.sum(),
            end_probs=end / end.sum(),
            token_offsets=tokenized.offsets,
        )


class TemplateQuestionGenerator:
    """Sequence generator that fills fixed question templates.

    Parses (answer, passage) from the serialized prompt; emits up to
    beam_size scored variants. Scores and sampled template order derive
    from (seed, prompt, strategy), so beam strategies are reproducible and
    nucleus sampling is reproducible per config seed.
    """

    TEMPLATES = (
        'What does the passage say about "{answer}"?',
        'Which part of the passage mentions "{answer}"?',
        'What is associated with "{answer}" here?',
        'According to the passage, what relates to "{answer}"?',
        'Where does "{answer}" appear in the described events?',
        'What detail involves "{answer}"?',
        'Why is "{answer}" mentioned?',
        'How is "{answer}" described?',
        'Who or what is connected to "{answer}"?',
        'When does "{answer}" come up?',
    )

    def __init__(self, seed: int = 0):
        self.seed = seed

    def generate(self, prompt: str, config: DecodeConfig) -> list[tuple[str, float]]:
        try:
            answer, _passage = parse_prompt(prompt)
        except ValueError:
            # end-to-end prompts carry the passage only
            answer = ""
        n_outputs = config.beam_size if config.strategy in ("beam", "diverse_beam") else config.nbest
        rng = _rng_for(f"gen{self.seed}", prompt, config.strategy, str(config.seed))
        order = rng.permutation(len(self.TEMPLATES))[:n_outputs]
        outputs = []
        for rank, template_idx in enumerate(order.tolist()):
            text = self.TEMPLATES[template_idx].format(answer=answer)
            words = max(1, len(text.split()))
            # per-word log-prob worsens with rank, perturbed deterministically
            log_prob = (-0.08 * (rank + 1) - 0.3 * rng.random()) * words
            outputs.append((text, float(log_prob)))
        return outputs


class EndToEndGenerator:
    """Joint answer+question generator for the end-to-end mode."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._qgen = TemplateQuestionGenerator(seed=seed)
        self._encoder = WhitespaceTokenEncoder(seed=seed)

    def generate(self, prompt: str, config: DecodeConfig) -> list[tuple[str, float]]:
        passage_text = prompt
        if prompt.startswith("<s> ") and prompt.endswith(f" {PROMPT_SEP}"):
            passage_text = prompt[4 : -(len(PROMPT_SEP) + 1)]
        tokenized = self._encoder.tokenize(passage_text)
        if not tokenized.tokens:
            return []
        rng = _rng_for(f"e2e{self.seed}", prompt, str(config.seed))
        n_outputs = config.beam_size if config.strategy in ("beam", "diverse_beam") else config.nbest
        outputs = []
        for rank in range(n_outputs):
            idx = int(rng.integers(0, len(tokenized.tokens)))
            answer = tokenized.tokens[idx]
            question = f'What is said about "{answer}"?'
            text = f"{answer} <sep> {question}"
            words = max(1, len(text.split()))
            outputs.append((text, float((-0.1 * (rank + 1) - 0.2 * rng.random()) * words)))
        return outputs


class TemplateAwareQAModel:
    """Ensemble member matched to ``TemplateQuestionGenerator`` output.

    Extracts the quoted phrase from template questions and echoes it with
    a seeded error rate: some members sometimes answer with a different
    passage word instead, giving realistic ensemble disagreement.
    """

    _QUOTED_RE = re.compile(r'"([^"]+)"')

    def __init__(self, member_seed: int, error_rate: float = 0.15):
        self.member_seed = member_seed
        self.error_rate = error_rate
        self._encoder = WhitespaceTokenEncoder(seed=member_seed)

    def answer(self, passage_text: str, question: str) -> tuple[str, float]:
        rng = _rng_for(f"qa{self.member_seed}", passage_text[:64], question)
        match = self._QUOTED_RE.search(question)
        if match and rng.random() >= self.error_rate:
            return match.group(1), float(0.6 + 0.4 * rng.random())
        tokenized = self._encoder.tokenize(passage_text)
        if not tokenized.tokens:
            return "", 0.0
        idx = int(rng.integers(0, len(tokenized.tokens)))
        return tokenized.tokens[idx], float(0.2 + 0.5 * rng.random())


class FailingQAModel:
    """Always raises; used to exercise failure handling."""

    def __init__(self, message: str = "backend unavailable"):
        self.message = message

    def answer(self, passage_text: str, question: str) -> tuple[str, float]:
        raise RuntimeError(self.message)


def build_stub_ensemble(n_members: int = 6, seed: int = 0, error_rate: float = 0.15) -> list[TemplateAwareQAModel]:
    return [TemplateAwareQAModel(member_seed=seed * 1000 + i, error_rate=error_rate) for i in range(n_members)]
