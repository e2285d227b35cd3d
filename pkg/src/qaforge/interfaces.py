"""Backend contracts consumed by the pipeline.

Everything model-shaped is pluggable: linguistic annotation, span scoring,
question generation, reading comprehension, tokenization, and training all
happen behind the protocols below. The toolkit never touches model
internals; deterministic reference implementations live in ``backends``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol, Sequence, runtime_checkable

import numpy as np

if TYPE_CHECKING:
    from .corpus import Passage
    from .qgen import DecodeConfig


@dataclass(frozen=True)
class LinguisticAnnotation:
    """Category-labelled character spans for one passage text.

    Each entry is a (char_start, char_end) pair addressing the raw text.
    """

    noun_chunks: tuple[tuple[int, int], ...] = ()
    named_entities: tuple[tuple[int, int], ...] = ()
    adjectives: tuple[tuple[int, int], ...] = ()
    numbers: tuple[tuple[int, int], ...] = ()
    proper_nouns: tuple[tuple[int, int], ...] = ()
    clauses: tuple[tuple[int, int], ...] = ()


@runtime_checkable
class LinguisticAnnotator(Protocol):
    def annotate(self, passage: "Passage") -> LinguisticAnnotation: ...


@dataclass(frozen=True)
class TokenizedText:
    """Tokens plus their character offsets; offsets[i] is (start, end) or None
    when the token cannot be mapped back to the text losslessly."""

    tokens: tuple[str, ...]
    offsets: tuple[tuple[int, int] | None, ...]

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.offsets):
            raise ValueError("tokens and offsets must have equal length")


@runtime_checkable
class TokenEncoder(Protocol):
    """Tokenize text and produce per-token feature vectors."""

    def tokenize(self, text: str) -> TokenizedText: ...

    def encode(self, text: str) -> tuple[TokenizedText, np.ndarray]:
        """Return tokens and an (n_tokens, d_model) representation matrix."""
        ...


@dataclass(frozen=True)
class SpanDistribution:
    """Independent start/end probability distributions over tokens."""

    start_probs: np.ndarray
    end_probs: np.ndarray
    token_offsets: tuple[tuple[int, int] | None, ...]

    def __post_init__(self) -> None:
        if self.start_probs.shape != self.end_probs.shape:
            raise ValueError("start and end distributions must share shape")
        if len(self.start_probs) != len(self.token_offsets):
            raise ValueError("distributions and offsets must share length")


@runtime_checkable
class SpanPredictor(Protocol):
    """Passage-only span scorer used for answer candidate sampling."""

    def predict_spans(self, passage: "Passage") -> SpanDistribution: ...


@runtime_checkable
class QAModel(Protocol):
    """Reading comprehension model answering a question over a passage."""

    def answer(self, passage_text: str, question: str) -> tuple[str, float]:
        """Return (answer text, confidence in [0, 1])."""
        ...


@runtime_checkable
class SequenceGenerator(Protocol):
    """Autoregressive generator backend.

    Must honor the decode strategy, sizes, top_p, and seed from the config,
    and be deterministic for beam strategies given a fixed seed. Returns
    (text, sequence log-probability) pairs.
    """

    def generate(self, prompt: str, config: "DecodeConfig") -> Sequence[tuple[str, float]]: ...


@runtime_checkable
class InverseHessianBackend(Protocol):
    """Iterative inverse-Hessian-vector product, e.g. a LiSSA-style estimator."""

    def inverse_hvp(self, vector: np.ndarray) -> np.ndarray: ...


@runtime_checkable
class TrainerBackend(Protocol):
    """Opaque trainer: schedules and data in, checkpoint refs and scores out."""

    def train(self, schedule, seed: int) -> Sequence[str]:
        """Run the schedule; return checkpoint identifiers."""
        ...

    def evaluate(self, checkpoint_id: str, dataset_ref: str) -> dict[str, float]:
        """Return {"em": ..., "f1": ...} for one checkpoint on one dataset."""
        ...
