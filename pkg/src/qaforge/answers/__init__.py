"""Answer candidate datasets, selection methods, and evaluation."""

from .align import (
    AlignmentResult,
    RejectedAnswer,
    align_answer_sets,
    answers_from_squad_json,
    overlap_stats,
    read_aligned_jsonl,
    write_aligned_jsonl,
)
from .evaluate import evaluate_candidates
from .linguistic import LINGUISTIC_MODES, AnnotatorError, StaticAnnotator, select_linguistic_candidates
from .span_extraction import select_span_extraction_candidates
from .span_labeling import (
    CandidateScoreMatrix,
    SelfAttentionSpanLabeler,
    SpanPairProjections,
    combine_head_probs,
    decode_span_candidates,
    default_pos_weight,
    span_pair_bce_loss,
    span_pair_loss_and_grads,
    span_pair_mask,
    span_pair_probabilities,
)
from .spans import (
    SELECTION_METHODS,
    AlignedAnswerSet,
    AnswerCandidate,
    AnswerSpan,
    read_candidates_jsonl,
    span_from_passage,
    write_candidates_jsonl,
)

__all__ = [
    "AlignmentResult",
    "RejectedAnswer",
    "align_answer_sets",
    "answers_from_squad_json",
    "overlap_stats",
    "read_aligned_jsonl",
    "write_aligned_jsonl",
    "evaluate_candidates",
    "LINGUISTIC_MODES",
    "AnnotatorError",
    "StaticAnnotator",
    "select_linguistic_candidates",
    "select_span_extraction_candidates",
    "CandidateScoreMatrix",
    "SelfAttentionSpanLabeler",
    "SpanPairProjections",
    "combine_head_probs",
    "decode_span_candidates",
    "default_pos_weight",
    "span_pair_bce_loss",
    "span_pair_loss_and_grads",
    "span_pair_mask",
    "span_pair_probabilities",
    "SELECTION_METHODS",
    "AlignedAnswerSet",
    "AnswerCandidate",
    "AnswerSpan",
    "read_candidates_jsonl",
    "span_from_passage",
    "write_candidates_jsonl",
]
