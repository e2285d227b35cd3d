"""Self-attention span labelling head.

Candidate (start, end) token pairs are scored jointly: projected start
queries Q and end keys K produce a scaled dot-product score matrix, and a
sigmoid turns each admissible cell into an independent probability that
tokens i..j form an answer span:

    probs = sigmoid(Q @ K.T / sqrt(d_k))

Training minimizes binary cross-entropy over admissible cells, with
positive cells overweighted to counteract the heavy class imbalance
(almost all cells are non-answers).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ..corpus import Passage
from .spans import AnswerCandidate, span_from_passage

_CLIP = 1e-12


@dataclass(frozen=True)
class SpanPairProjections:
    """Projected start-query and end-key representations, both (L, d_k)."""

    q: np.ndarray
    k: np.ndarray
    d_k: int

    def __post_init__(self) -> None:
        if self.q.shape != self.k.shape:
            raise ValueError(f"Q and K must share shape, got {self.q.shape} vs {self.k.shape}")
        if self.q.ndim != 2:
            raise ValueError("Q and K must be 2-dimensional (L, d_k)")
        if self.d_k < 1:
            raise ValueError(f"d_k must be >= 1, got {self.d_k}")
        if self.q.shape[1] != self.d_k:
            raise ValueError(f"projection width {self.q.shape[1]} != d_k {self.d_k}")


@dataclass(frozen=True)
class CandidateScoreMatrix:
    """(L, L) span probabilities; cell (i, j) scores tokens i..j.

    Masked cells are never read downstream; only unmasked cells carry
    meaningful probabilities.
    """

    probs: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        if self.probs.shape != self.mask.shape:
            raise ValueError("probs and mask must share shape")
        if self.probs.ndim != 2 or self.probs.shape[0] != self.probs.shape[1]:
            raise ValueError("score matrix must be square")


def span_pair_mask(length: int, max_answer_len: int, passage_token_range: tuple[int, int]) -> np.ndarray:
    """Admissibility mask: cell (i, j) is admissible iff i <= j, the span is
    at most ``max_answer_len`` tokens, and both ends lie inside the passage
    token range [lo, hi)."""
    if max_answer_len < 1:
        raise ValueError(f"max_answer_len must be >= 1, got {max_answer_len}")
    lo, hi = passage_token_range
    if not 0 <= lo <= hi <= length:
        raise ValueError(f"passage token range [{lo}, {hi}) invalid for length {length}")
    idx = np.arange(length)
    ordered = idx[:, None] <= idx[None, :]
    short_enough = (idx[None, :] - idx[:, None] + 1) <= max_answer_len
    in_passage = (idx >= lo) & (idx < hi)
    return ordered & short_enough & in_passage[:, None] & in_passage[None, :]


def span_pair_probabilities(proj: SpanPairProjections, mask: np.ndarray) -> CandidateScoreMatrix:
    """Sigmoid of the scaled start/end dot-product scores."""
    length = proj.q.shape[0]
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (length, length):
        raise ValueError(f"mask shape {mask.shape} does not match L={length}")
    scores = proj.q @ proj.k.T / np.sqrt(proj.d_k)
    return CandidateScoreMatrix(probs=expit(scores), mask=mask)


def combine_head_probs(matrices: Sequence[CandidateScoreMatrix]) -> CandidateScoreMatrix:
    """Combine per-head probabilities by elementwise max (shared mask)."""
    if not matrices:
        raise ValueError("need at least one head")
    mask = matrices[0].mask
    for m in matrices[1:]:
        if not np.array_equal(m.mask, mask):
            raise ValueError("heads must share an admissibility mask")
    return CandidateScoreMatrix(probs=np.maximum.reduce([m.probs for m in matrices]), mask=mask)


def span_pair_bce_loss(scores: CandidateScoreMatrix, gold: np.ndarray, pos_weight: float) -> float:
    """Mean weighted binary cross-entropy over unmasked cells.

    Positive (answer) cells are weighted by ``pos_weight``; masked cells
    contribute exactly zero. Gold may not mark a masked cell positive.
    """
    if pos_weight <= 0:
        raise ValueError(f"pos_weight must be > 0, got {pos_weight}")
    gold = np.asarray(gold, dtype=bool)
    mask = scores.mask
    if gold.shape != mask.shape:
        raise ValueError("gold labels must match the score matrix shape")
    if (gold & ~mask).any():
        raise ValueError("gold marks a masked cell positive")
    n = int(mask.sum())
    if n == 0:
        return 0.0
    p = np.clip(scores.probs, _CLIP, 1.0 - _CLIP)
    cell = -(pos_weight * gold * np.log(p) + (~gold) * np.log1p(-p))
    return float(cell[mask].sum() / n)


def span_pair_loss_and_grads(
    q: np.ndarray,
    k: np.ndarray,
    d_k: int,
    mask: np.ndarray,
    gold: np.ndarray,
    pos_weight: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus analytic gradients w.r.t. the projected Q and K matrices.

    For one unmasked cell with probability p and label y, d(loss)/d(score)
    is p(1-y) - pos_weight*y*(1-p); gradients chain through the scaled
    dot product.
    """
    proj = SpanPairProjections(q=q, k=k, d_k=d_k)
    scores = span_pair_probabilities(proj, mask)
    loss = span_pair_bce_loss(scores, gold, pos_weight)
    gold = np.asarray(gold, dtype=float)
    maskf = np.asarray(mask, dtype=float)
    n = maskf.sum()
    if n == 0:
        return loss, np.zeros_like(q), np.zeros_like(k)
    p = scores.probs
    dscore = maskf * (p * (1.0 - gold) - pos_weight * gold * (1.0 - p)) / n
    scale = 1.0 / np.sqrt(d_k)
    dq = dscore @ k * scale
    dk = dscore.T @ q * scale
    return loss, dq, dk


def decode_span_candidates(
    scores: CandidateScoreMatrix,
    passage: Passage,
    token_offsets: Sequence[tuple[int, int] | None],
    threshold: float,
    method: str = "sal",
) -> list[AnswerCandidate]:
    """All unmasked cells with probability >= threshold, as char spans.

    Output is sorted by descending probability (ties by position); the
    cell probability becomes the candidate confidence. Spans whose tokens
    have no lossless character mapping are skipped.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    length = scores.probs.shape[0]
    if len(token_offsets) < length:
        raise ValueError("token_offsets shorter than the score matrix")
    hits = []
    ii, jj = np.nonzero(scores.mask & (scores.probs >= threshold))
    for i, j in zip(ii.tolist(), jj.tolist()):
        hits.append((float(scores.probs[i, j]), i, j))
    hits.sort(key=lambda t: (-t[0], t[1], t[2]))
    out: list[AnswerCandidate] = []
    for prob, i, j in hits:
        start_off = token_offsets[i]
        end_off = token_offsets[j]
        if start_off is None or end_off is None:
            continue
        span = span_from_passage(passage, start_off[0], end_off[1])
        out.append(AnswerCandidate(span=span, confidence=prob, method=method))
    return out


def default_pos_weight(mask: np.ndarray, gold: np.ndarray) -> float:
    """Imbalance-correcting weight: negatives per positive, floored at 1."""
    gold = np.asarray(gold, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    n_pos = int((gold & mask).sum())
    n_cells = int(mask.sum())
    if n_pos == 0:
        return 1.0
    return max(1.0, (n_cells - n_pos) / n_pos)


class SelfAttentionSpanLabeler(BaseEstimator):
    """Trainable span-pair labelling head over token representations.

    Each head projects token representations X into start queries
    ``X @ W_q + b_q`` and end keys ``X @ W_k + b_k`` and scores every
    admissible (start, end) pair. Multiple heads are combined by
    elementwise max over their probability matrices. Fitting runs L-BFGS
    on the mean weighted BCE across training passages.
    """

    def __init__(
        self,
        d_k: int = 8,
        n_heads: int = 1,
        max_answer_len: int = 30,
        pos_weight: float | str = "auto",
        threshold: float = 0.5,
        max_iter: int = 150,
        seed: int = 0,
    ):
        self.d_k = d_k
        self.n_heads = n_heads
        self.max_answer_len = max_answer_len
        self.pos_weight = pos_weight
        self.threshold = threshold
        self.max_iter = max_iter
        self.seed = seed

    # -- parameter (un)flattening -------------------------------------------------
    def _shapes(self, d_model: int):
        return [(d_model, self.d_k), (self.d_k,), (d_model, self.d_k), (self.d_k,)] * self.n_heads

    def _unflatten(self, theta: np.ndarray, d_model: int):
        params = []
        pos = 0
        for shape in self._shapes(d_model):
            size = int(np.prod(shape))
            params.append(theta[pos : pos + size].reshape(shape))
            pos += size
        heads = []
        for h in range(self.n_heads):
            wq, bq, wk, bk = params[4 * h : 4 * h + 4]
            heads.append((wq, bq, wk, bk))
        return heads

    def _project(self, x: np.ndarray, heads) -> list[SpanPairProjections]:
        return [
            SpanPairProjections(q=x @ wq + bq, k=x @ wk + bk, d_k=self.d_k)
            for wq, bq, wk, bk in heads
        ]

    # -- training ------------------------------------------------------------------
    def fit(
        self,
        X: Sequence[np.ndarray],
        y: Sequence[np.ndarray],
        passage_ranges: Sequence[tuple[int, int]] | None = None,
    ):
        """Fit on per-passage token representations and gold span matrices.

        X[i] is (L_i, d_model); y[i] is a boolean (L_i, L_i) matrix marking
        answer spans. ``passage_ranges`` defaults to the full token range.
        """
        if len(X) != len(y):
            raise ValueError("X and y must have equal length")
        if not X:
            raise ValueError("fit requires at least one example")
        d_model = X[0].shape[1]
        masks = []
        golds = []
        weights = []
        for idx, (x, gold) in enumerate(zip(X, y)):
            length = x.shape[0]
            rng_span = passage_ranges[idx] if passage_ranges is not None else (0, length)
            mask = span_pair_mask(length, self.max_answer_len, rng_span)
            gold = np.asarray(gold, dtype=bool)
            if (gold & ~mask).any():
                raise ValueError(f"example {idx}: gold marks a masked cell positive")
            masks.append(mask)
            golds.append(gold)
            if self.pos_weight == "auto":
                weights.append(default_pos_weight(mask, gold))
            else:
                weights.append(float(self.pos_weight))

        rng = np.random.default_rng(self.seed)
        theta0 = np.concatenate(
            [rng.normal(scale=0.1, size=int(np.prod(s))) for s in self._shapes(d_model)]
        )

        def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
            heads = self._unflatten(theta, d_model)
            total = 0.0
            grad = np.zeros_like(theta)
            for x, mask, gold, w in zip(X, masks, golds, weights):
                projections = self._project(x, heads)
                prob_stack = np.stack(
                    [span_pair_probabilities(p, mask).probs for p in projections]
                )
                combined = prob_stack.max(axis=0)
                winner = prob_stack.argmax(axis=0)
                loss = span_pair_bce_loss(
                    CandidateScoreMatrix(probs=combined, mask=mask), gold, w
                )
                total += loss
                goldf = gold.astype(float)
                n = mask.sum()
                dscore_all = (
                    mask * (combined * (1.0 - goldf) - w * goldf * (1.0 - combined)) / n
                ) / np.sqrt(self.d_k)
                pos = 0
                for h, (wq, bq, wk, bk) in enumerate(heads):
                    dscore = np.where(winner == h, dscore_all, 0.0)
                    qh = x @ wq + bq
                    kh = x @ wk + bk
                    dq = dscore @ kh
                    dkm = dscore.T @ qh
                    dwq = x.T @ dq
                    dbq = dq.sum(axis=0)
                    dwk = x.T @ dkm
                    dbk = dkm.sum(axis=0)
                    for g in (dwq, dbq, dwk, dbk):
                        grad[pos : pos + g.size] += g.ravel()
                        pos += g.size
            return total / len(X), grad / len(X)

        result = minimize(
            objective, theta0, jac=True, method="L-BFGS-B", options={"maxiter": self.max_iter}
        )
        self.theta_ = result.x
        self.d_model_ = d_model
        self.final_loss_ = float(result.fun)
        return self

    # -- inference -----------------------------------------------------------------
    def predict_proba(
        self, x: np.ndarray, passage_range: tuple[int, int] | None = None
    ) -> CandidateScoreMatrix:
        if not hasattr(self, "theta_"):
            raise NotFittedError("SelfAttentionSpanLabeler must be fitted first")
        length = x.shape[0]
        rng_span = passage_range if passage_range is not None else (0, length)
        mask = span_pair_mask(length, self.max_answer_len, rng_span)
        heads = self._unflatten(self.theta_, self.d_model_)
        matrices = [span_pair_probabilities(p, mask) for p in self._project(x, heads)]
        return combine_head_probs(matrices)
