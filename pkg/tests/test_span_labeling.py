from __future__ import annotations

import math

import numpy as np
import pytest

from oracles import cell_admissible, sigmoid
from qaforge.answers import (
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
from qaforge.backends import WhitespaceTokenEncoder
from qaforge.corpus import Passage


class TestMask:
    def test_small_example(self):
        mask = span_pair_mask(3, 2, (0, 3))
        expected = {(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)}
        admissible = {(i, j) for i in range(3) for j in range(3) if mask[i, j]}
        assert admissible == expected

    def test_end_before_start_inadmissible(self):
        mask = span_pair_mask(4, 4, (0, 4))
        assert not any(mask[i, j] for i in range(4) for j in range(i))

    def test_out_of_passage_rows_and_columns(self):
        mask = span_pair_mask(3, 3, (1, 3))
        assert not mask[0].any() and not mask[:, 0].any()

    def test_invalid_range_rejected(self):
        with pytest.raises(ValueError):
            span_pair_mask(3, 2, (2, 1))
        with pytest.raises(ValueError):
            span_pair_mask(3, 2, (0, 4))

    def test_invalid_max_len_rejected(self):
        with pytest.raises(ValueError):
            span_pair_mask(3, 0, (0, 3))

    def test_exhaustive_against_conditions(self):
        for length in range(1, 7):
            for max_len in range(1, 7):
                for lo in range(0, length + 1):
                    for hi in range(lo, length + 1):
                        mask = span_pair_mask(length, max_len, (lo, hi))
                        for i in range(length):
                            for j in range(length):
                                assert mask[i, j] == cell_admissible(i, j, max_len, lo, hi)


class TestForward:
    def test_zero_projections_give_half(self):
        proj = SpanPairProjections(q=np.zeros((3, 2)), k=np.zeros((3, 2)), d_k=2)
        mask = span_pair_mask(3, 3, (0, 3))
        scores = span_pair_probabilities(proj, mask)
        assert np.allclose(scores.probs[mask], 0.5)

    def test_hand_computed_single_cell(self):
        proj = SpanPairProjections(q=np.array([[2.0]]), k=np.array([[2.0]]), d_k=1)
        scores = span_pair_probabilities(proj, np.array([[True]]))
        assert scores.probs[0, 0] == pytest.approx(0.9820137900379085, abs=1e-12)

    def test_scaling_by_sqrt_dk(self):
        # same raw dot product of 4, but d_k=4 halves the score
        q = np.array([[1.0, 1.0, 1.0, 1.0]])
        k = np.array([[1.0, 1.0, 1.0, 1.0]])
        scores = span_pair_probabilities(SpanPairProjections(q=q, k=k, d_k=4), np.array([[True]]))
        assert scores.probs[0, 0] == pytest.approx(0.8807970779778823, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            SpanPairProjections(q=np.zeros((3, 2)), k=np.zeros((4, 2)), d_k=2)
        proj = SpanPairProjections(q=np.zeros((3, 2)), k=np.zeros((3, 2)), d_k=2)
        with pytest.raises(ValueError):
            span_pair_probabilities(proj, np.ones((4, 4), dtype=bool))

    def test_matches_per_cell_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            length = int(rng.integers(1, 9))
            d_k = int(rng.integers(1, 5))
            q = rng.normal(size=(length, d_k))
            k = rng.normal(size=(length, d_k))
            mask = span_pair_mask(length, int(rng.integers(1, 8)), (0, length))
            scores = span_pair_probabilities(SpanPairProjections(q=q, k=k, d_k=d_k), mask)
            for i in range(length):
                for j in range(length):
                    expected = sigmoid(float(np.dot(q[i], k[j])) / math.sqrt(d_k))
                    assert abs(scores.probs[i, j] - expected) < 1e-9


class TestLoss:
    def test_single_cell_weighted(self):
        scores = CandidateScoreMatrix(probs=np.array([[0.5]]), mask=np.array([[True]]))
        gold = np.array([[True]])
        for w in (1.0, 2.5, 7.0):
            assert span_pair_bce_loss(scores, gold, w) == pytest.approx(w * math.log(2))

    def test_all_negative_half_probs(self):
        mask = span_pair_mask(4, 4, (0, 4))
        scores = CandidateScoreMatrix(probs=np.full((4, 4), 0.5), mask=mask)
        gold = np.zeros((4, 4), dtype=bool)
        assert span_pair_bce_loss(scores, gold, 1.0) == pytest.approx(math.log(2))

    def test_perfect_prediction_loss_vanishes(self):
        mask = span_pair_mask(3, 3, (0, 3))
        gold = np.zeros((3, 3), dtype=bool)
        gold[0, 1] = True
        losses = []
        for eps in (1e-2, 1e-4, 1e-6):
            probs = np.where(gold, 1.0 - eps, eps)
            losses.append(span_pair_bce_loss(CandidateScoreMatrix(probs=probs, mask=mask), gold, 1.0))
        assert losses[0] > losses[1] > losses[2]
        assert losses[2] < 1e-5

    def test_gold_on_masked_cell_rejected(self):
        mask = span_pair_mask(2, 2, (0, 2))
        gold = np.zeros((2, 2), dtype=bool)
        gold[1, 0] = True  # end before start is masked
        scores = CandidateScoreMatrix(probs=np.full((2, 2), 0.5), mask=mask)
        with pytest.raises(ValueError):
            span_pair_bce_loss(scores, gold, 1.0)

    def test_masked_cells_contribute_zero(self):
        mask = span_pair_mask(3, 1, (0, 3))
        gold = np.zeros((3, 3), dtype=bool)
        base = np.full((3, 3), 0.5)
        spiked = base.copy()
        spiked[~mask] = 0.999  # extreme values on masked cells must not matter
        a = span_pair_bce_loss(CandidateScoreMatrix(probs=base, mask=mask), gold, 1.0)
        b = span_pair_bce_loss(CandidateScoreMatrix(probs=spiked, mask=mask), gold, 1.0)
        assert a == b


class TestGradients:
    def _random_instance(self, rng):
        length = int(rng.integers(2, 7))
        d_k = int(rng.integers(1, 4))
        q = rng.normal(size=(length, d_k))
        k = rng.normal(size=(length, d_k))
        mask = span_pair_mask(length, int(rng.integers(1, 6)), (0, length))
        gold = np.zeros((length, length), dtype=bool)
        admissible = np.argwhere(mask)
        if len(admissible):
            for row in admissible[rng.integers(0, len(admissible), size=2)]:
                gold[tuple(row)] = True
        pos_weight = float(rng.uniform(0.5, 4.0))
        return q, k, d_k, mask, gold, pos_weight

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(7)
        h = 1e-6
        for _ in range(30):
            q, k, d_k, mask, gold, w = self._random_instance(rng)
            _, dq, dk = span_pair_loss_and_grads(q, k, d_k, mask, gold, w)

            def loss_at(qv, kv):
                scores = span_pair_probabilities(SpanPairProjections(q=qv, k=kv, d_k=d_k), mask)
                return span_pair_bce_loss(scores, gold, w)

            fd_q = np.zeros_like(q)
            for idx in np.ndindex(q.shape):
                qp, qm = q.copy(), q.copy()
                qp[idx] += h
                qm[idx] -= h
                fd_q[idx] = (loss_at(qp, k) - loss_at(qm, k)) / (2 * h)
            fd_k = np.zeros_like(k)
            for idx in np.ndindex(k.shape):
                kp, km = k.copy(), k.copy()
                kp[idx] += h
                km[idx] -= h
                fd_k[idx] = (loss_at(q, kp) - loss_at(q, km)) / (2 * h)

            for analytic, numeric in ((dq, fd_q), (dk, fd_k)):
                denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
                assert np.linalg.norm(analytic - numeric) / denom < 1e-4


class TestDecode:
    def _passage(self):
        return Passage(id="p", title="", text="alpha bravo charlie")

    def _offsets(self):
        return ((0, 5), (6, 11), (12, 19))

    def _scores(self, probs):
        mask = span_pair_mask(3, 3, (0, 3))
        return CandidateScoreMatrix(probs=np.asarray(probs), mask=mask)

    def test_all_below_threshold_empty(self):
        scores = self._scores(np.full((3, 3), 0.1))
        assert decode_span_candidates(scores, self._passage(), self._offsets(), 0.5) == []

    def test_single_hit(self):
        probs = np.full((3, 3), 0.1)
        probs[1, 2] = 0.9
        cands = decode_span_candidates(self._scores(probs), self._passage(), self._offsets(), 0.5)
        assert [(c.span.char_start, c.span.char_end) for c in cands] == [(6, 19)]
        assert cands[0].span.text == "bravo charlie"
        assert cands[0].confidence == pytest.approx(0.9)

    def test_sorted_by_descending_probability(self):
        probs = np.full((3, 3), 0.0)
        probs[0, 1] = 0.9
        probs[1, 1] = 0.6
        probs[2, 2] = 0.4
        cands = decode_span_candidates(self._scores(probs), self._passage(), self._offsets(), 0.5)
        assert [(c.span.char_start, c.span.char_end) for c in cands] == [(0, 11), (6, 11)]

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(3)
        probs = rng.random((3, 3))
        scores = self._scores(probs)
        previous = None
        for threshold in (0.1, 0.3, 0.5, 0.7, 0.9):
            texts = {(c.span.char_start, c.span.char_end) for c in
                     decode_span_candidates(scores, self._passage(), self._offsets(), threshold)}
            if previous is not None:
                assert texts <= previous
            previous = texts

    def test_masked_cells_never_decoded_fuzz(self):
        rng = np.random.default_rng(9)
        passage = Passage(id="p", title="", text=" ".join(f"w{i}" for i in range(8)))
        enc = WhitespaceTokenEncoder()
        offsets = enc.tokenize(passage.text).offsets
        for _ in range(100):
            length = int(rng.integers(1, 9))
            max_len = int(rng.integers(1, 9))
            lo = int(rng.integers(0, length + 1))
            hi = int(rng.integers(lo, length + 1))
            mask = span_pair_mask(length, max_len, (lo, hi))
            probs = rng.random((length, length))
            scores = CandidateScoreMatrix(probs=probs, mask=mask)
            threshold = float(rng.uniform(0.05, 0.95))
            for cand in decode_span_candidates(scores, passage, offsets[:length], threshold):
                i = next(idx for idx, off in enumerate(offsets[:length]) if off[0] == cand.span.char_start)
                j = next(idx for idx, off in enumerate(offsets[:length]) if off[1] == cand.span.char_end)
                assert mask[i, j]

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            decode_span_candidates(self._scores(np.full((3, 3), 0.5)), self._passage(), self._offsets(), 0.0)

    def test_unmappable_tokens_skipped(self):
        probs = np.full((3, 3), 0.0)
        probs[0, 1] = 0.9
        probs[2, 2] = 0.8
        offsets = ((0, 5), None, (12, 19))
        cands = decode_span_candidates(self._scores(probs), self._passage(), offsets, 0.5)
        assert [(c.span.char_start, c.span.char_end) for c in cands] == [(12, 19)]


class TestMultiHead:
    def test_elementwise_max(self):
        mask = span_pair_mask(2, 2, (0, 2))
        a = CandidateScoreMatrix(probs=np.array([[0.2, 0.9], [0.0, 0.1]]), mask=mask)
        b = CandidateScoreMatrix(probs=np.array([[0.4, 0.3], [0.0, 0.6]]), mask=mask)
        combined = combine_head_probs([a, b])
        assert combined.probs[0, 0] == 0.4
        assert combined.probs[0, 1] == 0.9
        assert combined.probs[1, 1] == 0.6


class TestDefaultPosWeight:
    def test_balance_formula(self):
        mask = span_pair_mask(4, 4, (0, 4))  # 10 admissible cells
        gold = np.zeros((4, 4), dtype=bool)
        gold[0, 0] = gold[1, 2] = True
        assert default_pos_weight(mask, gold) == pytest.approx((10 - 2) / 2)

    def test_floor_at_one(self):
        mask = span_pair_mask(2, 2, (0, 2))  # 3 admissible
        gold = np.zeros((2, 2), dtype=bool)
        gold[0, 0] = gold[0, 1] = True
        assert default_pos_weight(mask, gold) == 1.0

    def test_no_positives(self):
        mask = span_pair_mask(2, 2, (0, 2))
        assert default_pos_weight(mask, np.zeros((2, 2), dtype=bool)) == 1.0


class TestLabelerEstimator:
    def _toy_task(self, n_passages=12, seed=0):
        """Answers are spans starting at 'key' tokens; learnable from token features."""
        rng = np.random.default_rng(seed)
        encoder = WhitespaceTokenEncoder(d_model=12, seed=1)
        xs, ys, passages = [], [], []
        for p in range(n_passages):
            words = []
            gold_positions = []
            for t in range(8):
                if rng.random() < 0.3:
                    words.append("key")
                    gold_positions.append(t)
                else:
                    words.append(f"filler{int(rng.integers(4))}")
            text = " ".join(words)
            passage = Passage(id=f"toy{p}", title="", text=text)
            tokenized, x = encoder.encode(text)
            gold = np.zeros((len(words), len(words)), dtype=bool)
            for t in gold_positions:
                gold[t, t] = True
            xs.append(x)
            ys.append(gold)
            passages.append((passage, tokenized))
        return xs, ys, passages

    def test_fit_reduces_loss_and_decodes_keys(self):
        xs, ys, passages = self._toy_task()
        model = SelfAttentionSpanLabeler(d_k=4, max_answer_len=2, seed=0, max_iter=200)
        model.fit(xs, ys)
        assert model.final_loss_ < 0.25

        passage, tokenized = passages[0]
        scores = model.predict_proba(xs[0])
        cands = decode_span_candidates(scores, passage, tokenized.offsets, threshold=0.5)
        decoded = {c.span.text for c in cands}
        assert "key" in decoded or not any(w == "key" for w in passage.text.split())

    def test_unfitted_predict_raises(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            SelfAttentionSpanLabeler().predict_proba(np.zeros((3, 4)))

    def test_get_params_roundtrip(self):
        model = SelfAttentionSpanLabeler(d_k=3, n_heads=2, threshold=0.4)
        params = model.get_params()
        assert params["d_k"] == 3 and params["n_heads"] == 2 and params["threshold"] == 0.4
        clone = SelfAttentionSpanLabeler(**params)
        assert clone.get_params() == params

    def test_multi_head_fit_runs(self):
        xs, ys, _ = self._toy_task(n_passages=6, seed=3)
        model = SelfAttentionSpanLabeler(d_k=3, n_heads=2, max_answer_len=2, seed=1, max_iter=60)
        model.fit(xs, ys)
        probs = model.predict_proba(xs[0])
        assert probs.probs.shape == (xs[0].shape[0],) * 2

    def test_gold_on_masked_cell_rejected(self):
        xs, ys, _ = self._toy_task(n_passages=2)
        bad = ys[0].copy()
        bad[:] = False
        bad[1, 0] = True
        with pytest.raises(ValueError):
            SelfAttentionSpanLabeler(max_answer_len=2).fit([xs[0]], [bad])
