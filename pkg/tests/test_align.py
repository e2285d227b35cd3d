from __future__ import annotations

import pytest

from qaforge.answers import (
    AlignedAnswerSet,
    AnswerSpan,
    align_answer_sets,
    overlap_stats,
    read_aligned_jsonl,
    write_aligned_jsonl,
)
from qaforge.corpus import Passage


def _span(pid, start, end, text, source="squad"):
    return AnswerSpan(passage_id=pid, char_start=start, char_end=end, text=text, source_dataset=source)


@pytest.fixture
def passages():
    return {
        "p1": Passage(id="p1", title="", text="alpha bravo charlie delta"),
        "p2": Passage(id="p2", title="", text="echo foxtrot golf"),
    }


class TestAlign:
    def test_same_span_from_two_datasets_dedups(self, passages):
        span = _span("p1", 0, 5, "alpha")
        other = _span("p1", 0, 5, "alpha", source="aqa_bert")
        result = align_answer_sets(passages, [{"p1": [span]}, {"p1": [other]}], {"p1": "train", "p2": "train"})
        (aligned,) = [a for a in result.by_split["train"] if a.passage.id == "p1"]
        assert len(aligned.answers) == 1

    def test_disjoint_answers_unioned(self, passages):
        a = _span("p1", 0, 5, "alpha")
        b = _span("p1", 6, 11, "bravo", source="aqa_bidaf")
        result = align_answer_sets(passages, [{"p1": [a]}, {"p1": [b]}], {"p1": "dev", "p2": "dev"})
        (aligned,) = [x for x in result.by_split["dev"] if x.passage.id == "p1"]
        assert {s.text for s in aligned.answers} == {"alpha", "bravo"}

    def test_unknown_passage_rejected_with_diagnostic(self, passages):
        span = _span("ghost", 0, 5, "alpha")
        result = align_answer_sets(passages, [{"ghost": [span]}], {})
        assert result.rejected and result.rejected[0].reason == "unknown passage"

    def test_span_text_mismatch_rejected(self, passages):
        bad = _span("p1", 0, 5, "wrong")
        result = align_answer_sets(passages, [{"p1": [bad]}], {"p1": "train"})
        assert any("mismatch" in r.reason for r in result.rejected)
        (aligned,) = [a for a in result.by_split["train"] if a.passage.id == "p1"]
        assert aligned.answers == ()

    def test_each_passage_in_exactly_one_split(self, passages):
        result = align_answer_sets(passages, [], {"p1": "train", "p2": "test"})
        seen = [a.passage.id for group in result.by_split.values() for a in group]
        assert sorted(seen) == ["p1", "p2"]
        assert [a.passage.id for a in result.by_split["train"]] == ["p1"]
        assert [a.passage.id for a in result.by_split["test"]] == ["p2"]


class TestOverlapStats:
    def _aligned(self, passage, intervals):
        answers = tuple(
            _span(passage.id, start, end, passage.text[start:end]) for start, end in intervals
        )
        return AlignedAnswerSet(passage=passage, answers=answers)

    def test_single_answer(self):
        p = Passage(id="p", title="", text="x" * 20)
        stats = overlap_stats([self._aligned(p, [(0, 5)])])
        assert stats == {
            "answers_per_passage": 1.0,
            "pct_overlapping_answers": 0.0,
            "pct_passages_with_overlap": 0.0,
        }

    def test_two_intersecting(self):
        p = Passage(id="p", title="", text="x" * 20)
        stats = overlap_stats([self._aligned(p, [(0, 5), (3, 8)])])
        assert stats["answers_per_passage"] == 2.0
        assert stats["pct_overlapping_answers"] == 100.0
        assert stats["pct_passages_with_overlap"] == 100.0

    def test_three_passage_fixture(self):
        ps = [Passage(id=f"p{i}", title="", text="x" * 20) for i in (1, 2, 3)]
        sets = [
            self._aligned(ps[0], [(0, 5), (3, 8)]),
            self._aligned(ps[1], [(0, 2)]),
            self._aligned(ps[2], [(4, 6), (10, 12)]),
        ]
        stats = overlap_stats(sets)
        assert stats["answers_per_passage"] == pytest.approx(5 / 3)
        assert stats["pct_overlapping_answers"] == pytest.approx(40.0)
        assert stats["pct_passages_with_overlap"] == pytest.approx(100.0 / 3)

    def test_touching_intervals_do_not_overlap(self):
        p = Passage(id="p", title="", text="x" * 20)
        stats = overlap_stats([self._aligned(p, [(0, 5), (5, 8)])])
        assert stats["pct_overlapping_answers"] == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            overlap_stats([])


class TestAlignedIO:
    def test_roundtrip(self, passages, tmp_path):
        a = _span("p1", 0, 5, "alpha")
        result = align_answer_sets(passages, [{"p1": [a]}], {"p1": "train", "p2": "dev"})
        path = tmp_path / "aligned.jsonl"
        write_aligned_jsonl(result, path)
        loaded = read_aligned_jsonl(path)
        assert set(loaded.by_split) == {"train", "dev"}
        (p1,) = [x for x in loaded.by_split["train"] if x.passage.id == "p1"]
        assert p1.answers[0].text == "alpha"
