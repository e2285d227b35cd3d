"""State and persistence for adversarial human evaluation.

Annotators are deterministically assigned to a hidden model arm by a hash
of their identifier, ask questions in 5-question sessions up to a lifetime
cap of 50, and every model-fooling question goes through an expert
validation queue. All interactions append to a per-arm JSONL event log;
recovery replays the log.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from ..interfaces import QAModel
from ..metrics import AnnotatorStats, token_f1

VALIDATION_STATES = ("auto_valid", "pending", "valid", "invalid")


def assign_arm(annotator_id: str, arms: Sequence[str]) -> str:
    """Stable hash-based arm allocation.

    The first 8 bytes (big-endian) of SHA-256 of the UTF-8 identifier,
    modulo the arm count, index into the ordered arm list.
    """
    if not arms:
        raise ValueError("arms must be non-empty")
    digest = hashlib.sha256(annotator_id.encode("utf-8")).digest()
    index = int.from_bytes(digest[:8], "big") % len(arms)
    return arms[index]


@dataclass(frozen=True)
class AnnotationRecord:
    """One human-vs-model interaction."""

    record_id: str
    annotator_id: str
    arm: str
    passage_id: str
    question: str
    answer_start: int
    answer_end: int
    answer_text: str
    model_answer: str
    fooled: bool
    validation: str
    elapsed_seconds: float
    failed: bool = False

    def __post_init__(self) -> None:
        if self.validation not in VALIDATION_STATES:
            raise ValueError(f"unknown validation state: {self.validation!r}")
        if not self.failed:
            if not self.fooled and self.validation != "auto_valid":
                raise ValueError("non-fooling records are auto-validated")
            if self.fooled and self.validation == "auto_valid":
                raise ValueError("fooling records require explicit validation")

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "annotator_id": self.annotator_id,
            "arm": self.arm,
            "passage_id": self.passage_id,
            "question": self.question,
            "answer_start": self.answer_start,
            "answer_end": self.answer_end,
            "answer_text": self.answer_text,
            "model_answer": self.model_answer,
            "fooled": self.fooled,
            "validation": self.validation,
            "elapsed_seconds": self.elapsed_seconds,
            "failed": self.failed,
        }


@dataclass
class AnnotatorSession:
    session_id: str
    annotator_id: str
    arm_token: str
    passage_id: str
    questions_in_session: int = 0
    started_at: float = 0.0
    last_activity_at: float = 0.0


@dataclass(frozen=True)
class OnboardingItem:
    question: str
    answer_start: int
    answer_end: int


@dataclass(frozen=True)
class OnboardingScript:
    passage_title: str
    passage_text: str
    items: tuple[OnboardingItem, ...]


DEFAULT_ONBOARDING = OnboardingScript(
    passage_title="Practice passage",
    passage_text=(
        "The practice run takes place in Springfield. "
        "Jordan Lee wrote the manual in 2012, and the committee approved it."
    ),
    items=(
        OnboardingItem(question="Where does the practice run take place?", answer_start=32, answer_end=43),
        OnboardingItem(question="Who wrote the manual?", answer_start=45, answer_end=55),
    ),
)


class SubmissionRejected(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class ModelBackendError(Exception):
    pass


class EvalStore:
    """Single-process store with per-annotator write serialization."""

    def __init__(
        self,
        arms: Mapping[str, QAModel],
        passages: Sequence,
        log_dir: str | Path | None = None,
        fool_threshold: float = 0.4,
        session_target: int = 5,
        lifetime_cap: int = 50,
        onboarding: OnboardingScript = DEFAULT_ONBOARDING,
        require_onboarding: bool = True,
        clock: Callable[[], float] = time.time,
    ):
        if not arms:
            raise ValueError("at least one arm is required")
        if not passages:
            raise ValueError("at least one passage is required")
        self.model_ids = list(arms)
        self.models = dict(arms)
        # annotator-facing arm identifiers are opaque positional tokens
        self.arm_tokens = {model_id: f"arm-{i}" for i, model_id in enumerate(self.model_ids)}
        self.token_to_model = {tok: mid for mid, tok in self.arm_tokens.items()}
        self.passages = {p.id: p for p in passages}
        self.passage_order = [p.id for p in passages]
        self.fool_threshold = fool_threshold
        self.session_target = session_target
        self.lifetime_cap = lifetime_cap
        self.onboarding = onboarding
        self.require_onboarding = require_onboarding
        self.clock = clock
        self.log_dir = Path(log_dir) if log_dir is not None else None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)

        self.sessions: dict[str, AnnotatorSession] = {}
        self.records: dict[str, AnnotationRecord] = {}
        self.record_order: list[str] = []
        self.audit_log: list[dict] = []
        self.lifetime_questions: dict[str, int] = {}
        self.onboarded: set[str] = set()
        self._session_counter = 0
        self._record_counter = 0
        self._lock = threading.Lock()
        self._annotator_locks: dict[str, threading.Lock] = {}

    # -- internals -------------------------------------------------------------
    def _annotator_lock(self, annotator_id: str) -> threading.Lock:
        with self._lock:
            return self._annotator_locks.setdefault(annotator_id, threading.Lock())

    def _append_event(self, arm_token: str, event: dict) -> None:
        if self.log_dir is None:
            return
        path = self.log_dir / f"events-{arm_token}.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")

    def arm_for(self, annotator_id: str) -> str:
        return assign_arm(annotator_id, self.model_ids)

    # -- onboarding --------------------------------------------------------------
    def onboarding_payload(self) -> dict:
        return {
            "passage": {"title": self.onboarding.passage_title, "text": self.onboarding.passage_text},
            "questions": [
                {"index": i, "question": item.question} for i, item in enumerate(self.onboarding.items)
            ],
        }

    def submit_onboarding(self, annotator_id: str, answers: Sequence[tuple[int, int]]) -> bool:
        """Pass iff every expected span is selected exactly."""
        expected = [(item.answer_start, item.answer_end) for item in self.onboarding.items]
        passed = list(answers) == expected
        if passed:
            self.onboarded.add(annotator_id)
        return passed

    # -- sessions ----------------------------------------------------------------
    def start_session(self, annotator_id: str) -> AnnotatorSession:
        with self._annotator_lock(annotator_id):
            model_id = self.arm_for(annotator_id)
            arm_token = self.arm_tokens[model_id]
            self._session_counter += 1
            n_prev = sum(1 for s in self.sessions.values() if s.annotator_id == annotator_id)
            passage_id = self.passage_order[
                int.from_bytes(hashlib.sha256(f"{annotator_id}:{n_prev}".encode()).digest()[:4], "big")
                % len(self.passage_order)
            ]
            now = self.clock()
            session = AnnotatorSession(
                session_id=f"s-{self._session_counter:06d}",
                annotator_id=annotator_id,
                arm_token=arm_token,
                passage_id=passage_id,
                started_at=now,
                last_activity_at=now,
            )
            self.sessions[session.session_id] = session
            return session

    def lifetime_remaining(self, annotator_id: str) -> int:
        return self.lifetime_cap - self.lifetime_questions.get(annotator_id, 0)

    # -- question submission -------------------------------------------------------
    def submit_question(
        self, session_id: str, question: str, answer_start: int, answer_end: int
    ) -> AnnotationRecord:
        session = self.sessions.get(session_id)
        if session is None:
            raise KeyError(f"unknown session {session_id!r}")
        with self._annotator_lock(session.annotator_id):
            if self.require_onboarding and session.annotator_id not in self.onboarded:
                raise SubmissionRejected("onboarding not passed")
            if self.lifetime_questions.get(session.annotator_id, 0) >= self.lifetime_cap:
                raise SubmissionRejected(f"lifetime cap of {self.lifetime_cap} questions reached")
            if session.questions_in_session >= self.session_target:
                raise SubmissionRejected(f"session already holds {self.session_target} questions")
            if not question.strip():
                raise SubmissionRejected("question must be non-empty")
            passage = self.passages[session.passage_id]
            if not 0 <= answer_start < answer_end <= len(passage.text):
                raise SubmissionRejected("answer span outside the passage")
            answer_text = passage.text[answer_start:answer_end]

            model_id = self.token_to_model[session.arm_token]
            now = self.clock()
            elapsed = now - session.last_activity_at
            self._record_counter += 1
            record_id = f"r-{self._record_counter:08d}"
            try:
                model_answer, _conf = self.models[model_id].answer(passage.text, question)
            except Exception as exc:
                record = AnnotationRecord(
                    record_id=record_id,
                    annotator_id=session.annotator_id,
                    arm=session.arm_token,
                    passage_id=session.passage_id,
                    question=question,
                    answer_start=answer_start,
                    answer_end=answer_end,
                    answer_text=answer_text,
                    model_answer="",
                    fooled=False,
                    validation="auto_valid",
                    elapsed_seconds=elapsed,
                    failed=True,
                )
                self.records[record_id] = record
                self.record_order.append(record_id)
                self._append_event(session.arm_token, {"type": "record", **record.to_dict()})
                raise ModelBackendError(f"model backend failed: {exc}") from exc

            fooled = token_f1(model_answer, [answer_text]) < self.fool_threshold
            record = AnnotationRecord(
                record_id=record_id,
                annotator_id=session.annotator_id,
                arm=session.arm_token,
                passage_id=session.passage_id,
                question=question,
                answer_start=answer_start,
                answer_end=answer_end,
                answer_text=answer_text,
                model_answer=model_answer,
                fooled=fooled,
                validation="pending" if fooled else "auto_valid",
                elapsed_seconds=elapsed,
            )
            self.records[record_id] = record
            self.record_order.append(record_id)
            session.questions_in_session += 1
            session.last_activity_at = now
            self.lifetime_questions[session.annotator_id] = (
                self.lifetime_questions.get(session.annotator_id, 0) + 1
            )
            self._append_event(session.arm_token, {"type": "record", **record.to_dict()})
            return record

    # -- validation ------------------------------------------------------------------
    def validate_record(self, record_id: str, verdict: str, validator_id: str) -> AnnotationRecord:
        if verdict not in ("valid", "invalid"):
            raise ValueError(f"verdict must be valid or invalid, got {verdict!r}")
        record = self.records.get(record_id)
        if record is None:
            raise KeyError(f"unknown record {record_id!r}")
        if record.validation != "pending":
            raise ValueError(f"record {record_id!r} is {record.validation}, only pending records can be validated")
        updated = replace(record, validation=verdict)
        self.records[record_id] = updated
        audit = {
            "type": "validation",
            "record_id": record_id,
            "verdict": verdict,
            "validator_id": validator_id,
            "at": self.clock(),
        }
        self.audit_log.append(audit)
        self._append_event(record.arm, audit)
        return updated

    def pending_records(self, arm_token: str | None = None) -> list[AnnotationRecord]:
        return [
            self.records[rid]
            for rid in self.record_order
            if self.records[rid].validation == "pending"
            and (arm_token is None or self.records[rid].arm == arm_token)
        ]

    # -- export ------------------------------------------------------------------------
    def arm_records(self, arm_token: str) -> list[AnnotationRecord]:
        if arm_token not in self.token_to_model:
            raise KeyError(f"unknown arm token {arm_token!r}")
        return [self.records[rid] for rid in self.record_order if self.records[rid].arm == arm_token]

    def export_stats(self, arm_token: str) -> tuple[list[AnnotatorStats], dict]:
        """Per-annotator stats plus aggregate counts for one arm.

        Requires every fooling record to be validated. ``n_examples``
        counts only records contributing to the error-rate denominator
        (failed submissions and invalidated fooling attempts excluded).
        """
        records = [r for r in self.arm_records(arm_token) if not r.failed]
        if not records:
            raise ValueError(f"arm {arm_token!r} has no records")
        unresolved = [r.record_id for r in records if r.validation == "pending"]
        if unresolved:
            raise ValueError(f"unresolved validations: {', '.join(unresolved)}")
        per_annotator: dict[str, dict[str, int]] = {}
        for rec in records:
            slot = per_annotator.setdefault(rec.annotator_id, {"examples": 0, "errors": 0})
            if rec.fooled and rec.validation == "valid":
                slot["examples"] += 1
                slot["errors"] += 1
            elif not rec.fooled:
                slot["examples"] += 1
        stats = [
            AnnotatorStats(annotator_id=aid, n_examples=c["examples"], n_validated_errors=c["errors"])
            for aid, c in sorted(per_annotator.items())
            if c["examples"] > 0
        ]
        aggregate = {
            "n_annotators": len(per_annotator),
            "n_qas": len(records),
            "mean_elapsed_seconds": sum(r.elapsed_seconds for r in records) / len(records),
        }
        return stats, aggregate

    # -- persistence ---------------------------------------------------------------------
    def snapshot(self, path: str | Path) -> None:
        state = {
            "records": [self.records[rid].to_dict() for rid in self.record_order],
            "lifetime_questions": self.lifetime_questions,
            "onboarded": sorted(self.onboarded),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(state, fh, ensure_ascii=False, sort_keys=True, indent=2)

    def replay_events(self, log_dir: str | Path) -> int:
        """Rebuild record state from per-arm event logs; returns event count."""
        n = 0
        for path in sorted(Path(log_dir).glob("events-*.jsonl")):
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    event = json.loads(line)
                    n += 1
                    if event["type"] == "record":
                        payload = {k: v for k, v in event.items() if k != "type"}
                        record = AnnotationRecord(**payload)
                        if record.record_id not in self.records:
                            self.record_order.append(record.record_id)
                        self.records[record.record_id] = record
                        if not record.failed:
                            self.lifetime_questions[record.annotator_id] = (
                                self.lifetime_questions.get(record.annotator_id, 0) + 1
                            )
                        counter = int(record.record_id.split("-")[1])
                        self._record_counter = max(self._record_counter, counter)
                    elif event["type"] == "validation":
                        rid = event["record_id"]
                        if rid in self.records:
                            self.records[rid] = replace(self.records[rid], validation=event["verdict"])
                        self.audit_log.append(event)
        return n
