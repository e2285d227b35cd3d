"""HTTP surface for the adversarial evaluation backend.

Annotator-facing payloads only ever carry opaque arm tokens; the model
identity behind an arm never leaves the server.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from ..metrics import mvmer, vmer
from .store import EvalStore, ModelBackendError, SubmissionRejected


class SessionRequest(BaseModel):
    annotator_id: str = Field(min_length=1)


class OnboardingAnswer(BaseModel):
    start: int
    end: int


class OnboardingSubmission(BaseModel):
    annotator_id: str = Field(min_length=1)
    answers: list[OnboardingAnswer]


class QuestionSubmission(BaseModel):
    question: str
    answer_start: int
    answer_end: int
    elapsed_seconds: float | None = None


class ValidationRequest(BaseModel):
    verdict: str
    validator_id: str = Field(min_length=1)


def create_app(store: EvalStore, include_model_answer_in_validation: bool = True) -> FastAPI:
    app = FastAPI(title="adversarial-eval-service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.store = store

    @app.get("/onboarding")
    def get_onboarding() -> dict:
        return store.onboarding_payload()

    @app.post("/onboarding")
    def post_onboarding(body: OnboardingSubmission) -> dict:
        passed = store.submit_onboarding(
            body.annotator_id, [(a.start, a.end) for a in body.answers]
        )
        return {"passed": passed}

    @app.post("/session")
    def post_session(body: SessionRequest) -> dict:
        session = store.start_session(body.annotator_id)
        passage = store.passages[session.passage_id]
        return {
            "session_id": session.session_id,
            "arm_token": session.arm_token,
            "passage": {"id": passage.id, "title": passage.title, "text": passage.text},
            "session_target": store.session_target,
            "lifetime_remaining": store.lifetime_remaining(body.annotator_id),
            "onboarding_required": store.require_onboarding
            and body.annotator_id not in store.onboarded,
        }

    @app.post("/session/{session_id}/question")
    def post_question(session_id: str, body: QuestionSubmission) -> dict:
        try:
            record = store.submit_question(
                session_id, body.question, body.answer_start, body.answer_end
            )
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except SubmissionRejected as exc:
            raise HTTPException(status_code=403, detail=exc.reason) from exc
        except ModelBackendError as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        session = store.sessions[session_id]
        return {
            "record_id": record.record_id,
            "model_answer": record.model_answer,
            "fooled": record.fooled,
            "questions_in_session": session.questions_in_session,
            "session_target": store.session_target,
            "lifetime_remaining": store.lifetime_remaining(session.annotator_id),
        }

    @app.post("/records/{record_id}/validate")
    def post_validate(record_id: str, body: ValidationRequest) -> dict:
        try:
            record = store.validate_record(record_id, body.verdict, body.validator_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return {"record_id": record.record_id, "validation": record.validation}

    @app.get("/records/pending")
    def get_pending(arm_token: str | None = None) -> dict:
        pending = store.pending_records(arm_token)
        records = []
        for rec in pending:
            payload = {
                "record_id": rec.record_id,
                "passage_id": rec.passage_id,
                "question": rec.question,
                "answer_text": rec.answer_text,
            }
            if include_model_answer_in_validation:
                payload["model_answer"] = rec.model_answer
            records.append(payload)
        return {"pending": records}

    @app.get("/arms/{arm_token}/stats")
    def get_stats(arm_token: str) -> dict:
        try:
            stats, aggregate = store.export_stats(arm_token)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        records = [r for r in store.arm_records(arm_token) if not r.failed]
        return {
            "arm_token": arm_token,
            "per_annotator": [
                {
                    "annotator_id": s.annotator_id,
                    "n_examples": s.n_examples,
                    "n_validated_errors": s.n_validated_errors,
                }
                for s in stats
            ],
            "aggregate": aggregate,
            "vmer_pct": vmer(records),
            "mvmer_pct": mvmer(stats),
        }

    return app
