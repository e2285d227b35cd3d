"""Adversarial human evaluation backend."""

from .app import create_app
from .store import (
    DEFAULT_ONBOARDING,
    AnnotationRecord,
    AnnotatorSession,
    EvalStore,
    ModelBackendError,
    OnboardingItem,
    OnboardingScript,
    SubmissionRejected,
    assign_arm,
)

__all__ = [
    "create_app",
    "DEFAULT_ONBOARDING",
    "AnnotationRecord",
    "AnnotatorSession",
    "EvalStore",
    "ModelBackendError",
    "OnboardingItem",
    "OnboardingScript",
    "SubmissionRejected",
    "assign_arm",
]
