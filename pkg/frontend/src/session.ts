/**
 * Session state machine for one annotator.
 *
 * Single-page flow: onboarding -> 5-question loop -> completion. Question
 * counters only move on accepted backend responses; an in-flight flag
 * prevents double submits on retry.
 */

import { ApiError, EvalApiClient, OnboardingPayload, QuestionResult, SessionPayload } from "./api.js";
import { SpanOffsets } from "./highlight.js";

export type SessionPhase =
  | "idle"
  | "onboarding"
  | "asking"
  | "submitting"
  | "complete"
  | "capped"
  | "failed";

export interface SessionSnapshot {
  phase: SessionPhase;
  passageText: string;
  passageTitle: string;
  questionsInSession: number;
  sessionTarget: number;
  lifetimeRemaining: number;
  lastModelAnswer: string | null;
  lastFooled: boolean | null;
  errorMessage: string | null;
}

export class SessionController {
  private phase: SessionPhase = "idle";
  private session: SessionPayload | null = null;
  private onboarding: OnboardingPayload | null = null;
  private questionsInSession = 0;
  private lifetimeRemaining = 0;
  private lastResult: QuestionResult | null = null;
  private errorMessage: string | null = null;
  private inFlight = false;

  constructor(
    private readonly api: EvalApiClient,
    private readonly annotatorId: string,
  ) {}

  snapshot(): SessionSnapshot {
    return {
      phase: this.phase,
      passageText: this.session?.passage.text ?? this.onboarding?.passage.text ?? "",
      passageTitle: this.session?.passage.title ?? this.onboarding?.passage.title ?? "",
      questionsInSession: this.questionsInSession,
      sessionTarget: this.session?.session_target ?? 5,
      lifetimeRemaining: this.lifetimeRemaining,
      lastModelAnswer: this.lastResult?.model_answer ?? null,
      lastFooled: this.lastResult?.fooled ?? null,
      errorMessage: this.errorMessage,
    };
  }

  onboardingQuestions(): { index: number; question: string }[] {
    return this.onboarding?.questions ?? [];
  }

  /** Open a session; routes through onboarding when the backend requires it. */
  async start(): Promise<SessionSnapshot> {
    this.errorMessage = null;
    const session = await this.api.startSession(this.annotatorId);
    this.session = session;
    this.lifetimeRemaining = session.lifetime_remaining;
    this.questionsInSession = 0;
    if (session.lifetime_remaining <= 0) {
      this.phase = "capped";
      this.errorMessage = "lifetime question cap reached";
    } else if (session.onboarding_required) {
      this.onboarding = await this.api.fetchOnboarding();
      this.phase = "onboarding";
    } else {
      this.phase = "asking";
    }
    return this.snapshot();
  }

  async submitOnboarding(answers: SpanOffsets[]): Promise<SessionSnapshot> {
    if (this.phase !== "onboarding") {
      throw new Error(`cannot submit onboarding in phase ${this.phase}`);
    }
    const result = await this.api.submitOnboarding(
      this.annotatorId,
      answers.map((a) => ({ start: a.start, end: a.end })),
    );
    if (result.passed) {
      this.phase = "asking";
      this.errorMessage = null;
    } else {
      this.errorMessage = "onboarding answers incorrect; try again";
    }
    return this.snapshot();
  }

  canSubmit(question: string, span: SpanOffsets | null): boolean {
    return (
      this.phase === "asking" &&
      !this.inFlight &&
      span !== null &&
      question.trim().length > 0 &&
      this.lifetimeRemaining > 0
    );
  }

  /**
   * Submit one question. Counters update only from the accepted backend
   * response; backend rejections surface verbatim without advancing state.
   */
  async submitQuestion(question: string, span: SpanOffsets, elapsedSeconds: number): Promise<SessionSnapshot> {
    if (!this.session) {
      throw new Error("no active session");
    }
    if (this.inFlight) {
      throw new Error("a submission is already in flight");
    }
    if (!this.canSubmit(question, span)) {
      throw new Error(`cannot submit in phase ${this.phase}`);
    }
    this.inFlight = true;
    this.phase = "submitting";
    try {
      const result = await this.api.submitQuestion(
        this.session.session_id,
        question,
        span.start,
        span.end,
        elapsedSeconds,
      );
      this.lastResult = result;
      this.questionsInSession = result.questions_in_session;
      this.lifetimeRemaining = result.lifetime_remaining;
      this.errorMessage = null;
      if (result.questions_in_session >= result.session_target) {
        this.phase = "complete";
      } else if (result.lifetime_remaining <= 0) {
        this.phase = "capped";
        this.errorMessage = "lifetime question cap reached";
      } else {
        this.phase = "asking";
      }
    } catch (err) {
      if (err instanceof ApiError) {
        // cap rejections disable the loop; anything else allows a retry
        this.errorMessage = err.detail;
        this.phase = err.status === 403 ? "capped" : "asking";
      } else {
        this.errorMessage = String(err);
        this.phase = "asking";
      }
    } finally {
      this.inFlight = false;
    }
    return this.snapshot();
  }
}
