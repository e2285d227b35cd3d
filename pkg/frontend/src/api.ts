/**
 * Typed client for the adversarial evaluation backend.
 *
 * Wire formats mirror the HTTP API exactly; the only arm identity that
 * ever reaches this code is the opaque arm token.
 */

export interface PassagePayload {
  id: string;
  title: string;
  text: string;
}

export interface OnboardingPayload {
  passage: { title: string; text: string };
  questions: { index: number; question: string }[];
}

export interface SessionPayload {
  session_id: string;
  arm_token: string;
  passage: PassagePayload;
  session_target: number;
  lifetime_remaining: number;
  onboarding_required: boolean;
}

export interface QuestionResult {
  record_id: string;
  model_answer: string;
  fooled: boolean;
  questions_in_session: number;
  session_target: number;
  lifetime_remaining: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let detail = `HTTP ${response.status}`;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(response.status, detail);
}

export class EvalApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => parseOrThrow<T>(r));
  }

  fetchOnboarding(): Promise<OnboardingPayload> {
    return this.fetchImpl(`${this.baseUrl}/onboarding`).then((r) => parseOrThrow<OnboardingPayload>(r));
  }

  submitOnboarding(annotatorId: string, answers: { start: number; end: number }[]): Promise<{ passed: boolean }> {
    return this.post("/onboarding", { annotator_id: annotatorId, answers });
  }

  startSession(annotatorId: string): Promise<SessionPayload> {
    return this.post("/session", { annotator_id: annotatorId });
  }

  submitQuestion(
    sessionId: string,
    question: string,
    answerStart: number,
    answerEnd: number,
    elapsedSeconds: number,
  ): Promise<QuestionResult> {
    return this.post(`/session/${sessionId}/question`, {
      question,
      answer_start: answerStart,
      answer_end: answerEnd,
      elapsed_seconds: elapsedSeconds,
    });
  }
}
