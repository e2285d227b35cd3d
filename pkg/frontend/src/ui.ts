/**
 * DOM rendering and event wiring for the annotation interface.
 *
 * The passage is rendered as one text node so selections map byte-for-byte
 * onto backend offsets. Elapsed time per question is measured from passage
 * render to submit and sent with the request; the backend keeps its own
 * clock as ground truth.
 */

import { SelectionRejected, SpanOffsets, selectionOffsets, sliceForOffsets } from "./highlight.js";
import { SessionController, SessionSnapshot } from "./session.js";

export interface UiHandles {
  root: HTMLElement;
  passage: HTMLElement;
  question: HTMLTextAreaElement;
  submit: HTMLButtonElement;
  spanPreview: HTMLElement;
  progress: HTMLElement;
  modelAnswer: HTMLElement;
  status: HTMLElement;
  onboardingForm: HTMLElement;
}

export class AnnotationView {
  readonly handles: UiHandles;
  private selectedSpan: SpanOffsets | null = null;
  private renderedAt: number = Date.now();

  constructor(
    root: HTMLElement,
    private readonly controller: SessionController,
    private readonly now: () => number = () => Date.now(),
  ) {
    root.innerHTML = `
      <div class="eval-ui">
        <h2 data-role="title"></h2>
        <div data-role="progress" class="progress"></div>
        <div data-role="passage" class="passage"></div>
        <div data-role="span-preview" class="span-preview">no span selected</div>
        <div data-role="onboarding-form"></div>
        <textarea data-role="question" rows="2" placeholder="Write a question the model cannot answer"></textarea>
        <button data-role="submit" disabled>Ask the model</button>
        <div data-role="model-answer" class="model-answer"></div>
        <div data-role="status" class="status"></div>
      </div>`;
    const find = <T extends HTMLElement>(role: string): T => {
      const el = root.querySelector(`[data-role="${role}"]`);
      if (!el) throw new Error(`missing element ${role}`);
      return el as T;
    };
    this.handles = {
      root,
      passage: find("passage"),
      question: find<HTMLTextAreaElement>("question"),
      submit: find<HTMLButtonElement>("submit"),
      spanPreview: find("span-preview"),
      progress: find("progress"),
      modelAnswer: find("model-answer"),
      status: find("status"),
      onboardingForm: find("onboarding-form"),
    };
    this.handles.passage.addEventListener("mouseup", () => this.captureSelection());
    this.handles.question.addEventListener("input", () => this.refreshControls());
    this.handles.submit.addEventListener("click", () => {
      void this.submit();
    });
  }

  private captureSelection(): void {
    try {
      const selection = this.handles.passage.ownerDocument.defaultView?.getSelection() ?? null;
      this.selectedSpan = selectionOffsets(this.handles.passage, selection);
      const snapshot = this.controller.snapshot();
      this.handles.spanPreview.textContent = this.selectedSpan
        ? `answer: "${sliceForOffsets(snapshot.passageText, this.selectedSpan)}"`
        : "no span selected";
    } catch (err) {
      if (err instanceof SelectionRejected) {
        this.selectedSpan = null;
        this.handles.spanPreview.textContent = err.message;
      } else {
        throw err;
      }
    }
    this.refreshControls();
  }

  /** Explicit span setter for flows that do not use live selections. */
  setSpan(span: SpanOffsets | null): void {
    this.selectedSpan = span;
    this.refreshControls();
  }

  selectedOffsets(): SpanOffsets | null {
    return this.selectedSpan;
  }

  async start(): Promise<void> {
    this.render(await this.controller.start());
  }

  async submit(): Promise<void> {
    if (!this.selectedSpan) return;
    const elapsedSeconds = (this.now() - this.renderedAt) / 1000;
    const snapshot = await this.controller.submitQuestion(
      this.handles.question.value,
      this.selectedSpan,
      elapsedSeconds,
    );
    this.selectedSpan = null;
    this.handles.question.value = "";
    this.handles.spanPreview.textContent = "no span selected";
    this.render(snapshot);
  }

  async submitOnboarding(answers: SpanOffsets[]): Promise<void> {
    this.render(await this.controller.submitOnboarding(answers));
  }

  render(snapshot: SessionSnapshot): void {
    const h = this.handles;
    (h.root.querySelector('[data-role="title"]') as HTMLElement).textContent =
      snapshot.passageTitle || "Beat the model";
    if (h.passage.textContent !== snapshot.passageText) {
      h.passage.textContent = snapshot.passageText;
      this.renderedAt = this.now();
    }
    h.progress.textContent =
      snapshot.phase === "onboarding"
        ? "Onboarding: select the answer spans exactly"
        : `Question ${Math.min(snapshot.questionsInSession + 1, snapshot.sessionTarget)} of ${snapshot.sessionTarget}` +
          ` (${snapshot.lifetimeRemaining} lifetime remaining)`;

    if (snapshot.lastModelAnswer !== null) {
      h.modelAnswer.textContent = snapshot.lastFooled
        ? `Model answered: "${snapshot.lastModelAnswer}" — you beat the model! Pending validation.`
        : `Model answered: "${snapshot.lastModelAnswer}" — the model got it.`;
      h.modelAnswer.dataset.fooled = String(snapshot.lastFooled);
    } else {
      h.modelAnswer.textContent = "";
    }

    if (snapshot.phase === "complete") {
      h.status.textContent = "Session complete — thank you!";
    } else if (snapshot.phase === "capped") {
      h.status.textContent = snapshot.errorMessage ?? "question cap reached";
    } else {
      h.status.textContent = snapshot.errorMessage ?? "";
    }

    h.onboardingForm.style.display = snapshot.phase === "onboarding" ? "block" : "none";
    if (snapshot.phase === "onboarding") {
      h.onboardingForm.textContent = this.controller
        .onboardingQuestions()
        .map((q) => `${q.index + 1}. ${q.question}`)
        .join("\n");
    }
    this.refreshControls();
  }

  private refreshControls(): void {
    const snapshot = this.controller.snapshot();
    const enabled =
      this.controller.canSubmit(this.handles.question.value, this.selectedSpan) &&
      snapshot.phase === "asking";
    this.handles.submit.disabled = !enabled;
    const inputLocked = snapshot.phase === "complete" || snapshot.phase === "capped";
    this.handles.question.disabled = inputLocked;
  }
}
