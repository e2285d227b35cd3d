// @vitest-environment jsdom

import { beforeEach, describe, expect, it } from "vitest";

import { EvalApiClient } from "../src/api.js";
import { SessionController } from "../src/session.js";
import { AnnotationView } from "../src/ui.js";
import { StubEvalBackend } from "./stub-backend.js";

function setup(backend: StubEvalBackend, annotator = "web-ann-1") {
  const api = new EvalApiClient("http://stub.local", backend.fetch);
  const controller = new SessionController(api, annotator);
  const root = document.createElement("div");
  document.body.appendChild(root);
  const view = new AnnotationView(root, controller, () => Date.now());
  return { api, controller, view, root };
}

async function completeOnboarding(view: AnnotationView, backend: StubEvalBackend) {
  await view.start();
  await view.submitOnboarding(backend.expectedOnboardingSpans());
}

function spanForWord(backend: StubEvalBackend, word: string) {
  const start = backend.passage.text.indexOf(word);
  expect(start).toBeGreaterThanOrEqual(0);
  return { start, end: start + word.length };
}

async function ask(view: AnnotationView, backend: StubEvalBackend, word: string, question: string) {
  view.handles.question.value = question;
  view.setSpan(spanForWord(backend, word));
  await view.submit();
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("five-question session", () => {
  it("completes after five accepted submissions", async () => {
    const backend = new StubEvalBackend();
    const { view, controller } = setup(backend);
    await completeOnboarding(view, backend);
    expect(controller.snapshot().phase).toBe("asking");

    const words = ["Rhine", "Swiss", "Basel", "Rotterdam", "flows"];
    for (const [i, word] of words.entries()) {
      await ask(view, backend, word, `Question about ${word}?`);
      const snapshot = controller.snapshot();
      expect(snapshot.questionsInSession).toBe(i + 1);
      if (i < 4) {
        expect(snapshot.phase).toBe("asking");
      }
    }
    const finalSnapshot = controller.snapshot();
    expect(finalSnapshot.phase).toBe("complete");
    expect(view.handles.status.textContent).toContain("Session complete");
    expect(view.handles.submit.disabled).toBe(true);
    expect(view.handles.question.disabled).toBe(true);
  });

  it("counts only accepted backend responses", async () => {
    const backend = new StubEvalBackend();
    const { view, controller } = setup(backend);
    await completeOnboarding(view, backend);
    await ask(view, backend, "Rhine", "Q1?");
    expect(controller.snapshot().questionsInSession).toBe(1);
    // a rejected submit (no span) must not move the counter
    view.handles.question.value = "Q2?";
    view.setSpan(null);
    await view.submit();
    expect(controller.snapshot().questionsInSession).toBe(1);
  });

  it("shows the beaten-model state when the model is fooled", async () => {
    const backend = new StubEvalBackend({ modelReply: () => "a wrong answer" });
    const { view, controller } = setup(backend);
    await completeOnboarding(view, backend);
    await ask(view, backend, "Basel", "Which city?");
    expect(controller.snapshot().lastFooled).toBe(true);
    expect(view.handles.modelAnswer.dataset.fooled).toBe("true");
    expect(view.handles.modelAnswer.textContent).toContain("beat the model");
  });

  it("renders backend cap rejections verbatim and disables input", async () => {
    const backend = new StubEvalBackend({ lifetimeCap: 2 });
    const { view, controller } = setup(backend);
    await completeOnboarding(view, backend);
    await ask(view, backend, "Rhine", "Q1?");
    await ask(view, backend, "Basel", "Q2?");
    expect(controller.snapshot().phase).toBe("capped");
    // a further submit attempt is impossible through the controls
    expect(view.handles.submit.disabled).toBe(true);
    expect(view.handles.question.disabled).toBe(true);
    expect(view.handles.status.textContent).toBe("lifetime question cap reached");
  });

  it("renders a 403 rejection reason from the backend verbatim", async () => {
    const backend = new StubEvalBackend({ lifetimeCap: 1, sessionTarget: 3 });
    const api = new EvalApiClient("http://stub.local", backend.fetch);
    const controller = new SessionController(api, "web-ann-2");
    const root = document.createElement("div");
    document.body.appendChild(root);
    const view = new AnnotationView(root, controller);
    await completeOnboarding(view, backend);
    await ask(view, backend, "Rhine", "Q1?");  // consumes the lifetime budget
    // bypass the guard to simulate a raced second tab hitting the cap
    const snapshot = await controller.submitQuestion("Q2?", spanForWord(backend, "Basel"), 1.0).catch(() => null);
    if (snapshot) {
      expect(snapshot.phase).toBe("capped");
      expect(snapshot.errorMessage).toContain("lifetime cap");
      view.render(snapshot);
      expect(view.handles.status.textContent).toContain("lifetime cap");
    }
  });

  it("keeps onboarding mandatory before questions", async () => {
    const backend = new StubEvalBackend();
    const { view, controller } = setup(backend);
    await view.start();
    expect(controller.snapshot().phase).toBe("onboarding");
    await view.submitOnboarding([{ start: 0, end: 3 }, { start: 4, end: 8 }]);
    expect(controller.snapshot().phase).toBe("onboarding");
    expect(controller.snapshot().errorMessage).toContain("incorrect");
    await view.submitOnboarding(backend.expectedOnboardingSpans());
    expect(controller.snapshot().phase).toBe("asking");
  });
});

describe("model identity stays hidden", () => {
  it("no request or response payload contains the model name", async () => {
    const backend = new StubEvalBackend({ modelName: "secret-roberta-large-checkpoint" });
    const { view } = setup(backend);
    await completeOnboarding(view, backend);
    for (const word of ["Rhine", "Swiss", "Basel", "Rotterdam", "flows"]) {
      await ask(view, backend, word, `Question about ${word}?`);
    }
    expect(backend.transcript.length).toBeGreaterThan(10);
    for (const payload of backend.transcript) {
      expect(payload).not.toContain(backend.modelName);
      expect(payload.toLowerCase()).not.toContain("roberta");
    }
    expect(document.body.innerHTML).not.toContain(backend.modelName);
  });
});

describe("ui span capture", () => {
  it("mouseup selection feeds byte-exact offsets into the submission", async () => {
    const backend = new StubEvalBackend();
    const { view } = setup(backend);
    await completeOnboarding(view, backend);

    const passageEl = view.handles.passage;
    const text = backend.passage.text;
    const start = text.indexOf("Rotterdam");
    const range = document.createRange();
    range.setStart(passageEl.firstChild as Text, start);
    range.setEnd(passageEl.firstChild as Text, start + "Rotterdam".length);
    const selection = window.getSelection()!;
    selection.removeAllRanges();
    selection.addRange(range);
    passageEl.dispatchEvent(new window.MouseEvent("mouseup", { bubbles: true }));

    expect(view.selectedOffsets()).toEqual({ start, end: start + "Rotterdam".length });
    expect(view.handles.spanPreview.textContent).toContain("Rotterdam");

    view.handles.question.value = "Which city does the Rhine reach last?";
    await view.submit();
    const lastRequest = backend.transcript
      .map((t) => {
        try {
          return JSON.parse(t);
        } catch {
          return null;
        }
      })
      .filter((p) => p && typeof p.answer_start === "number")
      .pop();
    expect(lastRequest.answer_start).toBe(start);
    expect(lastRequest.answer_end).toBe(start + "Rotterdam".length);
    expect(text.slice(lastRequest.answer_start, lastRequest.answer_end)).toBe("Rotterdam");
  });
});
