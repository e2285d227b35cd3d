/**
 * Browser bootstrap: read the backend base URL and annotator id, then run
 * the single-page flow (onboarding -> five questions -> completion).
 */

import { EvalApiClient } from "./api.js";
import { SessionController } from "./session.js";
import { AnnotationView } from "./ui.js";

function config(): { baseUrl: string; annotatorId: string } {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get("backend") ?? "http://127.0.0.1:8000";
  let annotatorId = params.get("annotator") ?? window.localStorage.getItem("annotator_id") ?? "";
  if (!annotatorId) {
    annotatorId = `web-${Math.random().toString(36).slice(2, 10)}`;
  }
  window.localStorage.setItem("annotator_id", annotatorId);
  return { baseUrl, annotatorId };
}

export async function bootstrap(root: HTMLElement): Promise<AnnotationView> {
  const { baseUrl, annotatorId } = config();
  const api = new EvalApiClient(baseUrl);
  const controller = new SessionController(api, annotatorId);
  const view = new AnnotationView(root, controller);
  await view.start();
  return view;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void bootstrap(document.getElementById("app") as HTMLElement);
}
