/**
 * DOM wiring: one AnnotatorSession rendered into index.html.
 *
 * The service origin defaults to the page origin and can be overridden
 * with ?api=http://host:port so the static page can be opened straight
 * from disk during annotation sessions.
 */

import { ApiClient } from "./api.js";
import { AnnotatorSession, Mode, UiState } from "./session.js";
import { SpeechCapture, speechAvailable } from "./speech.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id} in index.html`);
  return node as T;
}

const apiBase = new URLSearchParams(window.location.search).get("api")
  ?? window.location.origin;
const session = new AnnotatorSession(new ApiClient(apiBase));

const imageEl = el<HTMLImageElement>("image");
const progressEl = el<HTMLSpanElement>("progress");
const bannerEl = el<HTMLDivElement>("banner");
const noticeEl = el<HTMLDivElement>("notice");
const tokenErrorEl = el<HTMLDivElement>("token-error");
const draftEl = el<HTMLDivElement>("draft");
const fieldsEl = el<HTMLDivElement>("fields");
const workEl = el<HTMLElement>("work");
const doneEl = el<HTMLElement>("done");
const submitEl = el<HTMLButtonElement>("submit");
const addFieldEl = el<HTMLButtonElement>("add-field");
const clearEl = el<HTMLButtonElement>("clear-draft");
const micEl = el<HTMLButtonElement>("mic");

let capture: SpeechCapture | null = null;

function fieldValues(): string[] {
  return [...fieldsEl.querySelectorAll("input")].map((i) => i.value);
}

function addField(): void {
  const input = document.createElement("input");
  input.type = "text";
  input.placeholder = "text instance";
  input.addEventListener("input", () => session.setTypedTexts(fieldValues()));
  fieldsEl.appendChild(input);
  input.focus();
}

function resetFields(): void {
  fieldsEl.replaceChildren();
  addField();
}

function setHidden(node: HTMLElement, hidden: boolean): void {
  node.classList.toggle("hidden", hidden);
}

function render(state: UiState): void {
  progressEl.textContent = `${state.progress.done}/${state.progress.total}`;
  bannerEl.textContent = state.banner ?? "";
  setHidden(bannerEl, state.banner === null);
  noticeEl.textContent = state.notice ?? "";
  setHidden(noticeEl, state.notice === null);
  tokenErrorEl.textContent = state.tokenError ?? "";
  setHidden(tokenErrorEl, state.tokenError === null);

  setHidden(doneEl, !state.done);
  setHidden(workEl, state.done || state.task === null);
  if (state.task?.image_url) {
    const url = new URL(state.task.image_url, apiBase).toString();
    if (imageEl.src !== url) imageEl.src = url;
  }

  draftEl.replaceChildren(...state.draft.map((text) => {
    const chip = document.createElement("span");
    chip.className = "chip";
    chip.textContent = text;
    return chip;
  }));

  const typed = state.mode === "typed";
  setHidden(fieldsEl, !typed);
  setHidden(addFieldEl, !typed);
  setHidden(micEl, typed);
  for (const radio of document.querySelectorAll<HTMLInputElement>(
      "input[name=mode]")) {
    radio.checked = radio.value === state.mode;
  }

  submitEl.disabled = !session.canSubmit();
}

function switchMode(mode: Mode): void {
  capture?.stop();
  capture = null;
  micEl.textContent = "start listening";
  if (mode !== "typed" && !speechAvailable()) {
    session.fallbackToTyped(
      "speech recognition unavailable in this browser - using typed input");
    return;
  }
  session.setMode(mode);
}

for (const radio of document.querySelectorAll<HTMLInputElement>(
    "input[name=mode]")) {
  radio.addEventListener("change", () => switchMode(radio.value as Mode));
}

micEl.addEventListener("click", () => {
  if (capture?.listening) {
    capture.stop();
    micEl.textContent = "start listening";
    return;
  }
  capture ??= new SpeechCapture(
    (tokens) => session.addSpokenTokens(tokens),
    (message) => session.fallbackToTyped(`speech capture failed (${message})`));
  capture.start();
  micEl.textContent = "stop listening";
});

submitEl.addEventListener("click", async () => {
  if (await session.submit()) resetFields();
});

addFieldEl.addEventListener("click", addField);
clearEl.addEventListener("click", () => {
  session.clearDraft();
  resetFields();
});

session.onChange(render);
resetFields();
void session.fetchNext();
