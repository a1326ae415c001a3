/**
 * Annotation session state machine, UI-framework free.
 *
 * Holds the current task, draft texts, input mode, progress, and error
 * banner; enforces the submit invariants (never while the draft is
 * empty or a request is in flight); preserves state across network
 * failures and server rejections so no keystroke is ever lost.
 */

import { AnnotationPayload, ApiClient, ApiError, Progress, Source, Task } from "./api.js";
import { TokenError, assembleTranscript } from "./transcript.js";

export type Mode = Source;

export interface UiState {
  task: Task | null;           // null until the first fetch resolves
  done: boolean;               // queue exhausted
  draft: string[];             // normalized instance texts
  mode: Mode;
  progress: Progress;
  banner: string | null;       // request-level error (network / server)
  tokenError: string | null;   // inline char-mode token complaint
  notice: string | null;       // e.g. speech-unavailable fallback
  busy: boolean;               // a request is in flight
}

export type Listener = (state: UiState) => void;

export class AnnotatorSession {
  readonly state: UiState = {
    task: null,
    done: false,
    draft: [],
    mode: "typed",
    progress: { done: 0, total: 0 },
    banner: null,
    tokenError: null,
    notice: null,
    busy: false,
  };

  private listeners: Listener[] = [];

  constructor(private readonly api: ApiClient) {}

  onChange(fn: Listener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  /** The submit invariant: a task, a non-empty draft, nothing in flight. */
  canSubmit(): boolean {
    return !this.state.busy
      && this.state.draft.length > 0
      && this.state.task?.image_id != null;
  }

  /** Pull the next task and progress; on failure keep current state. */
  async fetchNext(): Promise<void> {
    this.state.busy = true;
    this.emit();
    try {
      const task = await this.api.nextTask();
      const progress = await this.api.progress();
      this.state.task = task;
      this.state.done = task.image_id === null;
      this.state.progress = progress;
      this.state.banner = null;
    } catch (e) {
      this.state.banner = `cannot reach service (${reason(e)}) - retry`;
    } finally {
      this.state.busy = false;
      this.emit();
    }
  }

  setMode(mode: Mode): void {
    this.state.mode = mode;
    this.state.tokenError = null;
    this.emit();
  }

  /** Speech capture unavailable: drop to typed input with a notice. */
  fallbackToTyped(noticeText: string): void {
    this.state.mode = "typed";
    this.state.notice = noticeText;
    this.emit();
  }

  /** Typed mode: one field per instance, normalized like the server. */
  setTypedTexts(fields: readonly string[]): void {
    this.state.draft = fields.length === 0
      ? []
      : assembleTranscript(fields, "word");
    this.emit();
  }

  /**
   * Audio modes: append the texts assembled from a spoken token burst.
   * A bad char-mode token surfaces inline and leaves the draft alone.
   */
  addSpokenTokens(tokens: readonly string[]): void {
    if (tokens.length === 0) return;
    const rule = this.state.mode === "audio-char" ? "char" : "word";
    try {
      const texts = assembleTranscript(tokens, rule);
      this.state.draft = [...this.state.draft, ...texts];
      this.state.tokenError = null;
    } catch (e) {
      if (e instanceof TokenError) {
        this.state.tokenError = e.message;
      } else {
        throw e;
      }
    }
    this.emit();
  }

  clearDraft(): void {
    this.state.draft = [];
    this.state.tokenError = null;
    this.emit();
  }

  /**
   * POST the draft for the current image. On 201: clear the draft and
   * advance to the next task. On rejection: banner up, draft intact.
   * Returns true iff the annotation was accepted.
   */
  async submit(): Promise<boolean> {
    if (!this.canSubmit()) return false;
    const payload: AnnotationPayload = {
      image_id: this.state.task!.image_id!,
      texts: this.state.draft,
      source: this.state.mode,
    };
    this.state.busy = true;
    this.emit();
    try {
      await this.api.submit(payload);
    } catch (e) {
      this.state.banner = e instanceof ApiError
        ? `rejected: ${e.message}`
        : `cannot reach service (${reason(e)}) - retry`;
      this.state.busy = false;
      this.emit();
      return false;
    }
    this.state.draft = [];
    this.state.tokenError = null;
    this.state.banner = null;
    this.state.busy = false;
    await this.fetchNext();
    return true;
  }
}

function reason(e: unknown): string {
  return e instanceof Error ? e.message : String(e);
}
