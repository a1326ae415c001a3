/**
 * Typed client for the annotation HTTP service.
 *
 * The payload type has no geometry capability at all - the UI cannot
 * send localization supervision even by accident, mirroring the
 * server-side schema that rejects such keys.
 */

export interface Task {
  image_id: string | null;
  image_url: string | null;
  remaining: number;
}

export interface Progress {
  done: number;
  total: number;
}

export type Source = "typed" | "audio-word" | "audio-char";

export interface AnnotationPayload {
  image_id: string;
  texts: string[];
  source: Source;
}

/** Server answered with a non-success status (carries its reason). */
export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(readonly baseUrl: string, fetchFn?: FetchLike) {
    // wrap instead of storing the bare global: browsers require fetch
    // to be invoked with the window as its receiver
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path);
    if (!res.ok) {
      throw new ApiError(await errorReason(res), res.status);
    }
    return res.json() as Promise<T>;
  }

  nextTask(): Promise<Task> {
    return this.getJson<Task>("/api/tasks/next");
  }

  progress(): Promise<Progress> {
    return this.getJson<Progress>("/api/progress");
  }

  /** Resolves on 201; throws ApiError with the server's reason otherwise. */
  async submit(payload: AnnotationPayload): Promise<void> {
    const res = await this.fetchFn(this.baseUrl + "/api/annotations", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (res.status !== 201) {
      throw new ApiError(await errorReason(res), res.status);
    }
  }

  imageUrl(task: Task): string {
    return task.image_url ? this.baseUrl + task.image_url : "";
  }
}

async function errorReason(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { error?: string };
    if (body && typeof body.error === "string") return body.error;
  } catch {
    // fall through to the status line
  }
  return `HTTP ${res.status}`;
}
