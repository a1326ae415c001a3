/**
 * Session state machine against an in-memory fake of the service.
 *
 * Covers the UI invariants: submit gating, draft preservation across
 * rejections and network failures, char-mode token errors surfacing
 * inline, the done state, and the speech-unavailable fallback.
 */

import { describe, expect, test } from "vitest";

import { ApiClient, FetchLike } from "../src/api";
import { AnnotatorSession } from "../src/session";
import { SpeechCapture, SpeechUnavailableError, speechAvailable } from "../src/speech";

function json(status: number, obj: unknown): Response {
  return new Response(JSON.stringify(obj), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

interface FakeService {
  fetchFn: FetchLike;
  records: Array<{ image_id: string; texts: string[]; source: string }>;
  failNetwork: boolean;
  rejectSubmit: string | null;
}

function fakeService(imageIds: string[]): FakeService {
  const done = new Set<string>();
  const leased = new Set<string>();
  const service: FakeService = {
    records: [],
    failNetwork: false,
    rejectSubmit: null,
    fetchFn: async (input, init) => {
      if (service.failNetwork) throw new Error("connection refused");
      const url = new URL(input);
      if (url.pathname === "/api/tasks/next") {
        const free = imageIds.find((i) => !done.has(i) && !leased.has(i)) ?? null;
        if (free) leased.add(free);
        return json(200, {
          image_id: free,
          image_url: free ? `/images/${free}` : null,
          remaining: imageIds.length - done.size,
        });
      }
      if (url.pathname === "/api/progress") {
        return json(200, { done: done.size, total: imageIds.length });
      }
      if (url.pathname === "/api/annotations" && init?.method === "POST") {
        if (service.rejectSubmit) {
          return json(400, { error: service.rejectSubmit });
        }
        const payload = JSON.parse(String(init.body));
        service.records.push(payload);
        done.add(payload.image_id);
        leased.delete(payload.image_id);
        return json(201, { status: "created", image_id: payload.image_id });
      }
      return json(404, { error: `no route ${url.pathname}` });
    },
  };
  return service;
}

function makeSession(imageIds: string[] = ["0000", "0001", "0002"]) {
  const service = fakeService(imageIds);
  const session = new AnnotatorSession(
    new ApiClient("http://fake", service.fetchFn));
  return { service, session };
}

describe("fetch and submit flow", () => {
  test("first fetch shows the first task and zero progress", async () => {
    const { session } = makeSession();
    await session.fetchNext();
    expect(session.state.task?.image_id).toBe("0000");
    expect(session.state.progress).toEqual({ done: 0, total: 3 });
    expect(session.state.done).toBe(false);
    expect(session.canSubmit()).toBe(false); // draft still empty
  });

  test("typed fields normalize into the draft", async () => {
    const { session } = makeSession();
    await session.fetchNext();
    session.setTypedTexts(["hi", "ok"]);
    expect(session.state.draft).toEqual(["HI", "OK"]);
    expect(session.canSubmit()).toBe(true);
  });

  test("submit stores the record, clears the draft, advances", async () => {
    const { service, session } = makeSession();
    await session.fetchNext();
    session.setTypedTexts(["cat"]);
    expect(await session.submit()).toBe(true);
    expect(service.records).toEqual([
      { image_id: "0000", texts: ["CAT"], source: "typed" }]);
    expect(session.state.draft).toEqual([]);
    expect(session.state.task?.image_id).toBe("0001");
    expect(session.state.progress).toEqual({ done: 1, total: 3 });
  });

  test("a 400 keeps the draft and shows the server reason", async () => {
    const { service, session } = makeSession();
    await session.fetchNext();
    session.setTypedTexts(["cat"]);
    service.rejectSubmit = "unknown image_id '0000'";
    expect(await session.submit()).toBe(false);
    expect(session.state.banner).toContain("unknown image_id");
    expect(session.state.draft).toEqual(["CAT"]);
    expect(session.state.task?.image_id).toBe("0000");
    // recovery: server accepts, session moves on
    service.rejectSubmit = null;
    expect(await session.submit()).toBe(true);
    expect(session.state.task?.image_id).toBe("0001");
  });

  test("network failure preserves state and raises the banner", async () => {
    const { service, session } = makeSession();
    await session.fetchNext();
    session.setTypedTexts(["cat"]);
    service.failNetwork = true;
    await session.fetchNext();
    expect(session.state.banner).toContain("cannot reach service");
    expect(session.state.task?.image_id).toBe("0000");
    expect(session.state.draft).toEqual(["CAT"]);
    service.failNetwork = false;
    await session.fetchNext();
    expect(session.state.banner).toBeNull();
  });

  test("the queue drains into the done state", async () => {
    const { session } = makeSession(["a", "b"]);
    await session.fetchNext();
    for (const text of ["ONE", "TWO"]) {
      session.setTypedTexts([text]);
      expect(await session.submit()).toBe(true);
    }
    expect(session.state.done).toBe(true);
    expect(session.state.task?.image_id).toBeNull();
    expect(session.state.progress).toEqual({ done: 2, total: 2 });
    expect(session.canSubmit()).toBe(false);
  });

  test("submit is gated while a request is in flight", async () => {
    const { service, session } = makeSession();
    await session.fetchNext();
    session.setTypedTexts(["cat"]);
    const inner = service.fetchFn;
    let release!: () => void;
    const gate = new Promise<void>((r) => { release = r; });
    // wrap the fake transport so the POST hangs until released
    (service as { fetchFn: FetchLike }).fetchFn = async (input, init) => {
      if (init?.method === "POST") await gate;
      return inner(input, init);
    };
    const pending = new AnnotatorSession(
      new ApiClient("http://fake", service.fetchFn));
    await pending.fetchNext();
    pending.setTypedTexts(["cat"]);
    const submitPromise = pending.submit();
    expect(pending.state.busy).toBe(true);
    expect(pending.canSubmit()).toBe(false);
    release();
    expect(await submitPromise).toBe(true);
  });
});

describe("spoken input", () => {
  test("word tokens append normalized texts", async () => {
    const { session } = makeSession();
    await session.fetchNext();
    session.setMode("audio-word");
    session.addSpokenTokens(["stop", "café"]);
    expect(session.state.draft).toEqual(["STOP", "CAF"]);
  });

  test("char tokens assemble with NEXT and digit names", async () => {
    const { service, session } = makeSession();
    await session.fetchNext();
    session.setMode("audio-char");
    session.addSpokenTokens(["h", "i", "NEXT", "o", "k"]);
    session.addSpokenTokens(["seven"]);
    expect(session.state.draft).toEqual(["HI", "OK", "7"]);
    expect(await session.submit()).toBe(true);
    expect(service.records[0].source).toBe("audio-char");
  });

  test("a bad char token surfaces inline and leaves the draft", async () => {
    const { session } = makeSession();
    await session.fetchNext();
    session.setMode("audio-char");
    session.addSpokenTokens(["h", "i"]);
    session.addSpokenTokens(["UMM"]);
    expect(session.state.tokenError).toContain("UMM");
    expect(session.state.draft).toEqual(["HI"]);
    session.addSpokenTokens(["NEXT", "o", "k"]);
    expect(session.state.tokenError).toBeNull();
    expect(session.state.draft).toEqual(["HI", "OK"]);
  });

  test("speech unavailable falls back to typed with a notice", () => {
    const { session } = makeSession();
    session.setMode("audio-word");
    session.fallbackToTyped("speech recognition unavailable");
    expect(session.state.mode).toBe("typed");
    expect(session.state.notice).toContain("unavailable");
  });
});

describe("speech capture wrapper", () => {
  class FakeRecognition {
    continuous = false;
    interimResults = true;
    lang = "";
    onresult: ((event: {
      resultIndex: number;
      results: ArrayLike<{ 0: { transcript: string }; isFinal: boolean }>;
    }) => void) | null = null;
    onerror: ((event: { error: string }) => void) | null = null;
    started = 0;
    stopped = 0;
    start(): void { this.started++; }
    stop(): void { this.stopped++; }
  }

  test("availability reflects the host object", () => {
    expect(speechAvailable({})).toBe(false);
    expect(speechAvailable({ webkitSpeechRecognition: FakeRecognition }))
      .toBe(true);
  });

  test("constructing without the API throws", () => {
    expect(() => new SpeechCapture(() => {}, () => {}, {}))
      .toThrow(SpeechUnavailableError);
  });

  test("final results split into token bursts", () => {
    let instance!: FakeRecognition;
    class Captured extends FakeRecognition {
      constructor() { super(); instance = this; }
    }
    const bursts: string[][] = [];
    const capture = new SpeechCapture(
      (tokens) => bursts.push(tokens), () => {},
      { webkitSpeechRecognition: Captured });
    capture.start();
    expect(instance.started).toBe(1);
    instance.onresult!({
      resultIndex: 0,
      results: [
        { 0: { transcript: "  h i next " }, isFinal: true },
        { 0: { transcript: "ignored interim" }, isFinal: false },
        { 0: { transcript: "o k" }, isFinal: true },
      ],
    });
    expect(bursts).toEqual([["h", "i", "next"], ["o", "k"]]);
    capture.stop();
    expect(instance.stopped).toBe(1);
  });
});
