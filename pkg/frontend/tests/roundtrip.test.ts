/**
 * End-to-end round trip against the real annotation service.
 *
 * Spawns the Python CLI to synthesize a 10-image queue and serve it,
 * then drives a scripted AnnotatorSession through the whole queue and
 * checks the JSONL store gained exactly 10 valid records. A second
 * scenario restarts the server mid-session and checks the queue
 * resumes without re-assigning stored work.
 */

import { ChildProcess, spawn, spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, expect, test } from "vitest";

import { ApiClient } from "../src/api";
import { AnnotatorSession } from "../src/session";

interface Server {
  proc: ChildProcess;
  baseUrl: string;
}

function synthDataset(dir: string, count: number, seed: number): string {
  const result = spawnSync("python3", [
    "-m", "textspot.cli", "synth",
    "--out", dir, "--count", String(count), "--seed", String(seed),
  ], { encoding: "utf8" });
  expect(result.status, result.stderr).toBe(0);
  return join(dir, "images");
}

function startServer(imagesDir: string, outPath: string): Promise<Server> {
  const proc = spawn("python3", [
    "-m", "textspot.cli", "annotate", "serve",
    "--images", imagesDir, "--out", outPath, "--port", "0",
  ], { stdio: ["ignore", "pipe", "pipe"] });
  return new Promise((resolve, reject) => {
    let out = "";
    let err = "";
    const timer = setTimeout(
      () => reject(new Error(`server start timeout\n${out}${err}`)), 60_000);
    proc.stdout!.on("data", (chunk: Buffer) => {
      out += chunk.toString();
      const m = out.match(/serving annotations on (http:\/\/\S+)/);
      if (m) {
        clearTimeout(timer);
        resolve({ proc, baseUrl: m[1] });
      }
    });
    proc.stderr!.on("data", (chunk: Buffer) => { err += chunk.toString(); });
    proc.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited early (${code})\n${out}${err}`));
    });
  });
}

function stopServer(server: Server): Promise<void> {
  return new Promise((resolve) => {
    server.proc.once("exit", () => resolve());
    server.proc.kill();
  });
}

let tenDir: string;
let tenOut: string;
let tenServer: Server;

beforeAll(async () => {
  tenDir = mkdtempSync(join(tmpdir(), "annot-e2e-"));
  const images = synthDataset(join(tenDir, "data"), 10, 7);
  tenOut = join(tenDir, "annotations.jsonl");
  tenServer = await startServer(images, tenOut);
});

afterAll(async () => {
  if (tenServer) await stopServer(tenServer);
});

test("scripted 10-image session appends exactly 10 valid records", async () => {
  const api = new ApiClient(tenServer.baseUrl);
  const session = new AnnotatorSession(api);
  await session.fetchNext();
  expect(session.state.task?.image_id).not.toBeNull();

  // the image endpoint serves real PNG bytes for the first task
  const imgRes = await fetch(api.imageUrl(session.state.task!));
  expect(imgRes.status).toBe(200);
  expect(imgRes.headers.get("content-type")).toBe("image/png");
  const magic = new Uint8Array(await imgRes.arrayBuffer()).slice(0, 4);
  expect([...magic]).toEqual([0x89, 0x50, 0x4e, 0x47]);

  let round = 0;
  while (!session.state.done) {
    round += 1;
    expect(round).toBeLessThanOrEqual(10);
    if (round % 2 === 1) {
      session.setMode("typed");
      session.setTypedTexts([`word${round}`, "extra"]);
    } else {
      session.setMode("audio-char");
      session.addSpokenTokens(["c", "a", "t", "NEXT", String(round % 10)]);
    }
    expect(session.canSubmit()).toBe(true);
    expect(await session.submit()).toBe(true);
    expect(session.state.banner).toBeNull();
  }

  expect(round).toBe(10);
  expect(session.state.progress).toEqual({ done: 10, total: 10 });

  const lines = readFileSync(tenOut, "utf8").trim().split("\n");
  expect(lines).toHaveLength(10);
  const seen = new Set<string>();
  for (const line of lines) {
    const rec = JSON.parse(line) as Record<string, unknown>;
    expect(Object.keys(rec).sort())
      .toEqual(["created_at", "image_id", "source", "texts"]);
    expect(typeof rec.image_id).toBe("string");
    expect(["typed", "audio-char"]).toContain(rec.source);
    const texts = rec.texts as string[];
    expect(texts.length).toBeGreaterThan(0);
    for (const t of texts) expect(t).toMatch(/^[A-Z0-9]+$/);
    seen.add(rec.image_id as string);
  }
  expect(seen.size).toBe(10); // one record per distinct image
});

test("server restart resumes the queue without duplicates", async () => {
  const dir = mkdtempSync(join(tmpdir(), "annot-restart-"));
  const images = synthDataset(join(dir, "data"), 3, 9);
  const out = join(dir, "annotations.jsonl");

  const first = await startServer(images, out);
  const session = new AnnotatorSession(new ApiClient(first.baseUrl));
  await session.fetchNext();
  const done = session.state.task!.image_id!;
  session.setTypedTexts(["ok"]);
  expect(await session.submit()).toBe(true);
  const inFlight = session.state.task!.image_id!;
  expect(inFlight).not.toBe(done);
  await stopServer(first);

  const second = await startServer(images, out);
  const resumed = new AnnotatorSession(new ApiClient(second.baseUrl));
  await resumed.fetchNext();
  // the stored annotation survives the restart; the in-flight (leased
  // but unsubmitted) image is offered again rather than skipped
  expect(resumed.state.progress).toEqual({ done: 1, total: 3 });
  expect(resumed.state.task?.image_id).toBe(inFlight);
  await stopServer(second);
});
