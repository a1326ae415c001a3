/**
 * Client side of the shared normalization contract.
 *
 * Runs the exact vectors the server's test suite runs; the JSON file
 * is the single source of truth for both.
 */

import { readFileSync } from "node:fs";
import { describe, expect, test } from "vitest";

import { TokenError, assembleTranscript, normalizeText } from "../src/transcript";

interface NormalizeCase {
  input: string;
  expected: string;
}

interface AssembleCase {
  tokens: string[];
  mode: string;
  expected?: string[];
  error?: "token" | "mode" | "empty";
}

const vectors = JSON.parse(readFileSync(
  new URL("../../shared/normalization_vectors.json", import.meta.url),
  "utf8")) as { normalize: NormalizeCase[]; assemble: AssembleCase[] };

describe("normalize vectors", () => {
  for (const c of vectors.normalize) {
    test(JSON.stringify(c.input), () => {
      expect(normalizeText(c.input)).toBe(c.expected);
    });
  }
});

describe("assemble vectors", () => {
  for (const c of vectors.assemble) {
    test(`${c.mode}: ${c.tokens.join(" ") || "(empty)"}`, () => {
      if (c.error === "token") {
        expect(() => assembleTranscript(c.tokens, c.mode)).toThrow(TokenError);
      } else if (c.error) {
        expect(() => assembleTranscript(c.tokens, c.mode)).toThrow();
      } else {
        expect(assembleTranscript(c.tokens, c.mode)).toEqual(c.expected);
      }
    });
  }
});

test("vector file covers both modes and error cases", () => {
  const modes = new Set(vectors.assemble.map((c) => c.mode));
  expect(modes.has("word")).toBe(true);
  expect(modes.has("char")).toBe(true);
  expect(vectors.assemble.some((c) => c.error !== undefined)).toBe(true);
});
