/**
 * Transcript normalization, behavior-identical to the server.
 *
 * The contract is pinned by shared/normalization_vectors.json, which
 * both this module's tests and the server's test suite consume. Any
 * divergence (uppercasing quirks, code-point counting, digit names,
 * separator handling) fails a test on one side instead of silently
 * corrupting annotations.
 */

export const SEPARATOR = "NEXT";

export const CHARS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

export const DIGIT_NAMES: Record<string, string> = {
  ZERO: "0", ONE: "1", TWO: "2", THREE: "3", FOUR: "4",
  FIVE: "5", SIX: "6", SEVEN: "7", EIGHT: "8", NINE: "9",
};

const ALPHABET = new Set(CHARS);

/** A char-mode token that is not a character, digit name, or NEXT. */
export class TokenError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "TokenError";
  }
}

/** Uppercase and drop everything outside the alphabet. */
export function normalizeText(s: string): string {
  let out = "";
  for (const ch of s.toUpperCase()) {
    if (ALPHABET.has(ch)) out += ch;
  }
  return out;
}

/**
 * Token stream -> list of instance texts.
 *
 * word mode: one normalized text per token. char mode: concatenate
 * single characters and digit names, split instances on NEXT. Either
 * way, empty results are dropped.
 */
export function assembleTranscript(tokens: readonly string[],
                                   mode: string): string[] {
  if (tokens.length === 0) {
    throw new Error("token sequence is empty");
  }
  let texts: string[];
  if (mode === "word") {
    texts = tokens.map(normalizeText);
  } else if (mode === "char") {
    const groups: string[][] = [[]];
    for (const token of tokens) {
      const up = token.toUpperCase();
      if (up === SEPARATOR) {
        groups.push([]);
      } else if (up in DIGIT_NAMES) {
        groups[groups.length - 1].push(DIGIT_NAMES[up]);
      } else if ([...up].length === 1) {
        // code-point length, so an expanding uppercase ("ß" -> "SS")
        // is rejected exactly like on the server
        groups[groups.length - 1].push(normalizeText(up));
      } else {
        throw new TokenError(
          `char-mode token ${JSON.stringify(token)} is not a single ` +
          `character, a digit name (ZERO..NINE), or ${SEPARATOR}`);
      }
    }
    texts = groups.map((g) => normalizeText(g.join("")));
  } else {
    throw new Error(`mode must be 'word' or 'char', got ${JSON.stringify(mode)}`);
  }
  return texts.filter((t) => t.length > 0);
}
