/**
 * Client-side BIO tag validation, kept in exact agreement with the server's
 * validator. Both sides are tested against shared/bio_vectors.json, so a
 * submission enabled here is never rejected by the service for BIO validity.
 */

export type BioResult =
  | { valid: true }
  | { valid: false; reason: string; position: number };

type ParsedTag = { prefix: "B" | "I" | null; etype: string | null };

const OUTSIDE = "O";

function parseTag(raw: string): ParsedTag | null {
  if (raw === OUTSIDE) {
    return { prefix: null, etype: null };
  }
  if (raw.length > 2 && (raw[0] === "B" || raw[0] === "I") && raw[1] === "-") {
    return { prefix: raw[0] as "B" | "I", etype: raw.slice(2) };
  }
  return null;
}

/** Check the BIO chain rule: I-X must follow B-X or I-X of the same type. */
export function validateBio(tags: readonly string[]): BioResult {
  let prevEtype: string | null = null;
  for (let pos = 0; pos < tags.length; pos++) {
    const raw = tags[pos] as string;
    const parsed = parseTag(raw);
    if (parsed === null) {
      return {
        valid: false,
        reason: `malformed tag ${JSON.stringify(raw)}`,
        position: pos,
      };
    }
    if (parsed.prefix === "I" && parsed.etype !== prevEtype) {
      return {
        valid: false,
        reason: `invalid BIO transition to ${JSON.stringify(raw)} at position ${pos}`,
        position: pos,
      };
    }
    prevEtype = parsed.prefix !== null ? parsed.etype : null;
  }
  return { valid: true };
}

/** Entity types mentioned by a tag sequence, in first-appearance order. */
export function entityTypes(tags: readonly string[]): string[] {
  const seen: string[] = [];
  for (const raw of tags) {
    const parsed = parseTag(raw);
    if (parsed?.etype && !seen.includes(parsed.etype)) {
      seen.push(parsed.etype);
    }
  }
  return seen;
}
