/**
 * Render query text as highlighted HTML with diagnostic underlines.
 *
 * The output preserves the input text character for character (entities
 * aside), because it sits in an overlay behind a transparent textarea and
 * the two must stay pixel-aligned.
 */

import type { Diagnostic, LexResult } from "./lexer.js";
import { KEYWORDS } from "./lexer.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Offset of the first character of each 1-based line. */
export function lineStartOffsets(text: string): number[] {
  const offsets = [0];
  for (let i = 0; i < text.length; i += 1) {
    if (text[i] === "\n") {
      offsets.push(i + 1);
    }
  }
  return offsets;
}

/** Character offset for a 1-based (line, col) position, clamped into text. */
export function offsetOf(offsets: readonly number[], line: number, col: number): number {
  const base = offsets[Math.min(Math.max(line, 1), offsets.length) - 1] ?? 0;
  return base + Math.max(col, 1) - 1;
}

export interface UnderlineRange {
  start: number;
  end: number;
  message: string;
  severity: "error" | "warning";
}

/**
 * Convert (line, col, len) diagnostics into character ranges. Zero-length
 * spans widen to one character so the underline stays visible.
 */
export function underlineRanges(text: string, diagnostics: readonly Diagnostic[]): UnderlineRange[] {
  const offsets = lineStartOffsets(text);
  const ranges: UnderlineRange[] = [];
  for (const d of diagnostics) {
    const start = Math.min(offsetOf(offsets, d.line, d.col), text.length);
    const end = Math.min(start + Math.max(d.len, 1), Math.max(text.length, start + 1));
    ranges.push({ start, end: Math.max(end, start + 1), message: d.message, severity: d.severity });
  }
  return ranges;
}

function tokenClass(kind: string, value: string | number): string | null {
  switch (kind) {
    case "ident":
      return KEYWORDS.has(String(value)) ? "tok-kw" : null;
    case "string":
      return "tok-str";
    case "int":
    case "float":
      return "tok-num";
    case "punct":
      return "tok-punct";
    default:
      return null;
  }
}

export function renderHighlight(
  text: string,
  lex: LexResult,
  diagnostics: readonly Diagnostic[],
): string {
  const n = text.length;
  const cls: (string | null)[] = new Array(n).fill(null);
  const diagAt: number[] = new Array(n).fill(-1);
  const offsets = lineStartOffsets(text);

  for (const token of lex.tokens) {
    if (token.len === 0) {
      continue;
    }
    const klass = tokenClass(token.kind, token.value);
    if (klass === null) {
      continue;
    }
    const start = offsetOf(offsets, token.line, token.col);
    for (let i = start; i < Math.min(start + token.len, n); i += 1) {
      cls[i] = klass;
    }
  }
  for (const comment of lex.comments) {
    const start = offsetOf(offsets, comment.line, comment.col);
    for (let i = start; i < Math.min(start + comment.len, n); i += 1) {
      cls[i] = "tok-comment";
    }
  }
  const ranges = underlineRanges(text, diagnostics);
  ranges.forEach((range, idx) => {
    for (let i = range.start; i < Math.min(range.end, n); i += 1) {
      if (diagAt[i] === -1) {
        diagAt[i] = idx;
      }
    }
  });

  const parts: string[] = [];
  let i = 0;
  while (i < n) {
    const klass = cls[i] ?? null;
    const diag = diagAt[i] as number;
    let j = i + 1;
    while (j < n && (cls[j] ?? null) === klass && diagAt[j] === diag) {
      j += 1;
    }
    const chunk = escapeHtml(text.slice(i, j));
    const classes: string[] = [];
    if (klass !== null) {
      classes.push(klass);
    }
    let title = "";
    if (diag >= 0) {
      const range = ranges[diag] as UnderlineRange;
      classes.push("diag", `diag-${range.severity}`);
      title = ` title="${escapeHtml(range.message)}"`;
    }
    if (classes.length === 0) {
      parts.push(chunk);
    } else {
      parts.push(`<span class="${classes.join(" ")}"${title}>${chunk}</span>`);
    }
    i = j;
  }
  return parts.join("");
}
