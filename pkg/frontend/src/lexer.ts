/**
 * Tokenizer mirroring the server's lexical rules.
 *
 * The server owns the grammar; this module only has to agree with it about
 * token boundaries so highlighting and diagnostic underlines line up with
 * what /api/check reports. Parity is pinned by fixtures/golden-tokens.json,
 * which both sides regenerate and compare against in their test suites.
 *
 * Every word lexes as an identifier; keywords are contextual. Arrows `->`
 * and `<-` are only recognized when immediately followed by `[` so that
 * comparisons against negative numbers keep working.
 */

export type TokenKind = "ident" | "int" | "float" | "string" | "punct" | "eof";

export interface Token {
  kind: TokenKind;
  value: string | number;
  /** 1-based. */
  line: number;
  /** 1-based column in characters. */
  col: number;
  /** Raw span length in characters. */
  len: number;
}

export interface Diagnostic {
  severity: "error" | "warning";
  message: string;
  line: number;
  col: number;
  len: number;
}

/** Comment spans never reach the parser; the highlighter still wants them. */
export interface CommentSpan {
  line: number;
  col: number;
  len: number;
}

export interface LexResult {
  tokens: Token[];
  diagnostics: Diagnostic[];
  comments: CommentSpan[];
}

const TWO_CHAR = new Set(["<=", ">=", "!=", "&&", "||"]);
const ONE_CHAR = new Set("()[]{},.:=<>+-*/");

const DIGIT = /^[0-9]$/;
const ALPHA = /^[\p{L}_]$/u;
const ALNUM = /^[\p{L}\p{N}_]$/u;

/**
 * Words the parser treats as reserved. The lexer itself emits them as plain
 * identifiers; the highlighter uses this set to pick the keyword class.
 */
export const KEYWORDS: ReadonlySet<string> = new Set([
  "proc", "process", "file", "ip",
  "read", "write", "execute", "start", "end", "rename", "delete",
  "connect", "accept",
  "avg", "sum", "count", "min", "max",
  "ms", "sec", "hour", "day",
  "with", "return", "distinct", "as", "before", "after", "group", "by",
  "having", "window", "step", "forward", "backward", "at", "from", "to",
  "agentid", "like", "and", "or", "not",
]);

/* Single-character repr matching the server's error message formatting. */
function charRepr(ch: string): string {
  if (ch === "'") return '"\'"';
  let body: string;
  const code = ch.codePointAt(0) ?? 0;
  if (ch === "\\") {
    body = "\\\\";
  } else if (code < 0x20 || (code >= 0x7f && code <= 0xa0)) {
    body = code < 0x100
      ? "\\x" + code.toString(16).padStart(2, "0")
      : "\\u" + code.toString(16).padStart(4, "0");
  } else {
    body = ch;
  }
  return "'" + body + "'";
}

export function tokenize(text: string): LexResult {
  const tokens: Token[] = [];
  const diagnostics: Diagnostic[] = [];
  const comments: CommentSpan[] = [];
  let i = 0;
  let line = 1;
  let col = 1;
  const n = text.length;

  while (i < n) {
    const ch = text[i] as string;
    if (ch === "\n") {
      i += 1;
      line += 1;
      col = 1;
      continue;
    }
    if (ch === " " || ch === "\t" || ch === "\r") {
      i += 1;
      col += 1;
      continue;
    }
    if (ch === "/" && text[i + 1] === "/") {
      const start = i;
      const ln = line;
      const cl = col;
      while (i < n && text[i] !== "\n") {
        i += 1;
        col += 1;
      }
      comments.push({ line: ln, col: cl, len: i - start });
      continue;
    }
    if (ch === '"') {
      const start = i;
      const ln = line;
      const cl = col;
      i += 1;
      col += 1;
      let buf = "";
      let closed = false;
      while (i < n && text[i] !== "\n") {
        const c = text[i] as string;
        if (c === "\\" && i + 1 < n && (text[i + 1] === '"' || text[i + 1] === "\\")) {
          buf += text[i + 1];
          i += 2;
          col += 2;
          continue;
        }
        if (c === '"') {
          i += 1;
          col += 1;
          closed = true;
          break;
        }
        buf += c;
        i += 1;
        col += 1;
      }
      if (!closed) {
        diagnostics.push({
          severity: "error",
          message: "unterminated string literal",
          line: ln,
          col: cl,
          len: i - start,
        });
      }
      tokens.push({ kind: "string", value: buf, line: ln, col: cl, len: i - start });
      continue;
    }
    if (DIGIT.test(ch)) {
      const start = i;
      const ln = line;
      const cl = col;
      while (i < n && DIGIT.test(text[i] as string)) {
        i += 1;
        col += 1;
      }
      let isFloat = false;
      if (i + 1 < n && text[i] === "." && DIGIT.test(text[i + 1] as string)) {
        isFloat = true;
        i += 1;
        col += 1;
        while (i < n && DIGIT.test(text[i] as string)) {
          i += 1;
          col += 1;
        }
      }
      const raw = text.slice(start, i);
      tokens.push({
        kind: isFloat ? "float" : "int",
        value: Number(raw),
        line: ln,
        col: cl,
        len: i - start,
      });
      continue;
    }
    if (ALPHA.test(ch)) {
      const start = i;
      const ln = line;
      const cl = col;
      while (i < n && ALNUM.test(text[i] as string)) {
        i += 1;
        col += 1;
      }
      tokens.push({ kind: "ident", value: text.slice(start, i), line: ln, col: cl, len: i - start });
      continue;
    }
    const two = text.slice(i, i + 2);
    if ((two === "->" || two === "<-") && text.slice(i + 2, i + 3) === "[") {
      tokens.push({ kind: "punct", value: two, line, col, len: 2 });
      i += 2;
      col += 2;
      continue;
    }
    if (TWO_CHAR.has(two)) {
      tokens.push({ kind: "punct", value: two, line, col, len: 2 });
      i += 2;
      col += 2;
      continue;
    }
    if (ONE_CHAR.has(ch)) {
      tokens.push({ kind: "punct", value: ch, line, col, len: 1 });
      i += 1;
      col += 1;
      continue;
    }
    diagnostics.push({
      severity: "error",
      message: `unexpected character ${charRepr(ch)}`,
      line,
      col,
      len: 1,
    });
    i += 1;
    col += 1;
  }

  tokens.push({ kind: "eof", value: "", line, col, len: 0 });
  return { tokens, diagnostics, comments };
}
