"""Tokenizer.

Every word lexes as an identifier; keywords are contextual and resolved by
the parser, which is what lets `min` act as both a duration unit and an
aggregate name. Arrows `->` and `<-` are only recognized when immediately
followed by `[` so that comparisons against negative numbers keep working.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

from .ast import Diagnostic


class TokenKind(str, Enum):
    IDENT = "ident"
    INT = "int"
    FLOAT = "float"
    STRING = "string"
    PUNCT = "punct"
    EOF = "eof"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    value: Union[str, int, float]
    line: int  # 1-based
    col: int  # 1-based
    length: int


TWO_CHAR = ("<=", ">=", "!=", "&&", "||")
ONE_CHAR = "()[]{},.:=<>+-*/"


def tokenize(text: str) -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    i = 0
    line = 1
    col = 1
    n = len(text)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
                col += 1
            continue
        if ch == '"':
            start, ln, cl = i, line, col
            i += 1
            col += 1
            buf = []
            closed = False
            while i < n and text[i] != "\n":
                c = text[i]
                if c == "\\" and i + 1 < n and text[i + 1] in ('"', "\\"):
                    buf.append(text[i + 1])
                    i += 2
                    col += 2
                    continue
                if c == '"':
                    i += 1
                    col += 1
                    closed = True
                    break
                buf.append(c)
                i += 1
                col += 1
            if not closed:
                diags.append(Diagnostic("error", "unterminated string literal",
                                        ln, cl, i - start))
            tokens.append(Token(TokenKind.STRING, "".join(buf), ln, cl, i - start))
            continue
        if ch.isdigit():
            start, ln, cl = i, line, col
            while i < n and text[i].isdigit():
                i += 1
                col += 1
            is_float = False
            if i + 1 < n and text[i] == "." and text[i + 1].isdigit():
                is_float = True
                i += 1
                col += 1
                while i < n and text[i].isdigit():
                    i += 1
                    col += 1
            raw = text[start:i]
            tokens.append(Token(TokenKind.FLOAT if is_float else TokenKind.INT,
                                float(raw) if is_float else int(raw),
                                ln, cl, i - start))
            continue
        if ch.isalpha() or ch == "_":
            start, ln, cl = i, line, col
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
                col += 1
            tokens.append(Token(TokenKind.IDENT, text[start:i], ln, cl, i - start))
            continue
        two = text[i:i + 2]
        if two in ("->", "<-") and text[i + 2:i + 3] == "[":
            tokens.append(Token(TokenKind.PUNCT, two, line, col, 2))
            i += 2
            col += 2
            continue
        if two in TWO_CHAR:
            tokens.append(Token(TokenKind.PUNCT, two, line, col, 2))
            i += 2
            col += 2
            continue
        if ch in ONE_CHAR:
            tokens.append(Token(TokenKind.PUNCT, ch, line, col, 1))
            i += 1
            col += 1
            continue
        diags.append(Diagnostic("error", f"unexpected character {ch!r}", line, col, 1))
        i += 1
        col += 1

    tokens.append(Token(TokenKind.EOF, "", line, col, 0))
    return tokens, diags
