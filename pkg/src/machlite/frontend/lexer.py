"""Hand-written tokenizer for mach-lite source text."""
from __future__ import annotations

from dataclasses import dataclass

from machlite.diagnostics import DiagnosticSink, Loc

KEYWORDS = {
    "gs", "ga", "ls", "uls", "la",
    "f32", "i16",
    "for", "in", "range",
    "exit_if", "reduce", "shift", "take", "put", "gather_mul",
    "row", "col",
    "zeros", "rand", "randint",
    "out", "tmp",
}

# multi-char operators checked before single-char ones
OPERATORS = [
    "+=", "-=", "*=", "/=", ">=", "<=", "==", "!=",
    "+", "-", "*", "/", "=", ">", "<",
    "[", "]", "(", ")", "{", "}", ",", ":", ";", "@",
]


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "keyword" | "int" | "float" | "op" | "newline" | "eof"
    text: str
    loc: Loc

    def __repr__(self) -> str:
        return f"Token({self.kind}, {self.text!r}, {self.loc})"


def tokenize(source: str, sink: DiagnosticSink) -> list[Token]:
    tokens: list[Token] = []
    line = 1
    col = 1
    i = 0
    n = len(source)

    def emit(kind: str, text: str, at_line: int, at_col: int) -> None:
        tokens.append(Token(kind, text, Loc(at_line, at_col)))

    while i < n:
        ch = source[i]
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        if ch == "\n":
            # collapse runs of blank lines into a single separator
            if tokens and tokens[-1].kind not in ("newline",):
                emit("newline", "\n", line, col)
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            start, start_col = i, col
            seen_dot = False
            seen_exp = False
            while i < n:
                c = source[i]
                if c.isdigit():
                    i += 1
                elif c == "." and not seen_dot and not seen_exp:
                    seen_dot = True
                    i += 1
                elif c in "eE" and not seen_exp and i > start:
                    seen_exp = True
                    i += 1
                    if i < n and source[i] in "+-":
                        i += 1
                else:
                    break
            text = source[start:i]
            col += i - start
            emit("float" if (seen_dot or seen_exp) else "int", text, line, start_col)
            continue
        if ch.isalpha() or ch == "_":
            start, start_col = i, col
            while i < n and (source[i].isalnum() or source[i] == "_"):
                i += 1
            text = source[start:i]
            col += i - start
            emit("keyword" if text in KEYWORDS else "ident", text, line, start_col)
            continue
        for op in OPERATORS:
            if source.startswith(op, i):
                emit("op", op, line, col)
                i += len(op)
                col += len(op)
                break
        else:
            sink.error(f"unexpected character {ch!r}", Loc(line, col))
            i += 1
            col += 1

    if tokens and tokens[-1].kind != "newline":
        emit("newline", "\n", line, col)
    emit("eof", "", line, col)
    return tokens
