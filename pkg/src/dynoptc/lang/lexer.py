"""Tokenizer for the mini kernel language."""

from __future__ import annotations

from dataclasses import dataclass


class LangError(Exception):
    """Parse or validation diagnostic with a source location and category."""

    def __init__(self, message: str, line: int, col: int,
                 severity: str = "error", source_name: str = "<input>",
                 category: str = "semantic"):
        self.message = message
        self.line = line
        self.col = col
        self.severity = severity
        self.source_name = source_name
        self.category = category
        super().__init__(self.render())

    def render(self) -> str:
        return f"{self.source_name}:{self.line}:{self.col}: {self.severity}: {self.message}"


KEYWORDS = {
    "kernel", "device", "global", "const", "shared", "extern",
    "int", "long", "float", "void",
    "if", "else", "while", "for", "return",
    "launch", "barrier", "fence", "phase",
    "atomic_add", "atomic_max", "atomic_cas",
    "ceil", "ballot", "shfl",
    "dim3",
}

MULTI_CHAR = ("<<<", ">>>", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=")
SINGLE_CHAR = "+-*/%<>=!&|^(){}[],;."


@dataclass(frozen=True, slots=True)
class Token:
    kind: str   # ident | keyword | int | float | punct | eof
    text: str
    line: int
    col: int

    @property
    def int_value(self) -> int:
        return int(self.text, 0)

    @property
    def float_value(self) -> float:
        return float(self.text.rstrip("f"))


def tokenize(src: str, source_name: str = "<input>") -> list[Token]:
    toks: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        if src.startswith("/*", i):
            start_line, start_col = line, col
            i += 2
            col += 2
            while i < n and not src.startswith("*/", i):
                if src[i] == "\n":
                    line += 1
                    col = 1
                else:
                    col += 1
                i += 1
            if i >= n:
                raise LangError("unterminated block comment", start_line,
                                start_col, source_name=source_name)
            i += 2
            col += 2
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            text = src[i:j]
            kind = "keyword" if text in KEYWORDS else "ident"
            toks.append(Token(kind, text, line, col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            is_float = False
            while j < n and src[j].isdigit():
                j += 1
            if j < n and src[j] == "." and j + 1 < n and src[j + 1].isdigit():
                is_float = True
                j += 1
                while j < n and src[j].isdigit():
                    j += 1
            if j < n and src[j] in "eE" and is_float:
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            if j < n and src[j] == "f" and is_float:
                j += 1
            if j < n and src[j] in "Ll" and not is_float:
                j += 1
            text = src[i:j]
            toks.append(Token("float" if is_float else "int", text, line, col))
            col += j - i
            i = j
            continue
        matched = None
        for m in MULTI_CHAR:
            if src.startswith(m, i):
                matched = m
                break
        if matched is not None:
            toks.append(Token("punct", matched, line, col))
            i += len(matched)
            col += len(matched)
            continue
        if c in SINGLE_CHAR:
            toks.append(Token("punct", c, line, col))
            i += 1
            col += 1
            continue
        raise LangError(f"unexpected character {c!r}", line, col,
                        source_name=source_name)
    toks.append(Token("eof", "", line, col))
    return toks
