from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List

from .ast import Span


class MoveSyntaxError(Exception):
    def __init__(self, span: Span, message: str):
        super().__init__(f"{span}: {message}")
        self.span = span
        self.message = message


class UnsupportedConstruct(MoveSyntaxError):
    def __init__(self, span: Span, construct: str, message: str = ""):
        super().__init__(span, message or f"unsupported construct: {construct}")
        self.construct = construct


@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, addr, bytes, punct, eof
    text: str
    line: int
    col: int

    @property
    def span(self) -> Span:
        return Span(self.line, self.col, self.line, self.col + len(self.text))


_PUNCT = [
    "==>", "<==>", "::", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>",
    "+", "-", "*", "/", "%", "&", "|", "^", "!", "<", ">", "=",
    "(", ")", "{", "}", "[", "]", ",", ";", ":", ".", "#",
]
_PUNCT.sort(key=len, reverse=True)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<line_comment>//[^\n]*)
  | (?P<block_comment>/\*)
  | (?P<bytes>[bx]"(?:[^"\\]|\\.)*")
  | (?P<addr>@(?:0x[0-9a-fA-F_]+|[A-Za-z_][A-Za-z0-9_]*))
  | (?P<int>(?:0x[0-9a-fA-F_]+|[0-9][0-9_]*)(?:u8|u16|u32|u64|u128|u256)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>"""
    + "|".join(re.escape(p) for p in _PUNCT)
    + r""")
    """,
    re.VERBOSE,
)


def tokenize(source: str) -> List[Token]:
    tokens: List[Token] = []
    pos = 0
    line, col = 1, 1
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise MoveSyntaxError(Span(line, col, line, col + 1),
                                  f"unexpected character {source[pos]!r}")
        kind = m.lastgroup
        text = m.group()
        if kind == "block_comment":
            end = source.find("*/", pos + 2)
            if end < 0:
                raise MoveSyntaxError(Span(line, col, line, col + 2), "unterminated block comment")
            text = source[pos:end + 2]
        elif kind not in ("ws", "line_comment"):
            tokens.append(Token(kind, text, line, col))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos += len(text)
    tokens.append(Token("eof", "", line, col))
    return tokens
