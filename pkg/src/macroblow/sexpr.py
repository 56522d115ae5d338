"""Reading, printing and measuring S-expressions.

Trees are plain Python values: ``Symbol`` for symbols, ``int`` for
integers, ``str`` for strings and ``tuple`` for proper lists.  The empty
tuple is ``nil``.  Reader sugar (``'x``, `` `x ``, ``,x``, ``,@x``) becomes
a two-element list headed by the corresponding marker symbol.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

__all__ = [
    "Symbol", "SExpr", "NIL", "T", "QUOTE", "QUASIQUOTE", "UNQUOTE",
    "UNQUOTE_SPLICING", "SourceSpan", "ParseError", "UnbalancedParen",
    "UnterminatedString", "StrayUnquote", "DottedPair", "ReservedCharacter",
    "sym", "parse", "parse_one", "to_string", "pformat", "node_count",
    "is_list", "iter_subforms",
]


@dataclass(frozen=True, slots=True)
class Symbol:
    name: str

    def __repr__(self) -> str:
        return self.name

    @property
    def is_gensym(self) -> bool:
        return self.name.startswith(GENSYM_MARK)


SExpr = Union[Symbol, int, str, tuple]

# Plain tokens may not contain this; only gensyms (and the explicit
# ``#:name`` syntax used when re-reading printed gensyms) carry it.
GENSYM_MARK = "#:"

NIL: tuple = ()
_symbols: dict[str, Symbol] = {}


def sym(name: str) -> Symbol:
    s = _symbols.get(name)
    if s is None:
        s = _symbols[name] = Symbol(name)
    return s


T = sym("t")
QUOTE = sym("quote")
QUASIQUOTE = sym("quasiquote")
UNQUOTE = sym("unquote")
UNQUOTE_SPLICING = sym("unquote-splicing")

_SUGAR = {QUOTE: "'", QUASIQUOTE: "`", UNQUOTE: ",", UNQUOTE_SPLICING: ",@"}


@dataclass(frozen=True, slots=True)
class SourceSpan:
    file: str
    start: int
    end: int

    def __str__(self) -> str:
        return f"{self.file}:{self.start}-{self.end}"


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan):
        super().__init__(f"{span}: {message}")
        self.span = span


class UnbalancedParen(ParseError):
    pass


class UnterminatedString(ParseError):
    pass


class StrayUnquote(ParseError):
    pass


class DottedPair(ParseError):
    pass


class ReservedCharacter(ParseError):
    pass


_DELIMS = set("()'`,\";") | set(" \t\n\r\f\v")


class _Reader:
    def __init__(self, text: str, file: str):
        self.text = text
        self.file = file
        self.pos = 0
        self.qq_depth = 0
        # character offset -> byte offset, only needed for non-ASCII input
        self._bytes = None
        if not text.isascii():
            acc, table = 0, [0]
            for ch in text:
                acc += len(ch.encode("utf-8"))
                table.append(acc)
            self._bytes = table

    def span(self, start: int, end: int | None = None) -> SourceSpan:
        end = self.pos if end is None else end
        if self._bytes is not None:
            start, end = self._bytes[start], self._bytes[end]
        return SourceSpan(self.file, start, end)

    def skip_ws(self) -> None:
        text, n = self.text, len(self.text)
        while self.pos < n:
            ch = text[self.pos]
            if ch == ";":
                nl = text.find("\n", self.pos)
                self.pos = n if nl < 0 else nl + 1
            elif ch.isspace():
                self.pos += 1
            else:
                return

    def read_all(self) -> list[tuple[SExpr, SourceSpan]]:
        out = []
        while True:
            self.skip_ws()
            if self.pos >= len(self.text):
                return out
            start = self.pos
            form = self.read()
            out.append((form, self.span(start)))

    def read(self) -> SExpr:
        self.skip_ws()
        text = self.text
        if self.pos >= len(text):
            raise UnbalancedParen("unexpected end of input", self.span(self.pos))
        start = self.pos
        ch = text[start]
        if ch == "(":
            return self.read_list()
        if ch == ")":
            raise UnbalancedParen("unexpected ')'", self.span(start, start + 1))
        if ch == "'":
            self.pos += 1
            return (QUOTE, self.read_payload(start))
        if ch == "`":
            self.pos += 1
            self.qq_depth += 1
            try:
                return (QUASIQUOTE, self.read_payload(start))
            finally:
                self.qq_depth -= 1
        if ch == ",":
            splicing = text.startswith(",@", start)
            self.pos += 2 if splicing else 1
            if self.qq_depth == 0:
                raise StrayUnquote("comma outside backquote", self.span(start))
            self.qq_depth -= 1
            try:
                payload = self.read_payload(start)
            finally:
                self.qq_depth += 1
            return (UNQUOTE_SPLICING if splicing else UNQUOTE, payload)
        if ch == '"':
            return self.read_string()
        return self.read_atom()

    def read_payload(self, start: int) -> SExpr:
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] == ")":
            raise UnbalancedParen("reader sugar without a form", self.span(start))
        return self.read()

    def read_list(self) -> tuple:
        start = self.pos
        self.pos += 1
        items = []
        while True:
            self.skip_ws()
            if self.pos >= len(self.text):
                raise UnbalancedParen("unclosed '('", self.span(start))
            if self.text[self.pos] == ")":
                self.pos += 1
                return tuple(items)
            items.append(self.read())

    def read_string(self) -> str:
        start = self.pos
        self.pos += 1
        chars = []
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch == "\\" and self.pos + 1 < len(text):
                chars.append(text[self.pos + 1])
                self.pos += 2
            elif ch == '"':
                self.pos += 1
                return "".join(chars)
            else:
                chars.append(ch)
                self.pos += 1
        raise UnterminatedString("unterminated string", self.span(start))

    def read_atom(self) -> SExpr:
        start = self.pos
        text = self.text
        gensym = text.startswith(GENSYM_MARK, start)
        if gensym:
            self.pos += len(GENSYM_MARK)
        while self.pos < len(text) and text[self.pos] not in _DELIMS:
            self.pos += 1
        token = text[start:self.pos]
        if gensym:
            if len(token) == len(GENSYM_MARK) or "#" in token[2:]:
                raise ReservedCharacter(f"bad gensym token {token!r}", self.span(start))
            return sym(token.lower())
        if "#" in token:
            raise ReservedCharacter(f"'#' is reserved: {token!r}", self.span(start))
        if token == ".":
            raise DottedPair("dotted pairs are not supported", self.span(start))
        try:
            return int(token)
        except ValueError:
            pass
        token = token.lower()
        if token == "nil":
            return NIL
        return sym(token)


def parse(text: str, file: str = "<string>") -> list[tuple[SExpr, SourceSpan]]:
    """Read every toplevel form in ``text`` together with its source span."""
    return _Reader(text, file).read_all()


def parse_one(text: str) -> SExpr:
    forms = parse(text)
    if len(forms) != 1:
        raise ValueError(f"expected exactly one form, got {len(forms)}")
    return forms[0][0]


def _escape(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_string(form: SExpr) -> str:
    """Canonical single-line rendering; marker lists are re-sugared."""
    if isinstance(form, Symbol):
        return form.name
    if isinstance(form, bool):
        raise TypeError("booleans are not S-expressions")
    if isinstance(form, int):
        return str(form)
    if isinstance(form, str):
        return _escape(form)
    if isinstance(form, tuple):
        if not form:
            return "nil"
        if len(form) == 2 and form[0] in _SUGAR:
            return _SUGAR[form[0]] + to_string(form[1])
        return "(" + " ".join(to_string(x) for x in form) + ")"
    raise TypeError(f"not an S-expression: {form!r}")


def pformat(form: SExpr, width: int = 78, indent: int = 0) -> str:
    """Multi-line layout that breaks lists which do not fit in ``width``."""
    flat = to_string(form)
    if len(flat) + indent <= width or not isinstance(form, tuple) or not form:
        return flat
    if len(form) == 2 and form[0] in _SUGAR:
        prefix = _SUGAR[form[0]]
        return prefix + pformat(form[1], width, indent + len(prefix))
    head = to_string(form[0]) if not isinstance(form[0], tuple) else None
    if head is None:
        inner = indent + 1
        parts = [pformat(x, width, inner) for x in form]
        return "(" + ("\n" + " " * inner).join(parts) + ")"
    inner = indent + 2
    keep = _HEAD_LINE_ARGS.get(head, 0)
    lead = [to_string(x) for x in form[1:1 + keep]]
    opener = " ".join(["(" + head] + lead)
    if keep and len(opener) + indent <= width and len(form) > 1 + keep:
        parts = [pformat(x, width, inner) for x in form[1 + keep:]]
        return opener + "\n" + " " * inner + ("\n" + " " * inner).join(parts) + ")"
    parts = [pformat(x, width, inner) for x in form[1:]]
    return "(" + head + "\n" + " " * inner + ("\n" + " " * inner).join(parts) + ")"


# operators whose first arguments stay on the operator's line
_HEAD_LINE_ARGS = {
    "defmacro": 2, "defun": 2, "lambda": 1, "let": 1, "let*": 1, "flet": 1,
    "labels": 1, "progv": 2, "if": 1, "when": 1, "unless": 1, "defvar": 1,
    "defparameter": 1, "setq": 1,
}


def node_count(form: SExpr) -> int:
    """Atoms plus cons cells; the list terminator is not counted."""
    if isinstance(form, tuple) and form:
        return len(form) + sum(node_count(x) for x in form)
    return 1


def is_list(form: SExpr) -> bool:
    return isinstance(form, tuple)


def iter_subforms(form: SExpr) -> Iterator[SExpr]:
    """Pre-order walk over every subtree, including ``form`` itself."""
    stack = [form]
    while stack:
        f = stack.pop()
        yield f
        if isinstance(f, tuple):
            stack.extend(reversed(f))
