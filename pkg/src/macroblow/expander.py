"""Macro definitions, quasiquote templates and instrumented expansion."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .sexpr import (
    GENSYM_MARK, NIL, QUASIQUOTE, QUOTE, UNQUOTE, UNQUOTE_SPLICING, SExpr,
    SourceSpan, Symbol, node_count, sym, to_string,
)

DEFMACRO = sym("defmacro")
PROGN = sym("progn")
AMP_BODY = sym("&body")

DEFAULT_EXPANSION_CAP = 10_000


class MacroError(Exception):
    """Base class for definition and expansion errors."""


class MalformedLambdaList(MacroError):
    pass


class DuplicateParam(MacroError):
    def __init__(self, param: Symbol):
        super().__init__(f"duplicate parameter {param.name}")
        self.param = param


class MissingBodyParam(MacroError):
    pass


class MalformedTemplate(MacroError):
    pass


class UnboundTemplateVar(MacroError):
    def __init__(self, var: SExpr):
        super().__init__(f"unbound template variable {to_string(var)}")
        self.var = var


class NestedQuasiquote(MacroError):
    def __init__(self, span: Optional[SourceSpan] = None):
        super().__init__(f"nested quasiquote in template{f' at {span}' if span else ''}")
        self.span = span


class SpliceOutsideList(MacroError):
    pass


class ArityMismatch(MacroError):
    def __init__(self, macro: Symbol, expected: str, got: int):
        super().__init__(f"{macro.name}: expected {expected}, got {got} argument(s)")
        self.macro, self.expected, self.got = macro, expected, got


class ExpansionDepthExceeded(MacroError):
    pass


@dataclass(frozen=True)
class MacroDef:
    name: Symbol
    params: tuple[Symbol, ...]
    body_param: Symbol
    template: SExpr
    splice_count: int
    # ``((x) &body b)`` takes an argument group, ``(&body b)`` does not
    has_group: bool = True
    span: Optional[SourceSpan] = field(default=None, compare=False)

    def lambda_list(self) -> tuple:
        tail = (AMP_BODY, self.body_param)
        return ((self.params,) + tail) if self.has_group else tail

    def to_form(self) -> tuple:
        return (DEFMACRO, self.name, self.lambda_list(), self.template)

    def replace_template(self, template: SExpr) -> "MacroDef":
        _check_template(template, self.params, self.body_param)
        return MacroDef(self.name, self.params, self.body_param, template,
                        count_splices(template, self.body_param), self.has_group,
                        self.span)


MacroEnv = dict  # Symbol -> MacroDef, insertion ordered


@dataclass
class ExpansionStats:
    invocations: Counter = field(default_factory=Counter)
    nodes_before: int = 0
    nodes_after: int = 0
    max_depth: dict = field(default_factory=dict)

    @property
    def total_invocations(self) -> int:
        return sum(self.invocations.values())

    def merge(self, other: "ExpansionStats") -> "ExpansionStats":
        depth = dict(self.max_depth)
        for k, v in other.max_depth.items():
            depth[k] = max(depth.get(k, 0), v)
        return ExpansionStats(self.invocations + other.invocations,
                              self.nodes_before + other.nodes_before,
                              self.nodes_after + other.nodes_after, depth)

    def to_json(self) -> dict:
        return {
            "invocations": {k.name: v for k, v in sorted(self.invocations.items(),
                                                         key=lambda kv: kv[0].name)},
            "total_invocations": self.total_invocations,
            "nodes_before": self.nodes_before,
            "nodes_after": self.nodes_after,
            "max_depth": {k.name: v for k, v in sorted(self.max_depth.items(),
                                                       key=lambda kv: kv[0].name)},
        }


class GensymSource:
    """Fresh symbols that plain reader tokens can never spell."""

    def __init__(self, prefix: str = "g", start: int = 1):
        self.prefix = prefix
        self.counter = start

    def __call__(self, hint: str = "") -> Symbol:
        name = f"{GENSYM_MARK}{hint or self.prefix}{self.counter}"
        self.counter += 1
        return sym(name)


def _is_marker(form: SExpr, marker: Symbol) -> bool:
    return isinstance(form, tuple) and len(form) == 2 and form[0] is marker


def count_splices(template: SExpr, body_param: Symbol) -> int:
    """Occurrences of ``,@body`` in ``template``, skipping quoted data."""
    if not isinstance(template, tuple) or not template:
        return 0
    if template[0] is QUOTE:
        return 0
    if _is_marker(template, UNQUOTE_SPLICING) and template[1] == body_param:
        return 1
    return sum(count_splices(x, body_param) for x in template)


def _check_template(template: SExpr, params, body_param) -> None:
    """Reject templates that ``expand_quasiquote`` could never expand."""
    def walk(f, in_qq):
        if not isinstance(f, tuple) or not f:
            return
        head = f[0]
        if head is QUOTE and len(f) == 2:
            return
        if head is QUASIQUOTE and len(f) == 2:
            if in_qq:
                raise NestedQuasiquote()
            walk(f[1], True)
            return
        if head is UNQUOTE and len(f) == 2:
            if f[1] == body_param:
                raise MalformedTemplate(f",{body_param.name} must be spliced with ,@")
            if f[1] not in params:
                raise UnboundTemplateVar(f[1])
            return
        if head is UNQUOTE_SPLICING and len(f) == 2:
            if f[1] != body_param:
                raise UnboundTemplateVar(f[1])
            return
        for x in f:
            walk(x, in_qq)

    walk(template, False)


def define_macro(form: SExpr, env: dict, span: Optional[SourceSpan] = None) -> MacroDef:
    """Parse a ``defmacro`` form and register it in ``env``."""
    if not (isinstance(form, tuple) and len(form) >= 4 and form[0] is DEFMACRO):
        raise MalformedLambdaList(f"not a complete defmacro form: {to_string(form)}")
    name, lambda_list, templates = form[1], form[2], form[3:]
    if not isinstance(name, Symbol):
        raise MalformedLambdaList(f"macro name must be a symbol: {to_string(name)}")
    if not isinstance(lambda_list, tuple):
        raise MalformedLambdaList(f"{name.name}: lambda list must be a list")

    has_group = bool(lambda_list) and isinstance(lambda_list[0], tuple)
    params: tuple = lambda_list[0] if has_group else ()
    rest = lambda_list[1:] if has_group else lambda_list
    if len(rest) != 2 or rest[0] is not AMP_BODY:
        if AMP_BODY not in rest:
            raise MissingBodyParam(f"{name.name}: lambda list needs &body")
        raise MalformedLambdaList(f"{name.name}: bad lambda list {to_string(lambda_list)}")
    body_param = rest[1]
    if not isinstance(body_param, Symbol) or body_param.name.startswith("&"):
        raise MissingBodyParam(f"{name.name}: &body needs a symbol")
    seen = set()
    for p in params:
        if not isinstance(p, Symbol) or p.name.startswith("&") or p == NIL:
            raise MalformedLambdaList(f"{name.name}: bad parameter {to_string(p)}")
        if p in seen or p == body_param:
            raise DuplicateParam(p)
        seen.add(p)

    if len(templates) == 1:
        template = templates[0]
    else:
        template = (QUASIQUOTE, (PROGN,) + tuple(_as_payload(t, params) for t in templates))
    _check_template(template, params, body_param)
    mdef = MacroDef(name, tuple(params), body_param, template,
                    count_splices(template, body_param), has_group, span)
    env[name] = mdef
    return mdef


def _as_payload(t: SExpr, params) -> SExpr:
    if _is_marker(t, QUASIQUOTE):
        return t[1]
    if isinstance(t, Symbol) and t in params:
        return (UNQUOTE, t)
    return t


def expand_quasiquote(template: SExpr, bindings: dict, body_forms: tuple,
                      body_param: Optional[Symbol] = None) -> SExpr:
    """Substitute a quasiquote payload.

    ``,p`` is replaced by ``bindings[p]`` and ``,@body`` splices ``body_forms``
    into the enclosing list.  Quoted data inside the template is copied
    verbatim.
    """
    def sub(f):
        if not isinstance(f, tuple) or not f:
            return f
        head = f[0]
        if len(f) == 2:
            if head is QUOTE:
                return f
            if head is QUASIQUOTE:
                raise NestedQuasiquote()
            if head is UNQUOTE:
                if f[1] not in bindings:
                    raise UnboundTemplateVar(f[1])
                return bindings[f[1]]
            if head is UNQUOTE_SPLICING:
                raise SpliceOutsideList(f"{to_string(f)} is not inside a list")
        out = []
        for x in f:
            if _is_marker(x, UNQUOTE_SPLICING):
                if body_param is not None and x[1] != body_param:
                    raise UnboundTemplateVar(x[1])
                out.extend(body_forms)
            else:
                out.append(sub(x))
        return tuple(out)

    return sub(template)


def _expand_template(mdef: MacroDef, bindings: dict, body: tuple) -> SExpr:
    t = mdef.template
    if _is_marker(t, QUASIQUOTE):
        return expand_quasiquote(t[1], bindings, body, mdef.body_param)
    if _is_marker(t, QUOTE):
        return t[1]
    if isinstance(t, Symbol) and t in bindings:
        return bindings[t]
    if isinstance(t, (int, str)) or t == NIL:
        return t
    raise MalformedTemplate(f"{mdef.name.name}: unsupported template {to_string(t)}")


def macroexpand_1(form: SExpr, env: dict, stats: Optional[ExpansionStats] = None):
    """Expand ``form`` by one level if it is a macro call.

    Returns ``(expansion, True)`` or ``(form, False)``.
    """
    if not (isinstance(form, tuple) and form and isinstance(form[0], Symbol)):
        return form, False
    mdef = env.get(form[0])
    if mdef is None:
        return form, False
    args = form[1:]
    if mdef.has_group:
        n = len(mdef.params)
        if not args or not isinstance(args[0], tuple) or len(args[0]) != n:
            got = len(args[0]) if args and isinstance(args[0], tuple) else 0
            raise ArityMismatch(mdef.name, f"an argument group of {n}", got)
        bindings = dict(zip(mdef.params, args[0]))
        body = args[1:]
    else:
        bindings, body = {}, args
    expansion = _expand_template(mdef, bindings, body)
    if stats is not None:
        stats.invocations[mdef.name] += 1
    return expansion, True


def macroexpand_all(form: SExpr, env: dict, stats: Optional[ExpansionStats] = None,
                    cap: int = DEFAULT_EXPANSION_CAP) -> SExpr:
    """Recursive fixed-point expansion of every macro call in ``form``.

    Descends everywhere except into ``quote`` payloads; inside a
    quasiquote only unquoted positions are expanded.  ``cap`` bounds the
    total number of macro invocations for this call.
    """
    if stats is None:
        stats = ExpansionStats()
    budget = [cap]

    def walk(f, depths):
        while isinstance(f, tuple) and f and isinstance(f[0], Symbol) and f[0] in env:
            f, depths = expand_once(f, depths)
        if not isinstance(f, tuple) or not f:
            return f
        head = f[0]
        if head is QUOTE and len(f) == 2:
            return f
        if head is QUASIQUOTE and len(f) == 2:
            return (head, walk_qq(f[1], depths))
        return tuple(walk(x, depths) for x in f)

    def expand_once(f, depths):
        name = f[0]
        new, _ = macroexpand_1(f, env, stats)
        budget[0] -= 1
        if budget[0] < 0:
            raise ExpansionDepthExceeded(f"more than {cap} macro invocations")
        depths = dict(depths)
        depths[name] = depths.get(name, 0) + 1
        if depths[name] > stats.max_depth.get(name, 0):
            stats.max_depth[name] = depths[name]
        return new, depths

    def walk_qq(f, depths):
        if not isinstance(f, tuple) or not f:
            return f
        if len(f) == 2 and f[0] in (UNQUOTE, UNQUOTE_SPLICING):
            return (f[0], walk(f[1], depths))
        return tuple(walk_qq(x, depths) for x in f)

    result = walk(form, {})
    stats.nodes_before += node_count(form)
    stats.nodes_after += node_count(result)
    return result
