"""Branch normalization and binding unification for macro templates.

A template suitable for rewriting is a tree of two-armed ``if`` forms
whose leaves each splice the body exactly once, optionally inside a
single ``let``/``let*`` and surrounded by straight-line forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Union

from ..expander import count_splices
from ..sexpr import (
    NIL, QUOTE, T, UNQUOTE, UNQUOTE_SPLICING, SExpr, Symbol, iter_subforms, sym,
    to_string,
)

IF, WHEN, UNLESS, COND = sym("if"), sym("when"), sym("unless"), sym("cond")
PROGN, LET, LET_STAR = sym("progn"), sym("let"), sym("let*")
LAMBDA, FLET, LABELS = sym("lambda"), sym("flet"), sym("labels")

LEXICAL = "lexical"
SPECIAL = "special"


class UnsupportedConstruct(Exception):
    def __init__(self, message: str, form: SExpr = None):
        if form is not None:
            message = f"{message}: {to_string(form)}"
        super().__init__(message)
        self.form = form


class DefectiveMacro(Exception):
    """A lexical variable is bound around the body in only some branches."""

    def __init__(self, var: SExpr):
        super().__init__(f"{to_string(var)} is bound lexically in only some branches, "
                         "so the body sees a different binding depending on a "
                         "run-time condition")
        self.var = var


@dataclass(frozen=True)
class Leaf:
    binder: Optional[Symbol]  # let, let* or None
    bindings: tuple           # ((var, value), ...)
    prefix: tuple
    suffix: tuple

    @property
    def vars(self) -> tuple:
        return tuple(v for v, _ in self.bindings)


@dataclass(frozen=True)
class Branch:
    test: SExpr
    then: "BranchTree"
    else_: "BranchTree"


BranchTree = Union[Branch, Leaf]


def leaves(tree: BranchTree) -> Iterator[Leaf]:
    if isinstance(tree, Leaf):
        yield tree
    else:
        yield from leaves(tree.then)
        yield from leaves(tree.else_)


def is_splice(form: SExpr, body_param: Symbol) -> bool:
    return (isinstance(form, tuple) and len(form) == 2
            and form[0] is UNQUOTE_SPLICING and form[1] == body_param)


def is_unquote(form: SExpr) -> bool:
    return isinstance(form, tuple) and len(form) == 2 and form[0] is UNQUOTE


def is_constant(form: SExpr) -> bool:
    if isinstance(form, (int, str)) or form == NIL or form is T:
        return True
    return isinstance(form, tuple) and len(form) == 2 and form[0] is QUOTE


def mentions(form: SExpr, var: SExpr) -> bool:
    return any(f == var for f in iter_subforms(form))


def progn(forms) -> SExpr:
    forms = tuple(forms)
    if not forms:
        return NIL
    if len(forms) == 1:
        return forms[0]
    return (PROGN,) + forms


# -- branch normalization ---------------------------------------------------

def rewrite_conditionals(form: SExpr) -> SExpr:
    """Rewrite ``when``/``unless``/``cond`` on the branching spine into ``if``.

    Only the spine is rewritten: the root and, recursively, the arms of
    every conditional.  Straight-line code inside the arms is left alone.
    """
    if not isinstance(form, tuple) or not form:
        return form
    head = form[0]
    if head is IF and len(form) in (3, 4):
        arms = tuple(rewrite_conditionals(a) for a in form[2:])
        return (IF, form[1]) + arms
    if head is WHEN and len(form) >= 2:
        return (IF, form[1], rewrite_conditionals(progn_keep(form[2:])), NIL)
    if head is UNLESS and len(form) >= 2:
        return (IF, form[1], NIL, rewrite_conditionals(progn_keep(form[2:])))
    if head is COND:
        return _rewrite_cond(form[1:])
    return form


def progn_keep(forms) -> SExpr:
    """``(progn ...)`` around ``forms``; unlike ``progn`` never unwraps."""
    return (PROGN,) + tuple(forms)


def _rewrite_cond(clauses) -> SExpr:
    if not clauses:
        return NIL
    clause = clauses[0]
    if not isinstance(clause, tuple) or not clause:
        raise UnsupportedConstruct("malformed cond clause", clause)
    test, body = clause[0], clause[1:]
    if not body:
        raise UnsupportedConstruct("cond clause without a body", clause)
    arm = rewrite_conditionals(progn_keep(body))
    if test is T and len(clauses) == 1:
        return arm
    return (IF, test, arm, _rewrite_cond(clauses[1:]))


def normalize_branches(payload: SExpr, body_param: Symbol) -> BranchTree:
    """Turn a quasiquote payload into a ``BranchTree``."""
    return _tree(rewrite_conditionals(payload), body_param)


def _tree(form: SExpr, body_param: Symbol) -> BranchTree:
    if is_splice(form, body_param):
        raise UnsupportedConstruct("body spliced directly into a branch", form)
    if count_splices(form, body_param) == 0:
        raise UnsupportedConstruct("branch that never runs the body", form)
    if not isinstance(form, tuple):
        raise UnsupportedConstruct("unexpected atom", form)
    head = form[0]
    if head is IF:
        if count_splices(form[1], body_param):
            raise UnsupportedConstruct("body spliced into a condition", form)
        else_ = form[3] if len(form) == 4 else NIL
        return Branch(form[1], _tree(form[2], body_param), _tree(else_, body_param))
    if head is PROGN and len(form) == 2 and not is_splice(form[1], body_param):
        return _tree(form[1], body_param)
    if head in (PROGN, LET, LET_STAR):
        return _leaf(form, body_param)
    raise UnsupportedConstruct(f"{to_string(head)} around the body", form)


def _flatten(seq, body_param):
    out = []
    for f in seq:
        if (isinstance(f, tuple) and f and f[0] is PROGN
                and count_splices(f, body_param)):
            out.extend(_flatten(f[1:], body_param))
        else:
            out.append(f)
    return out


def _parse_bindings(form) -> tuple:
    if len(form) < 2 or not isinstance(form[1], tuple):
        raise UnsupportedConstruct("let without a binding list", form)
    out = []
    for b in form[1]:
        if isinstance(b, Symbol) or is_unquote(b):
            out.append((b, NIL))
        elif (isinstance(b, tuple) and len(b) in (1, 2)
              and (isinstance(b[0], Symbol) or is_unquote(b[0]))):
            out.append((b[0], b[1] if len(b) == 2 else NIL))
        else:
            raise UnsupportedConstruct("unsupported binding", b)
    names = [v for v, _ in out]
    if len(set(names)) != len(names):
        raise UnsupportedConstruct("variable bound twice in one let", form)
    return tuple(out)


def _leaf(form, body_param) -> Leaf:
    head = form[0]
    binder, bindings = None, ()
    if head is PROGN:
        seq = form[1:]
    else:
        binder, bindings = head, _parse_bindings(form)
        for _, v in bindings:
            if count_splices(v, body_param):
                raise UnsupportedConstruct("body spliced into a binding value", form)
        seq = form[2:]
    seq = _flatten(seq, body_param)
    hits = [i for i, f in enumerate(seq) if count_splices(f, body_param)]
    if len(hits) != 1:
        raise UnsupportedConstruct("branch splices the body more than once", form)
    i = hits[0]
    site = seq[i]
    if is_splice(site, body_param):
        return Leaf(binder, bindings, tuple(seq[:i]), tuple(seq[i + 1:]))
    if (binder is None and len(seq) == 1 and isinstance(site, tuple)
            and site and site[0] in (LET, LET_STAR)):
        return _leaf(site, body_param)
    raise UnsupportedConstruct("body nested inside another construct", site)


def tree_to_form(tree: BranchTree, leaf_form) -> SExpr:
    """Rebuild an ``if`` tree, rendering each leaf with ``leaf_form(i, leaf)``."""
    counter = iter(range(1 << 30))

    def build(t):
        if isinstance(t, Leaf):
            return leaf_form(next(counter), t)
        return (IF, t.test, build(t.then), build(t.else_))

    return build(tree)


# -- binding unification ----------------------------------------------------

@dataclass(frozen=True)
class BindingRow:
    var: SExpr
    kind: str            # LEXICAL or SPECIAL
    values: tuple        # one value form per leaf; dummies are the var itself
    altered: tuple       # per leaf: False where a dummy was introduced

    @property
    def all_altered(self) -> bool:
        return all(self.altered)

    def to_json(self) -> dict:
        return {"var": to_string(self.var), "kind": self.kind,
                "values": [to_string(v) if a else None
                           for v, a in zip(self.values, self.altered)]}


def default_is_special(var: SExpr) -> bool:
    return (isinstance(var, Symbol) and len(var.name) > 2
            and var.name.startswith("*") and var.name.endswith("*"))


def unify_bindings(tree: BranchTree, specials=None) -> list:
    """Align the bindings of every leaf into rows, adding dummy self-bindings.

    ``specials`` is the set of declared special variables; when omitted the
    ``*earmuff*`` naming convention decides.
    """
    if specials is None:
        is_special = default_is_special
    else:
        def is_special(v):
            return isinstance(v, Symbol) and v in specials
    leaf_list = list(leaves(tree))
    order: list = []
    for leaf in leaf_list:
        for var in leaf.vars:
            if var not in order:
                order.append(var)
    rows = []
    for var in order:
        special = is_special(var)
        values, altered = [], []
        for leaf in leaf_list:
            found = dict(leaf.bindings)
            if var in found:
                values.append(found[var])
                altered.append(True)
            elif special:
                values.append(var)
                altered.append(False)
            else:
                raise DefectiveMacro(var)
        if any(altered):
            rows.append(BindingRow(var, SPECIAL if special else LEXICAL,
                                   tuple(values), tuple(altered)))
    return rows


def lexical_binders_around_splice(payload: SExpr, body_param: Symbol,
                                  specials=None) -> list:
    """Forms that establish a lexical binding or local function around a splice."""
    special = default_is_special if specials is None else (
        lambda v: isinstance(v, Symbol) and v in specials)
    found = []

    def walk(f):
        if not isinstance(f, tuple) or not f or not count_splices(f, body_param):
            return
        head = f[0]
        if head is QUOTE:
            return
        if head in (LET, LET_STAR) and len(f) > 1 and isinstance(f[1], tuple):
            names = [b[0] if isinstance(b, tuple) and b and not is_unquote(b) else b
                     for b in f[1]]
            if any(not special(n) for n in names) and \
                    any(count_splices(x, body_param) for x in f[2:]):
                found.append(f)
        elif head in (LAMBDA, FLET, LABELS):
            found.append(f)
        for x in f:
            walk(x)

    walk(payload)
    return found


# where each operator's implicit body starts; only there is ``,@body``
# interchangeable with a single call returning the body's last value
_SEQUENCE_START = {PROGN: 1, LET: 2, LET_STAR: 2, WHEN: 2, UNLESS: 2, sym("progv"): 3}


def splices_outside_sequences(payload: SExpr, body_param: Symbol) -> list:
    """Forms that splice the body somewhere other than an implicit ``progn``."""
    found = []

    def walk(f, in_cond=False):
        if not isinstance(f, tuple) or not f or f[0] is QUOTE:
            return
        start = 1 if in_cond else _SEQUENCE_START.get(f[0])
        for i, x in enumerate(f):
            if is_splice(x, body_param):
                if start is None or i < start:
                    found.append(f)
            else:
                walk(x, in_cond=f[0] is COND and i > 0)

    walk(payload)
    return found
