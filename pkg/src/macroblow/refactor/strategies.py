"""The two rewrite strategies that make an exponential macro linear.

``refactor_flet`` moves the body into one local function that every
branch calls.  ``refactor_progv`` merges the branches into a single
binder and re-establishes branch-specific special bindings with
conditional ``progv``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..expander import GensymSource, MacroDef
from ..sexpr import (
    NIL, QUASIQUOTE, QUOTE, T, UNQUOTE_SPLICING, SExpr, SourceSpan, Symbol, sym,
    to_string,
)
from .branches import (
    IF, LET, LET_STAR, LEXICAL, SPECIAL, Branch, BranchTree, DefectiveMacro, Leaf,
    UnsupportedConstruct, is_constant, leaves, lexical_binders_around_splice, mentions,
    normalize_branches, progn, splices_outside_sequences, tree_to_form, unify_bindings,
)

FLET = sym("flet")
PROGV = sym("progv")
LIST = sym("list")
EQL = sym("eql")
MULTIPLE_VALUE_LIST = sym("multiple-value-list")
VALUES_LIST = sym("values-list")
PROGN = sym("progn")

LEXICAL_ASYMMETRY = "lexical-binding-asymmetry"
UNSUPPORTED = "unsupported-construct"
PROGV_INAPPLICABLE = "progv-inapplicable"


class NotRefactorable(Exception):
    def __init__(self, reason: str, detail: str, span: Optional[SourceSpan] = None):
        super().__init__(f"{reason}: {detail}")
        self.reason, self.detail, self.span = reason, detail, span


def _payload(mdef: MacroDef) -> SExpr:
    t = mdef.template
    if not (isinstance(t, tuple) and len(t) == 2 and t[0] is QUASIQUOTE):
        raise NotRefactorable(UNSUPPORTED, "template is not a single quasiquote", mdef.span)
    return t[1]


def _splice(mdef: MacroDef) -> SExpr:
    return (UNQUOTE_SPLICING, mdef.body_param)


def _analyse(mdef: MacroDef, specials):
    """Normalized tree and unified rows, with errors mapped to ``NotRefactorable``."""
    payload = _payload(mdef)
    try:
        tree = normalize_branches(payload, mdef.body_param)
        rows = unify_bindings(tree, specials)
    except DefectiveMacro as exc:
        raise NotRefactorable(LEXICAL_ASYMMETRY, str(exc), mdef.span) from exc
    except UnsupportedConstruct as exc:
        raise NotRefactorable(UNSUPPORTED, str(exc), mdef.span) from exc
    return tree, rows


# -- branch dispatch -----------------------------------------------------------

@dataclass
class Selector:
    """Evaluates the branch conditions once and picks per-branch forms.

    Two leaves dispatch on the hoisted condition itself; more leaves
    dispatch on a hoisted branch index.
    """
    var: Symbol
    init: SExpr
    count: int

    def dispatch(self, forms) -> SExpr:
        forms = list(forms)
        if all(f == forms[0] for f in forms):
            return forms[0]
        if self.count == 2:
            return (IF, self.var, forms[0], forms[1])
        out = forms[-1]
        for i in range(len(forms) - 2, -1, -1):
            out = out if forms[i] == out else (IF, (EQL, self.var, i), forms[i], out)
        return out

    def bind(self, body) -> SExpr:
        return (LET, ((self.var, self.init),)) + tuple(body)


def make_selector(tree: BranchTree, gensyms: GensymSource) -> Selector:
    if isinstance(tree, Branch) and isinstance(tree.then, Leaf) and isinstance(tree.else_, Leaf):
        return Selector(gensyms("c"), tree.test, 2)
    index = tree_to_form(tree, lambda i, leaf: i)
    return Selector(gensyms("sel"), index, len(list(leaves(tree))))


def body_sequence(leaf_list, dispatch, splice, gensyms, wrap_values: bool) -> tuple:
    """Prefix forms, the single splice and suffix forms, merged across leaves."""
    forms = []
    prefixes = [leaf.prefix for leaf in leaf_list]
    if any(prefixes):
        if all(p == prefixes[0] for p in prefixes):
            forms.extend(prefixes[0])
        else:
            forms.append(dispatch([progn(p) for p in prefixes]))
    suffixes = [leaf.suffix for leaf in leaf_list]
    same_suffix = all(s == suffixes[0] for s in suffixes)
    if same_suffix and not wrap_values:
        forms.append(splice)
        forms.extend(suffixes[0])
        return tuple(forms)
    vals = gensyms("vals")
    results = [progn(s) if s else (VALUES_LIST, vals) for s in suffixes]
    forms.append((LET, ((vals, (MULTIPLE_VALUE_LIST, (PROGN, splice))),),
                  dispatch(results)))
    return tuple(forms)


# -- local-function hoisting ------------------------------------------------

def _replace_splices(form, body_param, replacement):
    if not isinstance(form, tuple) or not form:
        return form
    if form[0] is QUOTE:
        return form
    out = []
    for x in form:
        if (isinstance(x, tuple) and len(x) == 2 and x[0] is UNQUOTE_SPLICING
                and x[1] == body_param):
            out.append(replacement)
        else:
            out.append(_replace_splices(x, body_param, replacement))
    return tuple(out)


def naive_hoist(mdef: MacroDef, gensyms: GensymSource) -> MacroDef:
    """Replace every splice by a call to a parameterless local function.

    This ignores lexical bindings the template establishes around the
    body, so it is only correct when there are none.
    """
    fn = gensyms("body-fn")
    payload = _payload(mdef)
    new = (FLET, ((fn, NIL, _splice(mdef)),),
           _replace_splices(payload, mdef.body_param, (fn,)))
    return mdef.replace_template((QUASIQUOTE, new))


def _leaf_call(i, leaf, rows, fn, selector_values, folded):
    bound = dict(leaf.bindings)
    order = [v for v, _ in leaf.bindings]
    later_refs = {}
    if leaf.binder is LET_STAR:
        for j, var in enumerate(order):
            later_refs[var] = any(mentions(bound[w], var) for w in order[j + 1:])
    args, dropped = [], set()
    for row in rows:
        if row.kind != LEXICAL:
            continue
        value = bound[row.var]
        if is_constant(value) and not later_refs.get(row.var, False):
            args.append(value)
            dropped.add(row.var)
        else:
            args.append(row.var)
    if selector_values is not None:
        args.append(selector_values[i])
    call = (fn,) + tuple(args)
    body = (call,) if folded else leaf.prefix + (call,) + leaf.suffix
    kept = tuple((v, x) for v, x in leaf.bindings if v not in dropped)
    if not kept:
        return progn(body)
    return (leaf.binder or LET, kept) + body


def refactor_flet_template(mdef: MacroDef, gensyms: GensymSource, specials=None) -> SExpr:
    """Hoist the body into a local function; raises ``NotRefactorable``."""
    payload = _payload(mdef)
    splice = _splice(mdef)
    try:
        tree, rows = _analyse(mdef, specials)
    except NotRefactorable as exc:
        if (exc.reason != UNSUPPORTED
                or lexical_binders_around_splice(payload, mdef.body_param, specials)
                or splices_outside_sequences(payload, mdef.body_param)):
            raise
        fn = gensyms("body-fn")
        return (FLET, ((fn, NIL, splice),),
                _replace_splices(payload, mdef.body_param, (fn,)))
    leaf_list = list(leaves(tree))
    lexical = [r for r in rows if r.kind == LEXICAL]
    params = tuple(r.var for r in lexical)
    fn = gensyms("body-fn")
    folded = any(mentions(f, r.var) for leaf in leaf_list
                 for f in leaf.prefix + leaf.suffix for r in lexical)
    selector_values = None
    if folded:
        differ = (any(leaf.prefix != leaf_list[0].prefix for leaf in leaf_list)
                  or any(leaf.suffix != leaf_list[0].suffix for leaf in leaf_list))
        if differ:
            branch = gensyms("branch-p")
            params += (branch,)
            if len(leaf_list) == 2:
                selector_values = (T, NIL)
                sel = Selector(branch, NIL, 2)
            else:
                selector_values = tuple(range(len(leaf_list)))
                sel = Selector(branch, NIL, len(leaf_list))
            fn_body = body_sequence(leaf_list, sel.dispatch, splice, gensyms, False)
        else:
            fn_body = body_sequence(leaf_list[:1], lambda fs: fs[0], splice, gensyms,
                                    False)
    else:
        fn_body = (splice,)
    branches = tree_to_form(
        tree, lambda i, leaf: _leaf_call(i, leaf, rows, fn, selector_values, folded))
    return (FLET, ((fn, params) + fn_body,), branches)


# -- merged bindings and progv ----------------------------------------------

def merge_branches(mdef: MacroDef, gensyms: GensymSource, specials=None) -> SExpr:
    """Single ``let`` whose rows choose their value by the hoisted condition.

    Dummy rows are kept as self-bindings, so a special that only some
    branches rebind is shadowed in every branch.  This is the
    intermediate step that ``progv_split`` repairs.
    """
    tree, rows = _analyse(mdef, specials)
    selector = make_selector(tree, gensyms)
    leaf_list = list(leaves(tree))
    binder = LET_STAR if any(leaf.binder is LET_STAR for leaf in leaf_list) else LET
    bindings = tuple((r.var, selector.dispatch(r.values)) for r in rows)
    seq = body_sequence(leaf_list, selector.dispatch, _splice(mdef), gensyms, False)
    inner = (binder, bindings) + seq if bindings else progn(seq)
    return selector.bind((inner,))


def _check_progv(leaf_list, rows, span):
    for row in rows:
        if row.kind == SPECIAL and not all(
                is_constant(v) for v, a in zip(row.values, row.altered) if a):
            raise NotRefactorable(PROGV_INAPPLICABLE,
                                  f"special {to_string(row.var)} gets a computed value",
                                  span)
    for i, leaf in enumerate(leaf_list):
        computed = [(v, x) for v, x in leaf.bindings if not is_constant(x)]
        if len(computed) > 1:
            raise NotRefactorable(PROGV_INAPPLICABLE,
                                  "a branch computes more than one binding value", span)
        if leaf.binder is LET_STAR and any(mentions(x, w) for _, x in computed
                                           for w in leaf.vars):
            raise NotRefactorable(PROGV_INAPPLICABLE,
                                  "a sequential binding refers to an earlier one", span)


def progv_split(mdef: MacroDef, gensyms: GensymSource, specials=None) -> SExpr:
    """Merged binder plus conditional ``progv`` for partially rebound specials."""
    tree, rows = _analyse(mdef, specials)
    leaf_list = list(leaves(tree))
    _check_progv(leaf_list, rows, mdef.span)
    selector = make_selector(tree, gensyms)
    inline = [r for r in rows if r.kind == LEXICAL or r.all_altered]
    partial = [r for r in rows if r.kind == SPECIAL and not r.all_altered]

    body = body_sequence(leaf_list, selector.dispatch, _splice(mdef), gensyms, True)
    for row in reversed(partial):
        names = selector.dispatch(
            [(QUOTE, (row.var,)) if a else NIL for a in row.altered])
        chosen = {v for v, a in zip(row.values, row.altered) if a}
        if len(chosen) == 1:
            value = next(iter(chosen))
        else:
            value = selector.dispatch(
                [v if a else NIL for v, a in zip(row.values, row.altered)])
        body = ((PROGV, names, (LIST, value)) + body,)
    if inline:
        bindings = tuple((r.var, selector.dispatch(r.values)) for r in inline)
        body = ((LET, bindings) + body,)
    return selector.bind(body)

