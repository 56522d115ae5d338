"""Evaluator for the mini-Lisp with lexical and dynamic (special) scoping.

This is the semantic oracle for refactorings: a rewritten macro is
accepted only if programs using it produce the same ``BehaviorRecord`` as
programs using the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .expander import (
    DEFMACRO, GensymSource, MacroError, define_macro, macroexpand_all,
)
from .sexpr import (
    NIL, QUASIQUOTE, QUOTE, T, UNQUOTE, UNQUOTE_SPLICING, SExpr, Symbol, sym,
    to_string,
)


class LispError(Exception):
    def __init__(self, message: str, form: SExpr = None):
        if form is not None:
            message = f"{message} in {to_string(form)}"
        super().__init__(message)
        self.form = form


class UnboundVariable(LispError):
    def __init__(self, name: Symbol, form: SExpr = None):
        super().__init__(f"unbound variable {name.name}", form)
        self.name = name


class UnboundFunction(LispError):
    def __init__(self, name: Symbol, form: SExpr = None):
        super().__init__(f"undefined function {name.name}", form)
        self.name = name


class NotAFunction(LispError):
    pass


class ArityMismatch(LispError):
    pass


class LispTypeError(LispError):
    def __init__(self, op: str, got, form: SExpr = None):
        super().__init__(f"{op}: wrong type argument {render(got)}", form)
        self.op, self.got = op, got


class SyntaxError_(LispError):
    """Malformed special form."""


class Cell:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


_UNBOUND = object()


@dataclass(eq=False)
class Closure:
    params: tuple
    body: tuple
    env: "LexEnv"
    name: Optional[Symbol] = None

    def __repr__(self) -> str:
        return f"#<function {self.name.name if self.name else 'lambda'}>"


@dataclass(frozen=True)
class Builtin:
    name: str
    fn: Callable

    def __repr__(self) -> str:
        return f"#<builtin {self.name}>"


class MultipleValues(tuple):
    """Result of ``values`` with other than one value; never nested."""


def primary(v):
    if type(v) is MultipleValues:
        return v[0] if v else NIL
    return v


def as_value_list(v) -> list:
    if type(v) is MultipleValues:
        return list(v)
    return [v]


class LexEnv:
    """One lexical frame; variables and functions live in separate maps."""

    __slots__ = ("vars", "funs", "parent")

    def __init__(self, parent: Optional["LexEnv"] = None, vars=None, funs=None):
        self.parent = parent
        self.vars = vars or {}
        self.funs = funs or {}

    def lookup_var(self, name: Symbol) -> Optional[Cell]:
        env = self
        while env is not None:
            cell = env.vars.get(name)
            if cell is not None:
                return cell
            env = env.parent
        return None

    def lookup_fun(self, name: Symbol):
        env = self
        while env is not None:
            f = env.funs.get(name)
            if f is not None:
                return f
            env = env.parent
        return None


class DynEnv:
    def __init__(self):
        self.stack: list[tuple[Symbol, Cell]] = []
        self.specials: list[Symbol] = []  # declaration order
        self.globals: dict[Symbol, Cell] = {}

    def is_special(self, name: Symbol) -> bool:
        return name in self.globals

    def declare(self, name: Symbol) -> Cell:
        cell = self.globals.get(name)
        if cell is None:
            cell = self.globals[name] = Cell(_UNBOUND)
            self.specials.append(name)
        return cell

    def lookup(self, name: Symbol) -> Optional[Cell]:
        for s, cell in reversed(self.stack):
            if s is name:
                return cell
        return self.globals.get(name)

    def push(self, name: Symbol, value) -> None:
        self.declare(name)
        self.stack.append((name, Cell(value)))

    def unwind(self, depth: int) -> None:
        del self.stack[depth:]


@dataclass
class RuntimeState:
    dyn: DynEnv = field(default_factory=DynEnv)
    output: list = field(default_factory=list)
    functions: dict = field(default_factory=dict)
    gensyms: GensymSource = field(default_factory=GensymSource)


def render(v) -> str:
    """``princ`` rendering: strings without quotes, everything else printed."""
    if isinstance(v, str):
        return v
    if isinstance(v, tuple) and type(v) is not MultipleValues:
        if not v:
            return "nil"
        return "(" + " ".join(_render_nested(x) for x in v) + ")"
    if isinstance(v, (Closure, Builtin)):
        return repr(v)
    return to_string(v)


def _render_nested(v) -> str:
    if isinstance(v, str):
        return to_string(v)
    return render(v)


# -- special forms -----------------------------------------------------------

S = sym
IF, WHEN, UNLESS, COND = S("if"), S("when"), S("unless"), S("cond")
AND, OR, PROGN = S("and"), S("or"), S("progn")
LET, LET_STAR, FLET, LABELS = S("let"), S("let*"), S("flet"), S("labels")
LAMBDA, FUNCTION, SETQ = S("lambda"), S("function"), S("setq")
DEFVAR, DEFPARAMETER, DEFUN = S("defvar"), S("defparameter"), S("defun")
PROGV, PUSH, MV_LIST = S("progv"), S("push"), S("multiple-value-list")


def _truthy(v) -> bool:
    return v != NIL


def evaluate(form: SExpr, lex: LexEnv, state: RuntimeState):
    """Evaluate a fully macroexpanded form; may return ``MultipleValues``."""
    if isinstance(form, Symbol):
        return _lookup_var(form, lex, state, form).value
    if not isinstance(form, tuple):
        return form
    if not form:
        return NIL
    head = form[0]
    special = _SPECIAL_FORMS.get(head) if isinstance(head, Symbol) else None
    if special is not None:
        return special(form, lex, state)
    fn = _function_for(head, lex, state, form)
    args = [primary(evaluate(a, lex, state)) for a in form[1:]]
    return apply_function(fn, args, state, form)


def ev1(form, lex, state):
    return primary(evaluate(form, lex, state))


def _lookup_var(name: Symbol, lex: LexEnv, state: RuntimeState, form) -> Cell:
    if name is T:
        return Cell(T)
    dyn = state.dyn
    if dyn.is_special(name):
        cell = dyn.lookup(name)
    else:
        cell = lex.lookup_var(name)
    if cell is None or cell.value is _UNBOUND:
        raise UnboundVariable(name, form)
    return cell


def _function_for(head, lex: LexEnv, state: RuntimeState, form):
    if isinstance(head, Symbol):
        fn = lex.lookup_fun(head)
        if fn is None:
            fn = state.functions.get(head)
        if fn is None:
            fn = BUILTINS.get(head)
        if fn is None:
            raise UnboundFunction(head, form)
        return fn
    if isinstance(head, tuple) and head and head[0] is LAMBDA:
        return _make_lambda(head, lex)
    raise NotAFunction(f"{to_string(head)} is not a function name", form)


def apply_function(fn, args: list, state: RuntimeState, form=None):
    if isinstance(fn, Builtin):
        return _call_builtin(fn, args, state, form)
    if isinstance(fn, Closure):
        if len(args) != len(fn.params):
            raise ArityMismatch(f"{render(fn)} expects {len(fn.params)} argument(s), "
                                f"got {len(args)}", form)
        frame = LexEnv(fn.env)
        dyn = state.dyn
        depth = len(dyn.stack)
        try:
            for p, a in zip(fn.params, args):
                if dyn.is_special(p):
                    dyn.push(p, a)
                else:
                    frame.vars[p] = Cell(a)
            return _progn(fn.body, frame, state)
        finally:
            dyn.unwind(depth)
    if isinstance(fn, Symbol):
        return apply_function(_function_for(fn, LexEnv(), state, form), args, state, form)
    raise NotAFunction(f"{render(fn)} is not a function", form)


def _call_builtin(fn: Builtin, args, state, form):
    try:
        if fn.name in _STATEFUL:
            return fn.fn(state, form, *args)
        return fn.fn(*args)
    except TypeError as exc:
        raise ArityMismatch(f"{fn.name}: {exc}", form) from None
    except _BadArg as exc:
        raise LispTypeError(fn.name, exc.args[0], form) from None


def _progn(body, lex, state):
    result = NIL
    for f in body:
        result = evaluate(f, lex, state)
    return result


def _sf_quote(form, lex, state):
    _arity(form, 2)
    return form[1]


def _sf_quasiquote(form, lex, state):
    _arity(form, 2)

    def build(f):
        if not isinstance(f, tuple) or not f:
            return f
        if len(f) == 2 and f[0] is UNQUOTE:
            return ev1(f[1], lex, state)
        if len(f) == 2 and f[0] is QUOTE:
            return (QUOTE, build(f[1]))
        out = []
        for x in f:
            if isinstance(x, tuple) and len(x) == 2 and x[0] is UNQUOTE_SPLICING:
                v = ev1(x[1], lex, state)
                if not isinstance(v, tuple):
                    raise LispTypeError(",@", v, form)
                out.extend(v)
            else:
                out.append(build(x))
        return tuple(out)

    return build(form[1])


def _sf_if(form, lex, state):
    if len(form) not in (3, 4):
        raise SyntaxError_("if takes a test, a then form and an optional else form", form)
    if _truthy(ev1(form[1], lex, state)):
        return evaluate(form[2], lex, state)
    return evaluate(form[3], lex, state) if len(form) == 4 else NIL


def _sf_when(form, lex, state):
    if _truthy(ev1(form[1], lex, state)):
        return _progn(form[2:], lex, state)
    return NIL


def _sf_unless(form, lex, state):
    if not _truthy(ev1(form[1], lex, state)):
        return _progn(form[2:], lex, state)
    return NIL


def _sf_cond(form, lex, state):
    for clause in form[1:]:
        if not isinstance(clause, tuple) or not clause:
            raise SyntaxError_("bad cond clause", form)
        test = ev1(clause[0], lex, state)
        if _truthy(test):
            return _progn(clause[1:], lex, state) if len(clause) > 1 else test
    return NIL


def _sf_and(form, lex, state):
    v = T
    for f in form[1:]:
        v = ev1(f, lex, state)
        if not _truthy(v):
            return NIL
    return v


def _sf_or(form, lex, state):
    for f in form[1:]:
        v = ev1(f, lex, state)
        if _truthy(v):
            return v
    return NIL


def _sf_progn(form, lex, state):
    return _progn(form[1:], lex, state)


def _parse_bindings(form):
    if len(form) < 2 or not isinstance(form[1], tuple):
        raise SyntaxError_(f"{form[0].name} needs a binding list", form)
    out = []
    for b in form[1]:
        if isinstance(b, Symbol):
            out.append((b, NIL))
        elif isinstance(b, tuple) and len(b) in (1, 2) and isinstance(b[0], Symbol):
            out.append((b[0], b[1] if len(b) == 2 else NIL))
        else:
            raise SyntaxError_(f"bad binding {to_string(b)}", form)
    return out


def _sf_let(form, lex, state):
    bindings = _parse_bindings(form)
    values = [ev1(v, lex, state) for _, v in bindings]
    frame = LexEnv(lex)
    dyn = state.dyn
    depth = len(dyn.stack)
    try:
        for (name, _), value in zip(bindings, values):
            if dyn.is_special(name):
                dyn.push(name, value)
            else:
                frame.vars[name] = Cell(value)
        return _progn(form[2:], frame, state)
    finally:
        dyn.unwind(depth)


def _sf_let_star(form, lex, state):
    bindings = _parse_bindings(form)
    dyn = state.dyn
    depth = len(dyn.stack)
    env = lex
    try:
        for name, valform in bindings:
            value = ev1(valform, env, state)
            if dyn.is_special(name):
                dyn.push(name, value)
            else:
                env = LexEnv(env, vars={name: Cell(value)})
        return _progn(form[2:], env, state)
    finally:
        dyn.unwind(depth)


def _check_params(params, form):
    if not isinstance(params, tuple) or not all(isinstance(p, Symbol) for p in params):
        raise SyntaxError_(f"bad parameter list {to_string(params)}", form)
    return params


def _make_lambda(form, lex, name=None):
    if len(form) < 2:
        raise SyntaxError_("lambda needs a parameter list", form)
    return Closure(_check_params(form[1], form), form[2:], lex, name)


def _sf_flet(form, lex, state, recursive=False):
    if len(form) < 2 or not isinstance(form[1], tuple):
        raise SyntaxError_(f"{form[0].name} needs a definition list", form)
    frame = LexEnv(lex)
    def_env = frame if recursive else lex
    for d in form[1]:
        if not (isinstance(d, tuple) and len(d) >= 2 and isinstance(d[0], Symbol)):
            raise SyntaxError_(f"bad local function {to_string(d)}", form)
        frame.funs[d[0]] = Closure(_check_params(d[1], form), d[2:], def_env, d[0])
    return _progn(form[2:], frame, state)


def _sf_labels(form, lex, state):
    return _sf_flet(form, lex, state, recursive=True)


def _sf_lambda(form, lex, state):
    return _make_lambda(form, lex)


def _sf_function(form, lex, state):
    _arity(form, 2)
    target = form[1]
    if isinstance(target, tuple) and target and target[0] is LAMBDA:
        return _make_lambda(target, lex)
    if isinstance(target, Symbol):
        return _function_for(target, lex, state, form)
    raise SyntaxError_("function needs a name or lambda", form)


def _assign(name: Symbol, value, lex, state, form):
    if not isinstance(name, Symbol) or name is T:
        raise SyntaxError_(f"cannot assign {to_string(name)}", form)
    dyn = state.dyn
    if dyn.is_special(name):
        cell = dyn.lookup(name)
    else:
        cell = lex.lookup_var(name)
    if cell is None:
        raise UnboundVariable(name, form)
    cell.value = value


def _sf_setq(form, lex, state):
    if len(form) % 2 != 1:
        raise SyntaxError_("setq needs variable/value pairs", form)
    value = NIL
    for i in range(1, len(form), 2):
        value = ev1(form[i + 1], lex, state)
        _assign(form[i], value, lex, state, form)
    return value


def _sf_defvar(form, lex, state, always=False):
    if len(form) < 2 or not isinstance(form[1], Symbol):
        raise SyntaxError_(f"{form[0].name} needs a symbol", form)
    cell = state.dyn.declare(form[1])
    if len(form) > 2 and (always or cell.value is _UNBOUND):
        cell.value = ev1(form[2], lex, state)
    return form[1]


def _sf_defparameter(form, lex, state):
    return _sf_defvar(form, lex, state, always=True)


def _sf_defun(form, lex, state):
    if len(form) < 3 or not isinstance(form[1], Symbol):
        raise SyntaxError_("defun needs a name and a parameter list", form)
    state.functions[form[1]] = Closure(_check_params(form[2], form), form[3:], lex, form[1])
    return form[1]


def _sf_progv(form, lex, state):
    if len(form) < 3:
        raise SyntaxError_("progv needs a symbol list and a value list", form)
    names = ev1(form[1], lex, state)
    values = ev1(form[2], lex, state)
    if not isinstance(names, tuple) or not all(isinstance(n, Symbol) for n in names):
        raise LispTypeError("progv", names, form)
    if not isinstance(values, tuple):
        raise LispTypeError("progv", values, form)
    dyn = state.dyn
    depth = len(dyn.stack)
    try:
        for i, name in enumerate(names):
            dyn.push(name, values[i] if i < len(values) else NIL)
        return _progn(form[3:], lex, state)
    finally:
        dyn.unwind(depth)


def _sf_push(form, lex, state):
    _arity(form, 3)
    item = ev1(form[1], lex, state)
    place = form[2]
    if not isinstance(place, Symbol):
        raise SyntaxError_("push only supports variable places", form)
    current = _lookup_var(place, lex, state, form).value
    if not isinstance(current, tuple):
        raise LispTypeError("push", current, form)
    new = (item,) + current
    _assign(place, new, lex, state, form)
    return new


def _sf_mv_list(form, lex, state):
    _arity(form, 2)
    return tuple(as_value_list(evaluate(form[1], lex, state)))


def _arity(form, n):
    if len(form) != n:
        raise SyntaxError_(f"{to_string(form[0])} takes {n - 1} argument(s)", form)


_SPECIAL_FORMS = {
    QUOTE: _sf_quote, QUASIQUOTE: _sf_quasiquote, IF: _sf_if, WHEN: _sf_when,
    UNLESS: _sf_unless, COND: _sf_cond, AND: _sf_and, OR: _sf_or,
    PROGN: _sf_progn, LET: _sf_let, LET_STAR: _sf_let_star, FLET: _sf_flet,
    LABELS: _sf_labels, LAMBDA: _sf_lambda, FUNCTION: _sf_function,
    SETQ: _sf_setq, DEFVAR: _sf_defvar, DEFPARAMETER: _sf_defparameter,
    DEFUN: _sf_defun, PROGV: _sf_progv, PUSH: _sf_push, MV_LIST: _sf_mv_list,
}

SPECIAL_FORM_NAMES = frozenset(_SPECIAL_FORMS)


# -- builtins ----------------------------------------------------------------

class _BadArg(Exception):
    pass


def _int(v):
    if isinstance(v, int):
        return v
    raise _BadArg(v)


def _list(v):
    if isinstance(v, tuple):
        return v
    raise _BadArg(v)


def _bool(b):
    return T if b else NIL


def _eq(a, b):
    if isinstance(a, tuple) and isinstance(b, tuple):
        return _bool(a is b or (not a and not b))
    if isinstance(a, (str, Closure)):
        return _bool(a is b)
    return _bool(type(a) is type(b) and a == b)


def _cons(a, b):
    return (a,) + _list(b)


def _values(*args):
    if len(args) == 1:
        return args[0]
    return MultipleValues(args)


def _values_list(v):
    return _values(*_list(v))


def _princ(state, form, v):
    state.output.append(render(v))
    return v


def _funcall(state, form, fn, *args):
    return apply_function(fn, list(args), state, form)


def _apply(state, form, fn, *args):
    if not args:
        raise ArityMismatch("apply needs an argument list", form)
    spread = list(args[:-1]) + list(_list(args[-1]))
    return apply_function(fn, spread, state, form)


def _arith(op, fold):
    def f(*args):
        return fold(*[_int(a) for a in args])
    return Builtin(op, f)


def _minus(first, *rest):
    return -first if not rest else first - sum(rest)


def _times(*args):
    out = 1
    for a in args:
        out *= a
    return out


def _compare(pred):
    def f(first, *rest):
        vals = [_int(first)] + [_int(r) for r in rest]
        return _bool(all(pred(a, b) for a, b in zip(vals, vals[1:])))
    return f


_STATEFUL = {"princ", "funcall", "apply"}

BUILTINS: dict[Symbol, Builtin] = {S(b.name): b for b in [
    Builtin("list", lambda *a: tuple(a)),
    Builtin("cons", _cons),
    Builtin("car", lambda v: _list(v)[0] if _list(v) else NIL),
    Builtin("cdr", lambda v: _list(v)[1:]),
    Builtin("first", lambda v: _list(v)[0] if _list(v) else NIL),
    Builtin("rest", lambda v: _list(v)[1:]),
    Builtin("append", lambda *a: tuple(x for l in a for x in _list(l))),
    Builtin("reverse", lambda v: tuple(reversed(_list(v)))),
    Builtin("length", lambda v: len(_list(v)) if not isinstance(v, str) else len(v)),
    Builtin("eq", _eq),
    Builtin("eql", _eq),
    Builtin("equal", lambda a, b: _bool(a == b and type(a) is type(b))),
    Builtin("null", lambda v: _bool(v == NIL)),
    Builtin("not", lambda v: _bool(v == NIL)),
    Builtin("listp", lambda v: _bool(isinstance(v, tuple))),
    Builtin("1+", lambda v: _int(v) + 1),
    Builtin("1-", lambda v: _int(v) - 1),
    _arith("+", lambda *a: sum(a)),
    _arith("-", _minus),
    _arith("*", _times),
    Builtin("=", _compare(lambda a, b: a == b)),
    Builtin("<", _compare(lambda a, b: a < b)),
    Builtin(">", _compare(lambda a, b: a > b)),
    Builtin("values", _values),
    Builtin("values-list", _values_list),
    Builtin("princ", _princ),
    Builtin("funcall", _funcall),
    Builtin("apply", _apply),
]}


# -- programs ----------------------------------------------------------------

@dataclass
class ProgramResult:
    value: object
    output: list
    state: RuntimeState


@dataclass(frozen=True)
class BehaviorRecord:
    """Everything a caller can observe about one program run."""

    values: tuple
    output: tuple
    specials: tuple  # ((name, rendered value), ...) in declaration order
    error: Optional[str] = None

    def to_json(self) -> dict:
        return {"values": list(self.values), "output": list(self.output),
                "specials": {k: v for k, v in self.specials}, "error": self.error}


def run_program(forms, env: dict, state: Optional[RuntimeState] = None,
                spans=None) -> ProgramResult:
    """Define macros, then expand and evaluate every other toplevel form.

    ``spans`` optionally parallels ``forms``; an error raised while
    processing a form gets that form's span attached as ``exc.span``.
    """
    state = state or RuntimeState()
    env = dict(env)
    toplevel = LexEnv()
    value = NIL
    for i, form in enumerate(forms):
        span = spans[i] if spans is not None else None
        try:
            if isinstance(form, tuple) and form and form[0] is DEFMACRO:
                value = define_macro(form, env, span).name
                continue
            value = evaluate(macroexpand_all(form, env), toplevel, state)
        except (LispError, MacroError) as exc:
            if getattr(exc, "span", None) is None:
                exc.span = span
            raise
    return ProgramResult(value, state.output, state)


def observed_behavior(forms, env: dict, watch: Optional[list] = None) -> BehaviorRecord:
    """Run ``forms`` and capture values, output and final special values.

    Errors are part of the behavior: two runs that fail the same way are
    equivalent, a run that fails and one that does not are not.
    """
    state = RuntimeState()
    error = None
    values: tuple = ()
    try:
        result = run_program(forms, env, state)
        values = tuple(render(v) for v in as_value_list(result.value))
    except (LispError, MacroError, RecursionError) as exc:
        error = f"{type(exc).__name__}: {exc}"
    dyn = state.dyn
    names = watch if watch is not None else dyn.specials
    specials = []
    for name in names:
        cell = dyn.globals.get(name)
        shown = "#<unbound>" if cell is None or cell.value is _UNBOUND else render(cell.value)
        specials.append((name.name, shown))
    return BehaviorRecord(values, tuple(state.output), tuple(specials), error)
