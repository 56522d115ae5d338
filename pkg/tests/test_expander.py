import copy

import pytest
from hypothesis import given, settings, strategies as st

from macroblow.expander import (
    ArityMismatch, DuplicateParam, ExpansionDepthExceeded, ExpansionStats, GensymSource,
    MalformedLambdaList, MissingBodyParam, NestedQuasiquote, SpliceOutsideList,
    UnboundTemplateVar, define_macro, expand_quasiquote, macroexpand_1, macroexpand_all,
)
from macroblow.sexpr import QUASIQUOTE, node_count, parse_one, sym, to_string

from helpers import load_macro
from oracles import closed_form_invocations, nested_invocations, occurrences

PRINC6 = (sym("princ"), 6)


def env_of(*defs):
    env = {}
    for text in defs:
        define_macro(parse_one(text), env)
    return env


def nest(name, depth, args=True, innermost=PRINC6):
    form = innermost
    for level in range(depth, 0, -1):
        form = (sym(name), (level,), form) if args else (sym(name), form)
    return form


def test_with_bad_has_two_splices():
    _, _, mdef = load_macro("with-bad.lisp", "with-bad")
    assert mdef.splice_count == 2
    assert mdef.params == (sym("x"),) and mdef.body_param == sym("body")


def test_zero_splice_macro():
    env = env_of("(defmacro ignore-body ((x) &body body) `(princ ,x))")
    assert env[sym("ignore-body")].splice_count == 0


def test_splices_inside_quote_are_not_counted():
    env = env_of("(defmacro q (&body body) `(progn '(,@body) ,@body))")
    assert env[sym("q")].splice_count == 1


@pytest.mark.parametrize("text, error", [
    ("(defmacro w ((x x) &body b) x)", DuplicateParam),
    ("(defmacro w ((x) b) x)", MissingBodyParam),
    ("(defmacro w ((x) &body b extra) x)", MalformedLambdaList),
    ("(defmacro w x `(a))", MalformedLambdaList),
    ("(defmacro w ((x) &body b) `(a ``(b)))", NestedQuasiquote),
    ("(defmacro w ((x) &body b) `(f ,y))", UnboundTemplateVar),
])
def test_definition_errors(text, error):
    with pytest.raises(error):
        define_macro(parse_one(text), {})


def test_duplicate_param_names_offender():
    with pytest.raises(DuplicateParam) as info:
        define_macro(parse_one("(defmacro w ((x x) &body b) x)"), {})
    assert info.value.param == sym("x")


def test_redefinition_replaces_in_place():
    env = env_of("(defmacro a (&body b) `(progn ,@b))", "(defmacro c (&body b) `(list ,@b))")
    define_macro(parse_one("(defmacro a (&body b) `(list ,@b ,@b))"), env)
    assert list(env) == [sym("a"), sym("c")]
    assert env[sym("a")].splice_count == 2


def test_multiple_templates_get_implicit_progn():
    env = env_of("(defmacro two ((x) &body b) `(princ ,x) `(progn ,@b))")
    out, _ = macroexpand_1(parse_one("(two (1) (f))"), env)
    assert out == parse_one("(progn (princ 1) (progn (f)))")


def test_expand_quasiquote_examples():
    body = [(sym("princ"), 1)]
    t = parse_one("`(progn ,@body ,@body)")[1]
    assert expand_quasiquote(t, {}, body) == parse_one("(progn (princ 1) (princ 1))")
    t = parse_one("`(princ ,x)")[1]
    assert expand_quasiquote(t, {sym("x"): 3}, ()) == parse_one("(princ 3)")
    with pytest.raises(UnboundTemplateVar) as info:
        expand_quasiquote(parse_one("`(f ,y)")[1], {}, ())
    assert info.value.var == sym("y")


def test_splice_outside_list():
    with pytest.raises(SpliceOutsideList):
        expand_quasiquote(parse_one("`(a ,@b)")[1][1], {}, ())


def test_macroexpand_1_one_level():
    _, env, _ = load_macro("with-bad.lisp", "with-bad")
    stats = ExpansionStats()
    out, flag = macroexpand_1(nest("with-bad", 2), env, stats)
    assert flag and out[0] is sym("if")
    assert occurrences(out, (sym("with-bad"), (2,), PRINC6)) == 2
    assert stats.invocations[sym("with-bad")] == 1
    assert macroexpand_1(PRINC6, env) == (PRINC6, False)


def test_arity_mismatch():
    _, env, _ = load_macro("with-bad.lisp", "with-bad")
    with pytest.raises(ArityMismatch):
        macroexpand_1(parse_one("(with-bad)"), env)
    with pytest.raises(ArityMismatch):
        macroexpand_1(parse_one("(with-bad (1 2) (f))"), env)


def test_blowup_has_sixteen_body_copies():
    _, env, _ = load_macro("with-bad.lisp", "with-bad")
    stats = ExpansionStats()
    out = macroexpand_all(nest("with-bad", 4), env, stats)
    assert occurrences(out, PRINC6) == 16
    assert stats.invocations[sym("with-bad")] == 15
    assert stats.max_depth[sym("with-bad")] == 4


def test_with_good_has_one_body_copy_per_level():
    _, env, _ = load_macro("with-good.lisp", "with-good")
    out = macroexpand_all(nest("with-good", 4), env)
    assert occurrences(out, PRINC6) == 1
    assert occurrences(out, sym("flet")) == 4


def test_macro_free_form_unchanged():
    stats = ExpansionStats()
    form = parse_one("(let ((x 1)) (princ x))")
    assert macroexpand_all(form, {}, stats) == form
    assert stats.total_invocations == 0


def test_no_expansion_inside_quote_but_inside_unquote():
    _, env, _ = load_macro("with-bad.lisp", "with-bad")
    quoted = parse_one("'(with-bad (1) (f))")
    assert macroexpand_all(quoted, env) == quoted
    qq = parse_one("`(a (with-bad (1) (f)) ,(with-bad (1) (f)))")
    out = macroexpand_all(qq, env)
    assert out[1][1] == parse_one("(with-bad (1) (f))")
    assert out[1][2][1][0] is sym("if")


def test_expansion_cap():
    env = env_of("(defmacro loop-forever (&body b) `(loop-forever ,@b))")
    with pytest.raises(ExpansionDepthExceeded):
        macroexpand_all(parse_one("(loop-forever 1)"), env, cap=50)


@pytest.mark.parametrize("n", range(1, 7))
def test_invocation_law_two_and_three_splices(n):
    _, env2, _ = load_macro("with-bad.lisp", "with-bad")
    _, env3, _ = load_macro("with-triple.lisp", "with-triple")
    for env, name, m in ((env2, "with-bad", 2), (env3, "with-triple", 3)):
        stats = ExpansionStats()
        macroexpand_all(nest(name, n), env, stats)
        got = stats.invocations[sym(name)]
        assert got == closed_form_invocations(m, n) == nested_invocations(m, n)


@pytest.mark.parametrize("n", range(1, 7))
def test_single_splice_invocation_law(n):
    _, env, _ = load_macro("with-good.lisp", "with-good")
    stats = ExpansionStats()
    macroexpand_all(nest("with-good", n), env, stats)
    assert stats.invocations[sym("with-good")] == n


def test_size_law():
    _, env, _ = load_macro("with-bad.lisp", "with-bad")
    sizes = [node_count(macroexpand_all(nest("with-bad", n), env)) for n in range(1, 9)]
    ratios = [b / a for a, b in zip(sizes, sizes[1:])]
    assert all(r > 2 for r in ratios)
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] == pytest.approx(2, abs=0.01)
    _, env, _ = load_macro("with-good.lisp", "with-good")
    sizes = [node_count(macroexpand_all(nest("with-good", n), env)) for n in range(1, 9)]
    assert len({b - a for a, b in zip(sizes, sizes[1:])}) == 1


def test_stats_merge_and_nodes():
    _, env, _ = load_macro("with-bad.lisp", "with-bad")
    a, b = ExpansionStats(), ExpansionStats()
    macroexpand_all(nest("with-bad", 2), env, a)
    macroexpand_all(nest("with-bad", 3), env, b)
    total = a.merge(b)
    assert total.invocations[sym("with-bad")] == 3 + 7
    assert total.max_depth[sym("with-bad")] == 3
    assert total.nodes_before == node_count(nest("with-bad", 2)) + node_count(nest("with-bad", 3))


def test_gensyms_are_fresh():
    g = GensymSource()
    seen = {g("x") for _ in range(100)}
    assert len(seen) == 100


depth_and_body = st.tuples(st.integers(1, 5), st.sampled_from(
    ["(princ 1)", "(with-bad (9) (princ 0))", "'(with-bad (1) 2)", "(list 1 2 3)"]))


@settings(max_examples=40, deadline=None)
@given(depth_and_body)
def test_expansion_is_idempotent_and_pure(case):
    depth, body = case
    _, env, _ = load_macro("with-bad.lisp", "with-bad")
    form = nest("with-bad", depth, innermost=parse_one(body))
    snapshot, env_before = copy.deepcopy(form), dict(env)
    once = macroexpand_all(form, env)
    assert macroexpand_all(once, env) == once
    assert form == snapshot and env == env_before
    assert to_string(once)


def test_quasiquote_template_marker():
    _, _, mdef = load_macro("with-bad.lisp", "with-bad")
    assert mdef.template[0] is QUASIQUOTE
