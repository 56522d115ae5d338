import math

import pytest
from hypothesis import given, strategies as st

from macroblow.analyzer import (
    CONSTANT, EXPONENTIAL, LINEAR, UNCLASSIFIED, CurveTooShort, GrowthCurve, UnsupportedShape,
    classify, compare_counts, compare_profiles, count_body_splices, diagnose, estimate_depth,
    measure_growth, param_roles, profile_corpus, synthesize_nesting,
)
from macroblow.expander import define_macro
from macroblow.refactor import refactor
from macroblow.sexpr import parse_one, sym

from helpers import REFACTORABLE, load_macro
from oracles import affine_sizes, closed_form_invocations, log_ratio


def macro(text):
    env = {}
    return define_macro(parse_one(text), env), env


def test_count_body_splices():
    assert count_body_splices(load_macro("with-bad.lisp", "with-bad")[2]) == 2
    assert count_body_splices(load_macro("with-good.lisp", "with-good")[2]) == 1
    assert count_body_splices(macro("(defmacro m ((x) &body b) `(princ ,x))")[0]) == 0


def test_synthesize_nesting():
    _, _, mdef = load_macro("with-bad.lisp", "with-bad")
    assert synthesize_nesting(mdef, 1, parse_one("(princ 0)")) == parse_one("(with-bad (1) (princ 0))")
    four = synthesize_nesting(mdef, 4, parse_one("(princ 6)"))
    assert four == parse_one("(with-bad (1) (with-bad (2) (with-bad (3) (with-bad (4) (princ 6)))))")
    with pytest.raises(ValueError):
        synthesize_nesting(mdef, 0)


def test_binding_parameters_get_fresh_names():
    _, _, mdef = load_macro("recording.lisp", "with-bad-recording")
    assert param_roles(mdef) == {sym("nested-p"): "binding"}
    assert synthesize_nesting(mdef, 2)[1] == (sym("v1"),)


def test_function_parameter_is_unsupported():
    mdef, _ = macro("(defmacro call-it ((f) &body b) `(progn (,f) ,@b))")
    with pytest.raises(UnsupportedShape):
        synthesize_nesting(mdef, 2)


def test_measure_growth_invocations():
    _, env, mdef = load_macro("with-bad.lisp", "with-bad")
    curve = measure_growth(mdef, env, 6)
    assert curve.invocations == [1, 3, 7, 15, 31, 63]
    assert curve.invocations == [closed_form_invocations(2, n) for n in range(1, 7)]
    _, env, mdef = load_macro("with-good.lisp", "with-good")
    assert measure_growth(mdef, env, 6).invocations == [1, 2, 3, 4, 5, 6]


def test_with_bad_size_recurrence():
    # each level doubles the inner expansion and adds a fixed template overhead
    _, env, mdef = load_macro("with-bad.lisp", "with-bad")
    sizes = measure_growth(mdef, env, 6).sizes
    overhead = sizes[1] - 2 * sizes[0]
    assert sizes == affine_sizes(sizes[0], 2, overhead, 6)


def test_zero_splice_macro_is_constant():
    mdef, env = macro("(defmacro drop ((x) &body b) `(princ ,x))")
    curve = measure_growth(mdef, env, 5)
    assert len(set(curve.sizes)) == 1
    assert classify(curve, 0).classification == CONSTANT


def test_measure_growth_truncates_at_cap():
    _, env, mdef = load_macro("with-triple.lisp", "with-triple")
    curve = measure_growth(mdef, env, 6, cap=200)
    assert curve.truncated and curve.depths == [1, 2, 3, 4, 5]


def test_classify_corpus():
    _, env, bad = load_macro("with-bad.lisp", "with-bad")
    d = diagnose(bad, env)
    assert d.classification == EXPONENTIAL and abs(d.base - 2.0) <= 0.05
    _, env, good = load_macro("with-good.lisp", "with-good")
    assert diagnose(good, env).classification == LINEAR
    _, env, triple = load_macro("with-triple.lisp", "with-triple")
    d = classify(measure_growth(triple, env, 5), 3)
    assert d.classification == EXPONENTIAL and abs(d.base - 3.0) <= 0.05


def test_classify_synthetic_curves():
    def curve(sizes):
        return GrowthCurve(sym("m"), list(range(1, len(sizes) + 1)), sizes)

    assert classify(curve([10, 20, 30, 40])).classification == LINEAR
    assert classify(curve([10, 20, 31, 41])).classification == LINEAR
    grow = classify(curve([1, 3, 9, 27, 81]))
    assert grow.classification == EXPONENTIAL and grow.base == 3.0
    assert classify(curve([5, 5, 5])).classification == CONSTANT
    assert classify(curve([10, 40, 45, 200])).classification == UNCLASSIFIED
    with pytest.raises(CurveTooShort):
        classify(curve([1, 2]))


@given(st.integers(2, 4), st.integers(1, 40), st.integers(0, 60))
def test_affine_exponential_curves_classify_with_their_base(m, first, overhead):
    sizes = affine_sizes(first, m, overhead, 8)
    d = classify(GrowthCurve(sym("m"), list(range(1, 9)), sizes), m)
    assert d.classification == EXPONENTIAL
    assert abs(d.base - m) <= 0.05 * m


@given(st.integers(1, 50), st.integers(1, 200), st.integers(4, 9))
def test_linear_curves_classify_linear(step, first, k):
    sizes = [first + i * step for i in range(k)]
    assert classify(GrowthCurve(sym("m"), list(range(1, k + 1)), sizes)).classification == LINEAR


def test_predicted_size():
    _, env, mdef = load_macro("with-bad.lisp", "with-bad")
    d = diagnose(mdef, env, max_depth=4)
    assert d.predicted_size(4) == d.curve.sizes[-1]
    assert d.predicted_size(5) == round(d.curve.sizes[-1] * d.base)


SYNTHETIC = """
(defmacro twice-a ((x) &body body) `(if ,x (progn ,@body) (progn ,@body)))
(defmacro twice-b ((x) &body body) `(if ,x (progn (princ 1) ,@body) (progn ,@body)))
(defmacro twice-c ((x) &body body) `(if ,x (progn ,@body) (progn (princ 2) ,@body)))
"""


def synthetic_corpus(single_splice: bool) -> dict:
    files = {}
    for name in ("twice-a", "twice-b", "twice-c"):
        uses = "(m (1) (m (2) (m (3) (m (4) (princ 0)))))".replace("m ", name + " ")
        files[f"{name}.lisp"] = uses
    if single_splice:
        defs = "\n".join(f"(defmacro {n} ((x) &body body) `(progn (princ ,x) ,@body))"
                         for n in ("twice-a", "twice-b", "twice-c"))
    else:
        defs = SYNTHETIC
    files["defs.lisp"] = defs
    return files


def test_profile_synthetic_corpus():
    before = profile_corpus(synthetic_corpus(False))
    after = profile_corpus(synthetic_corpus(True))
    assert before.total_invocations == 3 * closed_form_invocations(2, 4) == 45
    assert after.total_invocations == 3 * 4 == 12
    cmp = compare_profiles(before, after)
    assert cmp.invocation_ratio == pytest.approx(3.75)
    assert round(cmp.depth_estimate, 2) == round(log_ratio(45, 12), 2) == 1.91
    assert before.files["defs.lisp"].total_invocations == 0


def test_profile_empty_corpus():
    profile = profile_corpus({})
    assert profile.total_invocations == 0
    assert profile.total.nodes_after == 0


def test_compare_counts_arithmetic():
    c = compare_counts(17679, 1466)
    assert c.invocation_ratio == pytest.approx(17679 / 1466)
    assert c.depth_estimate == pytest.approx(math.log2(17679 / 1466))
    assert compare_counts(5, 5).to_json()["depth_estimate"] == 0.0
    assert estimate_depth(26.5) == pytest.approx(math.log2(26.5))
    with pytest.raises(ZeroDivisionError):
        compare_counts(5, 0)


@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_compare_is_antisymmetric(a, b):
    forward, back = compare_counts(a, b), compare_counts(b, a)
    assert forward.invocation_ratio * back.invocation_ratio == pytest.approx(1)
    assert forward.depth_estimate == pytest.approx(-back.depth_estimate, abs=1e-9)


def test_refactored_corpus_macros_measure_linear():
    for file, name in REFACTORABLE:
        _, env, mdef = load_macro(file, name)
        for strategy in ("flet", "progv"):
            out = refactor(mdef, strategy)
            assert diagnose(out.refactored, env).classification == LINEAR
