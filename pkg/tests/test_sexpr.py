import pytest
from hypothesis import given, settings, strategies as st

from macroblow.expander import GensymSource
from macroblow.sexpr import (
    NIL, QUASIQUOTE, QUOTE, T, UNQUOTE, UNQUOTE_SPLICING, DottedPair, ReservedCharacter,
    StrayUnquote, UnbalancedParen, UnterminatedString, node_count, parse, parse_one,
    pformat, sym, to_string,
)

from oracles import cons_count

PRINC = sym("princ")


def test_parse_simple_list():
    assert parse_one("(princ 6)") == (PRINC, 6)


def test_parse_reader_sugar():
    form = parse_one("`(if *a* ,@body)")
    assert form == (QUASIQUOTE, (sym("if"), sym("*a*"), (UNQUOTE_SPLICING, sym("body"))))
    assert parse_one("'x") == (QUOTE, sym("x"))
    assert parse_one("`(f ,x)") == (QUASIQUOTE, (sym("f"), (UNQUOTE, sym("x"))))


@pytest.mark.parametrize("text, error", [
    ("(princ 6", UnbalancedParen),
    ("(princ 6))", UnbalancedParen),
    ('"abc', UnterminatedString),
    (",x", StrayUnquote),
    ("(a . b)", DottedPair),
    ("(a#b)", ReservedCharacter),
])
def test_parse_errors(text, error):
    with pytest.raises(error) as info:
        parse(text)
    assert info.value.span.start <= info.value.span.end <= len(text.encode())


def test_error_span_points_at_offender():
    with pytest.raises(StrayUnquote) as info:
        parse("(a b) (c ,d)")
    assert info.value.span.start == 9


def test_symbols_fold_to_lower_case():
    assert parse_one("(PRINC Foo)") == (PRINC, sym("foo"))


def test_nil_and_t():
    assert parse_one("nil") == NIL
    assert parse_one("()") == NIL
    assert parse_one("t") is T
    assert to_string(NIL) == "nil"


def test_comments_are_skipped_and_order_kept():
    forms = parse("; header\n(a) ; trailing\n(b)\n;; end\n(c)")
    assert [f for f, _ in forms] == [(sym("a"),), (sym("b"),), (sym("c"),)]


def test_spans_are_byte_offsets():
    text = '"é" (x)'
    (_, s1), (_, s2) = parse(text)
    assert (s1.start, s1.end) == (0, 4)
    assert text.encode()[s2.start:s2.end] == b"(x)"


def test_print_examples():
    assert to_string((PRINC, 6)) == "(princ 6)"
    assert to_string((QUASIQUOTE, (sym("f"), (UNQUOTE_SPLICING, sym("b"))))) == "`(f ,@b)"
    assert to_string('a"b\\') == '"a\\"b\\\\"'


def test_gensyms_cannot_be_spelled_by_plain_tokens():
    g = GensymSource()("c")
    assert g.is_gensym
    with pytest.raises(ReservedCharacter):
        parse("c#1")
    # the explicit gensym syntax reads printed output back
    assert parse_one(to_string((g, 1))) == (g, 1)


def test_node_count_examples():
    assert node_count(6) == 1
    assert node_count((PRINC, 6)) == 4
    assert node_count(NIL) == 1
    assert node_count(((PRINC,),)) == 3


def test_pformat_reads_back():
    form = parse_one("(defmacro m ((x) &body body) `(let ((a ,x) (b 2)) (if a (progn ,@body) "
                     "(progn (princ (list a b 'c)) ,@body))))")
    text = pformat(form, width=30)
    assert "\n" in text
    assert parse_one(text) == form


# -- properties ----------------------------------------------------------------

names = st.text("abcdefghijklmnopqrstuvwxyz*-+<>=!?", min_size=1, max_size=6).filter(
    lambda s: s[0].isalpha() and s != "nil")
atoms = st.one_of(
    names.map(sym),
    st.integers(-10**6, 10**6),
    st.text(st.characters(blacklist_categories=("Cs",)), max_size=5),
    st.just(NIL),
)
MARKERS = (QUOTE, QUASIQUOTE, UNQUOTE, UNQUOTE_SPLICING)


def trees():
    return st.recursive(
        atoms,
        lambda inner: st.one_of(
            st.lists(inner, min_size=1, max_size=4).map(tuple),
            st.tuples(st.sampled_from(MARKERS), inner),
        ),
        max_leaves=25,
    ).map(lambda t: _repair(t, 0))


def _repair(t, depth):
    """Keep unquotes inside quasiquotes; the reader rejects the others."""
    if not isinstance(t, tuple) or not t:
        return t
    if len(t) == 2 and t[0] in (UNQUOTE, UNQUOTE_SPLICING):
        if depth == 0:
            return (sym("unq"), _repair(t[1], depth))
        return (t[0], _repair(t[1], depth - 1))
    if len(t) == 2 and t[0] is QUASIQUOTE:
        return (t[0], _repair(t[1], depth + 1))
    return tuple(_repair(x, depth) for x in t)


@settings(max_examples=1000, deadline=None)
@given(trees())
def test_round_trip(tree):
    assert parse_one(to_string(tree)) == tree


@settings(max_examples=200, deadline=None)
@given(trees())
def test_print_parse_is_identity_on_canonical_text(tree):
    text = to_string(tree)
    assert to_string(parse_one(text)) == text


@settings(max_examples=300, deadline=None)
@given(trees(), trees())
def test_node_count_grows_under_wrapping(tree, other):
    assert node_count((tree,)) > node_count(tree)
    assert node_count((other, tree)) > node_count(tree)
    assert node_count(tree) == cons_count(tree)


@settings(max_examples=100, deadline=None)
@given(st.lists(trees(), max_size=6))
def test_parse_keeps_toplevel_forms(forms):
    text = "\n".join(to_string(f) for f in forms)
    assert [f for f, _ in parse(text)] == forms
