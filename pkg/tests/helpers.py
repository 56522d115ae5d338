"""Shared loaders for the test modules."""

from __future__ import annotations

from macroblow import corpus
from macroblow.expander import DEFMACRO, define_macro
from macroblow.sexpr import sym


def load_macro(file: str, name: str):
    """Forms of a corpus file, its macro env, and the named MacroDef."""
    forms = corpus.forms(file)
    env: dict = {}
    for f in forms:
        if isinstance(f, tuple) and f and f[0] is DEFMACRO:
            define_macro(f, env)
    return forms, env, env[sym(name)]


REFACTORABLE = [
    ("with-bad.lisp", "with-bad"),
    ("recording.lisp", "with-bad-recording"),
    ("recording-v2.lisp", "with-bad-recording-v2"),
    ("with-triple.lisp", "with-triple"),
]

