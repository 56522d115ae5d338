"""Differential testing of a refactored macro against its original."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence

from ..analyzer import UnsupportedShape, param_roles
from ..expander import DEFMACRO, MacroDef
from ..interpreter import BehaviorRecord, observed_behavior
from ..sexpr import NIL, QUOTE, T, SExpr, Symbol, sym

DEFVAR, DEFPARAMETER, DEFUN = sym("defvar"), sym("defparameter"), sym("defun")
_PRINC, _SETQ, _PUSH, _WHEN = sym("princ"), sym("setq"), sym("push"), sym("when")
_LISTP, _VALUES, _MVL = sym("listp"), sym("values"), sym("multiple-value-list")

SPECIAL_VALUES = (T, NIL, 0, 1, 2, (QUOTE, (7,)))


@dataclass(frozen=True)
class Verdict:
    program: str
    passed: bool
    original: BehaviorRecord
    refactored: BehaviorRecord

    def to_json(self) -> dict:
        out = {"program": self.program, "passed": self.passed}
        if not self.passed:
            out["original"] = self.original.to_json()
            out["refactored"] = self.refactored.to_json()
        return out


def _head(form) -> Optional[Symbol]:
    return form[0] if isinstance(form, tuple) and form else None


def strip_definition(forms, name: Symbol) -> list:
    """``forms`` without the ``defmacro`` of ``name``."""
    return [f for f in forms
            if not (_head(f) is DEFMACRO and len(f) > 1 and f[1] is name)]


def prelude_of(forms, name: Symbol) -> list:
    """Definitions a generated program needs: variables, functions, other macros."""
    return [f for f in strip_definition(forms, name)
            if _head(f) in (DEFVAR, DEFPARAMETER, DEFUN, DEFMACRO)]


def declared_specials(forms) -> list:
    return [f[1] for f in forms
            if _head(f) in (DEFVAR, DEFPARAMETER) and len(f) > 1]


class ProgramGenerator:
    """Random nestings of one macro with printing and special-mutating bodies."""

    def __init__(self, mdef: MacroDef, specials: Sequence[Symbol], rng: random.Random,
                 max_depth: int = 5):
        self.mdef = mdef
        self.specials = list(specials)
        self.rng = rng
        self.max_depth = max_depth
        self.roles = param_roles(mdef)
        if any(r == "function" for r in self.roles.values()):
            raise UnsupportedShape(f"{mdef.name.name}: cannot generate calls")

    def program(self) -> list:
        rng = self.rng
        forms: list = [(_SETQ, s, rng.choice(SPECIAL_VALUES)) for s in self.specials
                       if rng.random() < 0.7]
        depth = rng.randint(1, self.max_depth)
        forms.append((_MVL, self.call(1, depth, [])))
        return forms

    def arguments(self, level: int) -> tuple:
        args = []
        for i, p in enumerate(self.mdef.params):
            if self.roles[p] == "binding":
                args.append(sym(f"v{level}-{i}"))
            else:
                args.append(self.rng.randint(0, 9))
        return tuple(args)

    def call(self, level: int, depth: int, visible: list) -> SExpr:
        args = self.arguments(level)
        visible = visible + [a for a in args if isinstance(a, Symbol)]
        body = [self.statement(visible) for _ in range(self.rng.randint(0, 2))]
        if level < depth:
            body.insert(self.rng.randint(0, len(body)), self.call(level + 1, depth, visible))
        if self.rng.random() < 0.25:
            body.append((_VALUES, self.rng.randint(0, 9), self.rng.randint(0, 9)))
        elif not body:
            body.append((_PRINC, self.rng.randint(0, 9)))
        if self.mdef.has_group:
            return (self.mdef.name, args) + tuple(body)
        return (self.mdef.name,) + tuple(body)

    def statement(self, visible: list) -> SExpr:
        rng = self.rng
        choices = ["princ-int"]
        if self.specials:
            choices += ["princ-special", "push-special"]
        if visible:
            choices += ["princ-var", "setq-var"]
        kind = rng.choice(choices)
        if kind == "princ-int":
            return (_PRINC, rng.randint(0, 9))
        if kind == "princ-special":
            return (_PRINC, rng.choice(self.specials))
        if kind == "push-special":
            s = rng.choice(self.specials)
            return (_WHEN, (_LISTP, s), (_PUSH, rng.randint(0, 9), s))
        if kind == "princ-var":
            return (_PRINC, rng.choice(visible))
        return (_SETQ, rng.choice(visible), rng.choice((T, NIL, rng.randint(0, 9))))


def verify_equivalence(original: MacroDef, refactored: MacroDef, programs=(),
                       env: Optional[dict] = None, prelude=(), n_random: int = 0,
                       seed: int = 0, max_depth: int = 5) -> list:
    """Run every program under both definitions and compare observed behavior.

    ``programs`` yields ``(label, forms)``; the forms must not redefine the
    macro.  ``n_random`` extra programs are generated from ``seed`` and
    run after ``prelude``.
    """
    env = dict(env or {})
    env_orig = {**env, original.name: original}
    env_new = {**env, original.name: refactored}
    jobs = [(label, list(forms)) for label, forms in programs]
    if n_random:
        gen = ProgramGenerator(original, declared_specials(prelude),
                               random.Random(seed), max_depth)
        for i in range(n_random):
            jobs.append((f"random-{seed}-{i}", list(prelude) + gen.program()))
    verdicts = []
    for label, forms in jobs:
        a = observed_behavior(forms, env_orig)
        b = observed_behavior(forms, env_new)
        verdicts.append(Verdict(label, a == b, a, b))
    return verdicts

