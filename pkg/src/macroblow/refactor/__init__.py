"""Rewriting exponential macros into linear ones, with a refusal gate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..analyzer import UnsupportedShape, measure_growth
from ..expander import GensymSource, MacroDef, count_splices
from ..sexpr import QUASIQUOTE, SourceSpan, Symbol, to_string
from .branches import (
    BindingRow, Branch, BranchTree, DefectiveMacro, Leaf, UnsupportedConstruct,
    leaves, normalize_branches, rewrite_conditionals, unify_bindings,
)
from .strategies import (
    LEXICAL_ASYMMETRY, PROGV_INAPPLICABLE, UNSUPPORTED, NotRefactorable,
    merge_branches, naive_hoist, progv_split, refactor_flet_template,
)
from .verify import (
    ProgramGenerator, Verdict, declared_specials, prelude_of, strip_definition,
    verify_equivalence,
)

FLET_STRATEGY = "flet"
PROGV_STRATEGY = "progv"
AUTO = "auto"
STRATEGIES = (AUTO, FLET_STRATEGY, PROGV_STRATEGY)
PROBE_DEPTH = 4

__all__ = [
    "BindingRow", "Branch", "BranchTree", "DefectiveMacro", "Leaf",
    "UnsupportedConstruct", "NotRefactorable", "RefactorOutcome", "Gate",
    "ProgramGenerator", "Verdict", "leaves", "normalize_branches",
    "rewrite_conditionals", "unify_bindings", "merge_branches", "progv_split",
    "naive_hoist", "refactor_flet", "refactor_progv", "refactor",
    "check_refactorable", "verify_equivalence", "declared_specials", "prelude_of",
    "strip_definition", "LEXICAL_ASYMMETRY", "UNSUPPORTED", "PROGV_INAPPLICABLE",
    "STRATEGIES",
]


@dataclass
class Gate:
    ok: bool
    reason: Optional[str] = None
    detail: Optional[str] = None
    span: Optional[SourceSpan] = None


@dataclass
class RefactorOutcome:
    macro: Symbol
    strategy: str
    refactored: Optional[MacroDef] = None
    reason: Optional[str] = None
    detail: Optional[str] = None
    span: Optional[SourceSpan] = None
    size_before: Optional[int] = None
    size_after: Optional[int] = None
    verdicts: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.refactored is not None

    @property
    def verified(self) -> Optional[bool]:
        if not self.verdicts:
            return None
        return all(v.passed for v in self.verdicts)

    def to_json(self) -> dict:
        out = {"macro": self.macro.name, "strategy": self.strategy,
               "status": "Refactored" if self.ok else "NotRefactorable",
               "size_before": self.size_before, "size_after": self.size_after,
               "probe_depth": PROBE_DEPTH}
        if self.ok:
            out["definition"] = to_string(self.refactored.to_form())
        else:
            out["reason"] = self.reason
            out["detail"] = self.detail
            out["span"] = str(self.span) if self.span else None
        if self.verdicts:
            out["verified"] = self.verified
            out["programs"] = len(self.verdicts)
            out["failures"] = [v.program for v in self.verdicts if not v.passed]
        return out


def check_refactorable(mdef: MacroDef, specials=None) -> Gate:
    """Dry run of normalization and binding unification."""
    if mdef.splice_count < 2:
        return Gate(True, detail="at most one body splice; nothing to do")
    try:
        refactor_flet_template(mdef, GensymSource(), specials)
    except NotRefactorable as exc:
        return Gate(False, exc.reason, exc.detail, exc.span)
    return Gate(True)


def _probe_size(mdef: MacroDef, env: dict) -> Optional[int]:
    try:
        curve = measure_growth(mdef, env, PROBE_DEPTH)
    except UnsupportedShape:
        return None
    return curve.sizes[-1] if len(curve.sizes) == PROBE_DEPTH else None


def _outcome(mdef, strategy, make, env) -> RefactorOutcome:
    try:
        payload = make()
    except NotRefactorable as exc:
        return RefactorOutcome(mdef.name, strategy, None, exc.reason, exc.detail,
                               exc.span or mdef.span)
    new = mdef.replace_template((QUASIQUOTE, payload))
    assert count_splices(new.template, new.body_param) == 1
    return RefactorOutcome(mdef.name, strategy, new, size_before=_probe_size(mdef, env),
                           size_after=_probe_size(new, env))


def refactor_flet(mdef: MacroDef, gensyms: Optional[GensymSource] = None,
                  specials=None, env: Optional[dict] = None) -> RefactorOutcome:
    gensyms = gensyms or GensymSource()
    return _outcome(mdef, FLET_STRATEGY,
                    lambda: refactor_flet_template(mdef, gensyms, specials), env or {})


def refactor_progv(mdef: MacroDef, gensyms: Optional[GensymSource] = None,
                   specials=None, env: Optional[dict] = None) -> RefactorOutcome:
    gensyms = gensyms or GensymSource()
    return _outcome(mdef, PROGV_STRATEGY,
                    lambda: progv_split(mdef, gensyms, specials), env or {})


def refactor(mdef: MacroDef, strategy: str = AUTO, gensyms: Optional[GensymSource] = None,
             specials=None, env: Optional[dict] = None) -> RefactorOutcome:
    """Apply one strategy; ``auto`` tries PROGV, then FLET.

    A lexical binding asymmetry is final: no strategy can fix it.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    gensyms = gensyms or GensymSource()
    if strategy == FLET_STRATEGY:
        return refactor_flet(mdef, gensyms, specials, env)
    if strategy == PROGV_STRATEGY:
        return refactor_progv(mdef, gensyms, specials, env)
    first = refactor_progv(mdef, gensyms, specials, env)
    if first.ok or first.reason == LEXICAL_ASYMMETRY:
        return first
    return refactor_flet(mdef, gensyms, specials, env)
