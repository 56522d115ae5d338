"""Static and measured detection of exponential macros, plus corpus profiles.

A macro with ``m`` body splices nested ``n`` deep expands into ``m**n``
copies of the innermost body and costs ``(m**n - 1) / (m - 1)`` macro
invocations.  ``measure_growth`` observes both quantities directly and
``classify`` fits the observed curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .expander import (
    DEFMACRO, ExpansionDepthExceeded, ExpansionStats, MacroDef, define_macro,
    macroexpand_all,
)
from .sexpr import (
    QUASIQUOTE, QUOTE, UNQUOTE, SExpr, Symbol, node_count, parse, sym,
)

DEFAULT_INNERMOST: SExpr = (sym("princ"), 0)
EXPONENTIAL_THRESHOLD = 1.5
RATIO_WINDOW = 3
LINEAR_TOLERANCE = 0.10

LINEAR = "Linear"
EXPONENTIAL = "Exponential"
CONSTANT = "Constant"
UNCLASSIFIED = "Unclassified"


class UnsupportedShape(Exception):
    pass


class CurveTooShort(Exception):
    pass


def count_body_splices(mdef: MacroDef) -> int:
    return mdef.splice_count


# -- nesting synthesis ---------------------------------------------------------

_BINDERS = {sym("let"), sym("let*")}
_LAMBDA_LISTS = {sym("lambda")}
_LOCAL_FUNS = {sym("flet"), sym("labels")}


def param_roles(mdef: MacroDef) -> dict:
    """Classify each required parameter as ``"binding"`` or ``"value"``.

    A parameter is a binding when the template uses it as a variable
    name (a ``let`` binder, lambda-list entry or ``setq`` target).  It is
    ``"function"`` when it appears in operator position.
    """
    roles = {p: "value" for p in mdef.params}

    def uq(f):
        if isinstance(f, tuple) and len(f) == 2 and f[0] is UNQUOTE and f[1] in roles:
            return f[1]
        return None

    def mark(f, role):
        p = uq(f)
        if p is not None and roles[p] != "function":
            roles[p] = role

    def walk(f):
        if not isinstance(f, tuple) or not f:
            return
        head = f[0]
        if head is QUOTE:
            return
        p = uq(head)
        if p is not None:
            roles[p] = "function"
        rest = f[1:]
        if head in _BINDERS and len(f) > 1 and isinstance(f[1], tuple):
            for b in f[1]:
                if isinstance(b, tuple) and b and uq(b) is None:
                    mark(b[0], "binding")
                    for v in b[1:]:
                        walk(v)
                else:
                    mark(b, "binding")
            rest = f[2:]
        elif head in _LAMBDA_LISTS and len(f) > 1 and isinstance(f[1], tuple):
            for b in f[1]:
                mark(b, "binding")
            rest = f[2:]
        elif head in _LOCAL_FUNS and len(f) > 1 and isinstance(f[1], tuple):
            for d in f[1]:
                if isinstance(d, tuple) and len(d) > 1 and isinstance(d[1], tuple):
                    for b in d[1]:
                        mark(b, "binding")
                    for x in d[2:]:
                        walk(x)
            rest = f[2:]
        elif head is sym("setq") and len(f) > 1:
            mark(f[1], "binding")
        elif head is sym("push") and len(f) > 2:
            mark(f[2], "binding")
        for x in rest:
            walk(x)

    walk(mdef.template[1] if _is_qq(mdef.template) else mdef.template)
    return roles


def _is_qq(t) -> bool:
    return isinstance(t, tuple) and len(t) == 2 and t[0] is QUASIQUOTE


def level_arguments(mdef: MacroDef, level: int, roles: Optional[dict] = None) -> tuple:
    """Argument group for nesting level ``level``: integers or fresh names."""
    roles = roles if roles is not None else param_roles(mdef)
    args = []
    for i, p in enumerate(mdef.params):
        role = roles[p]
        if role == "function":
            raise UnsupportedShape(f"{mdef.name.name}: parameter {p.name} is "
                                   "called as a function")
        if role == "binding":
            suffix = f"-{i}" if len(mdef.params) > 1 else ""
            args.append(sym(f"v{level}{suffix}"))
        else:
            args.append(level * 10 + i if len(mdef.params) > 1 else level)
    return tuple(args)


def synthesize_nesting(mdef: MacroDef, depth: int,
                       innermost: SExpr = DEFAULT_INNERMOST) -> SExpr:
    """Nest ``mdef`` ``depth`` levels deep around ``innermost``."""
    if depth < 1:
        raise ValueError("nesting depth must be at least 1")
    roles = param_roles(mdef)
    form = innermost
    for level in range(depth, 0, -1):
        if mdef.has_group:
            form = (mdef.name, level_arguments(mdef, level, roles), form)
        else:
            form = (mdef.name, form)
    return form


# -- growth curves -------------------------------------------------------------

@dataclass
class GrowthCurve:
    macro: Symbol
    depths: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    invocations: list = field(default_factory=list)
    truncated: bool = False

    def ratios(self) -> list:
        return [b / a for a, b in zip(self.sizes, self.sizes[1:])]

    def differences(self) -> list:
        return [b - a for a, b in zip(self.sizes, self.sizes[1:])]

    def to_json(self) -> dict:
        return {"macro": self.macro.name, "depths": self.depths, "sizes": self.sizes,
                "invocations": self.invocations, "truncated": self.truncated}


def measure_growth(mdef: MacroDef, env: dict, max_depth: int = 6,
                   innermost: SExpr = DEFAULT_INNERMOST,
                   cap: Optional[int] = None) -> GrowthCurve:
    if max_depth < 2:
        raise ValueError("max_depth must be at least 2")
    env = dict(env)
    env[mdef.name] = mdef
    curve = GrowthCurve(mdef.name)
    kwargs = {} if cap is None else {"cap": cap}
    for n in range(1, max_depth + 1):
        stats = ExpansionStats()
        try:
            expanded = macroexpand_all(synthesize_nesting(mdef, n, innermost), env,
                                       stats, **kwargs)
        except ExpansionDepthExceeded:
            curve.truncated = True
            break
        curve.depths.append(n)
        curve.sizes.append(node_count(expanded))
        curve.invocations.append(stats.invocations[mdef.name])
    return curve


@dataclass
class BlowupDiagnosis:
    macro: Symbol
    splices: int
    classification: str
    base: Optional[float]
    curve: GrowthCurve

    def predicted_size(self, depth: int) -> Optional[int]:
        sizes, depths = self.curve.sizes, self.curve.depths
        if not sizes:
            return None
        if depth in depths:
            return sizes[depths.index(depth)]
        k, last = depths[-1], sizes[-1]
        if self.classification == EXPONENTIAL:
            return round(last * self.base ** (depth - k))
        if self.classification == LINEAR:
            return last + (depth - k) * self.curve.differences()[-1]
        if self.classification == CONSTANT:
            return last
        return None

    def to_json(self, predict_at: int = 5) -> dict:
        return {"macro": self.macro.name, "m": self.splices,
                "classification": self.classification, "m_hat": self.base,
                f"predicted_size_at_{predict_at}": self.predicted_size(predict_at),
                "curve": self.curve.to_json()}


def classify(curve: GrowthCurve, splices: Optional[int] = None,
             threshold: float = EXPONENTIAL_THRESHOLD) -> BlowupDiagnosis:
    """Fit a growth curve as constant, linear or exponential in depth.

    Linear is tested first: at small depths a linear curve can still show
    size ratios above ``threshold``, whereas an exponential curve never has
    near-constant first differences.
    """
    sizes = curve.sizes
    if len(sizes) < 3:
        raise CurveTooShort(f"{curve.macro.name}: need at least 3 depths, got {len(sizes)}")
    diffs = curve.differences()
    ratios = curve.ratios()

    def diag(kind, base=None):
        return BlowupDiagnosis(curve.macro, splices if splices is not None else -1,
                               kind, base, curve)

    if all(d == 0 for d in diffs):
        return diag(CONSTANT)
    last = diffs[-1]
    if last > 0 and all(abs(d - last) <= LINEAR_TOLERANCE * last for d in diffs):
        return diag(LINEAR)
    window = ratios[-RATIO_WINDOW:]
    if len(window) == RATIO_WINDOW and all(r >= threshold for r in window):
        steps = [b - a for a, b in zip(window, window[1:])]
        if all(s >= 0 for s in steps) or all(s <= 0 for s in steps):
            return diag(EXPONENTIAL, round(ratios[-1], 2))
    return diag(UNCLASSIFIED)


def diagnose(mdef: MacroDef, env: dict, max_depth: int = 6,
             threshold: float = EXPONENTIAL_THRESHOLD) -> BlowupDiagnosis:
    curve = measure_growth(mdef, env, max_depth)
    return classify(curve, mdef.splice_count, threshold)


# -- corpus profiles -----------------------------------------------------------

@dataclass
class CorpusProfile:
    files: dict = field(default_factory=dict)  # name -> ExpansionStats

    @property
    def total(self) -> ExpansionStats:
        out = ExpansionStats()
        for stats in self.files.values():
            out = out.merge(stats)
        return out

    @property
    def total_invocations(self) -> int:
        return self.total.total_invocations

    def to_json(self) -> dict:
        return {"files": {k: v.to_json() for k, v in sorted(self.files.items())},
                "total": self.total.to_json()}


def collect_macros(sources: Iterable, env: Optional[dict] = None) -> dict:
    """Register every toplevel ``defmacro`` of ``sources`` into a new env.

    ``sources`` yields ``(name, [(form, span), ...])`` pairs.
    """
    env = dict(env or {})
    for _, forms in sources:
        for form, span in forms:
            if isinstance(form, tuple) and form and form[0] is DEFMACRO:
                define_macro(form, env, span)
    return env


def profile_corpus(files: dict, env: Optional[dict] = None) -> CorpusProfile:
    """Expand every non-``defmacro`` toplevel form of every file.

    ``files`` maps a file name to its source text.  Macros from all files
    are registered before any expansion.
    """
    parsed = [(name, parse(text, name)) for name, text in sorted(files.items())]
    env = collect_macros(parsed, env)
    profile = CorpusProfile()
    for name, forms in parsed:
        stats = ExpansionStats()
        for form, _ in forms:
            if isinstance(form, tuple) and form and form[0] is DEFMACRO:
                continue
            macroexpand_all(form, env, stats)
        profile.files[name] = stats
    return profile


def estimate_depth(ratio: float, base: float = 2) -> float:
    """Effective nesting depth ``n`` for which ``base ** n == ratio``."""
    return math.log(ratio, base)


@dataclass
class Comparison:
    invocations_before: int
    invocations_after: int
    invocation_ratio: float
    depth_estimate: float
    size_ratio: Optional[float] = None
    size_depth_estimate: Optional[float] = None
    base: float = 2

    def to_json(self) -> dict:
        def r(x):
            return None if x is None else round(x, 2)
        return {"base": self.base, "invocations_before": self.invocations_before,
                "invocations_after": self.invocations_after,
                "invocation_ratio": r(self.invocation_ratio),
                "depth_estimate": r(self.depth_estimate),
                "size_ratio": r(self.size_ratio),
                "size_depth_estimate": r(self.size_depth_estimate)}


def compare_counts(before: int, after: int, base: float = 2,
                   size_before: Optional[int] = None,
                   size_after: Optional[int] = None) -> Comparison:
    if after == 0:
        raise ZeroDivisionError("the comparison run recorded no macro invocations")
    ratio = before / after
    size_ratio = size_depth = None
    if size_before is not None and size_after:
        size_ratio = size_before / size_after
        size_depth = estimate_depth(size_ratio, base)
    return Comparison(before, after, ratio, estimate_depth(ratio, base),
                      size_ratio, size_depth, base)


def compare_profiles(before: CorpusProfile, after: CorpusProfile,
                     base: float = 2) -> Comparison:
    b, a = before.total, after.total
    return compare_counts(b.total_invocations, a.total_invocations, base,
                          b.nodes_after, a.nodes_after)

