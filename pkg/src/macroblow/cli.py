"""Command-line front end: ``macroblow analyze|expand|refactor|compare``.

Every command builds a JSON-serializable report first; the text printed
to standard output is rendered from that report.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from . import refactor as rf
from .analyzer import (
    EXPONENTIAL, EXPONENTIAL_THRESHOLD, CurveTooShort, UnsupportedShape, classify, collect_macros,
    compare_profiles, measure_growth, profile_corpus,
)
from .expander import (
    DEFMACRO, ExpansionStats, GensymSource, MacroError, macroexpand_1, macroexpand_all,
)
from .sexpr import (
    ParseError, SExpr, iter_subforms, node_count, parse, pformat, sym, to_string,
)

EXIT_OK, EXIT_ERROR, EXIT_LINT, EXIT_VERIFY = 0, 1, 2, 3
DEFAULT_PROGRAMS = 200


class CliError(Exception):
    pass


# -- loading -------------------------------------------------------------------

def lisp_files(paths) -> list:
    out = []
    for p in map(Path, paths):
        if not p.exists():
            raise CliError(f"no such file or directory: {p}")
        out.extend(sorted(p.rglob("*.lisp")) if p.is_dir() else [p])
    return out


class Source:
    def __init__(self, path: Path, label: Optional[str] = None):
        self.path = path
        self.label = label or str(path)
        self.text = path.read_text(encoding="utf-8")
        self.error: Optional[str] = None
        try:
            self.forms = parse(self.text, self.label)
        except ParseError as exc:
            self.forms = []
            self.error = str(exc)

    def form_list(self) -> list:
        return [f for f, _ in self.forms]

    def macro_names(self) -> list:
        return [f[1].name for f, _ in self.forms
                if isinstance(f, tuple) and len(f) > 1 and f[0] is DEFMACRO]


def load(paths, root: Optional[Path] = None) -> list:
    files = lisp_files(paths)
    out = []
    for p in files:
        label = str(p.relative_to(root)) if root is not None else None
        out.append(Source(p, label))
    return out


def _env(sources, errors: list) -> dict:
    env: dict = {}
    for src in sources:
        try:
            env = collect_macros([(src.label, src.forms)], env)
        except MacroError as exc:
            errors.append(f"{src.label}: {exc}")
    return env


def _declared_specials(sources) -> Optional[set]:
    names = set()
    for src in sources:
        names.update(rf.declared_specials(src.form_list()))
    return names or None


# -- reports -------------------------------------------------------------------

def new_report() -> dict:
    return {"version": __version__, "files": [], "findings": [], "refactors": [],
            "verdicts": []}


def file_entries(sources, errors: list) -> list:
    ok = [s for s in sources if s.error is None]
    try:
        profile = profile_corpus({s.label: s.text for s in ok})
    except MacroError as exc:
        errors.append(f"expansion failed: {exc}")
        profile = None
    out = []
    for src in sources:
        entry = {"path": src.label, "forms": len(src.forms), "macros": src.macro_names(),
                 "error": src.error}
        if profile is not None and src.label in profile.files:
            entry["expansion"] = profile.files[src.label].to_json()
        out.append(entry)
    return out


def findings_for(sources, env: dict, max_depth: int,
                 threshold: float = EXPONENTIAL_THRESHOLD) -> list:
    where = {}
    for src in sources:
        for form, span in src.forms:
            if isinstance(form, tuple) and len(form) > 1 and form[0] is DEFMACRO:
                where[form[1]] = span
    out = []
    for name, mdef in env.items():
        span = where.get(name)
        entry = {"file": span.file if span else None,
                 "span": [span.start, span.end] if span else None,
                 "macro": name.name, "m": mdef.splice_count}
        try:
            diag = classify(measure_growth(mdef, env, max_depth), mdef.splice_count,
                            threshold)
        except (UnsupportedShape, CurveTooShort, MacroError) as exc:
            entry.update(classification="Unmeasured", m_hat=None,
                         predicted_size_at_5=None, note=str(exc))
        else:
            entry.update(classification=diag.classification, m_hat=diag.base,
                         predicted_size_at_5=diag.predicted_size(5),
                         sizes=diag.curve.sizes, invocations=diag.curve.invocations)
        out.append(entry)
    out.sort(key=lambda e: (e["file"] or "", e["span"] or [0, 0], e["macro"]))
    return out


def render_text(report: dict) -> str:
    lines = []
    for f in report["files"]:
        if f.get("error"):
            lines.append(f"error: {f['error']}")
    for e in report.get("errors", []):
        lines.append(f"error: {e}")
    for e in report["findings"]:
        base = f" m_hat={e['m_hat']}" if e["m_hat"] is not None else ""
        size = e["predicted_size_at_5"]
        lines.append(f"{e['file']}: {e['macro']}: m={e['m']} {e['classification']}{base}"
                     + (f" size@5={size}" if size is not None else ""))
    for r in report["refactors"]:
        if r["status"] == "Refactored":
            line = (f"{r['macro']}: refactored with {r['strategy']}, "
                    f"depth-{r['probe_depth']} size {r['size_before']} -> {r['size_after']}")
            if "verified" in r:
                passed = r["programs"] - len(r["failures"])
                line += f", {passed}/{r['programs']} programs equivalent"
        else:
            line = f"{r['macro']}: not refactorable ({r['reason']}): {r['detail']}"
        lines.append(line)
    c = report.get("comparison")
    if c:
        lines.append(f"invocations {c['invocations_before']} -> {c['invocations_after']}: "
                     f"ratio {c['invocation_ratio']}, depth estimate {c['depth_estimate']} "
                     f"(base {c['base']})")
        if c.get("size_ratio") is not None:
            lines.append(f"expanded size ratio {c['size_ratio']}, "
                         f"depth estimate {c['size_depth_estimate']}")
    return "\n".join(lines)


def emit(report: dict, args, extra_text: str = "") -> None:
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.json == "-":
        sys.stdout.write(text)
        return
    if args.json:
        Path(args.json).write_text(text, encoding="utf-8")
    out = "\n".join(t for t in (extra_text, render_text(report)) if t)
    if out:
        print(out)


# -- commands ------------------------------------------------------------------

def cmd_analyze(args) -> int:
    sources = load(args.paths)
    report = new_report()
    errors: list = []
    env = _env(sources, errors)
    report["files"] = file_entries(sources, errors)
    report["findings"] = findings_for(sources, env, args.max_depth, args.threshold)
    if errors:
        report["errors"] = errors
    emit(report, args)
    code = EXIT_OK
    if any(e["classification"] == EXPONENTIAL for e in report["findings"]):
        code = EXIT_LINT
    if errors or any(f["error"] for f in report["files"]):
        code = max(code, EXIT_ERROR)
    return code


def _innermost_bodies(form: SExpr, env: dict) -> tuple:
    """Body forms of the most deeply nested macro call in ``form``."""
    best, best_depth = (), -1

    def walk(f, depth):
        nonlocal best, best_depth
        if not isinstance(f, tuple) or not f:
            return
        here = depth
        if f[0] in env:
            here = depth + 1
            if here > best_depth:
                mdef = env[f[0]]
                best, best_depth = (f[2:] if mdef.has_group else f[1:]), here
        for x in f:
            walk(x, here)

    walk(form, 0)
    return best


def cmd_expand(args) -> int:
    (src,) = load([args.path])
    if src.error:
        raise CliError(src.error)
    env = _env([src], [])
    forms = src.form_list()
    if not 0 <= args.index < len(forms):
        raise CliError(f"IndexOutOfRange: form index {args.index} not in 0..{len(forms) - 1}")
    form = forms[args.index]
    stats = ExpansionStats()
    if args.once:
        expanded, _ = macroexpand_1(form, env, stats)
        stats.nodes_before, stats.nodes_after = node_count(form), node_count(expanded)
    else:
        expanded = macroexpand_all(form, env, stats)
    print(pformat(expanded))
    if args.stats:
        info = stats.to_json()
        bodies = _innermost_bodies(form, env)
        if bodies:
            subs = list(iter_subforms(expanded))
            info["body_occurrences"] = min(sum(1 for s in subs if s == b) for b in bodies)
        if args.json:
            emit({"version": __version__, "form": to_string(form), "stats": info},
                 argparse.Namespace(json=args.json), "")
        else:
            for k in sorted(info):
                print(f"; {k}: {json.dumps(info[k], sort_keys=True)}")
    return EXIT_OK


def _verify(outcome, mdef, sources, env, args) -> list:
    programs, prelude = [], []
    for src in sources:
        forms = src.form_list()
        names = {f for f in iter_subforms(tuple(forms))}
        if mdef.name not in names:
            continue
        if mdef.name.name in src.macro_names():
            prelude = rf.prelude_of(forms, mdef.name)
        programs.append((src.label, rf.strip_definition(forms, mdef.name)))
    others = {k: v for k, v in env.items() if k is not mdef.name}
    try:
        return rf.verify_equivalence(mdef, outcome.refactored, programs, others, prelude,
                                     args.programs, args.seed)
    except UnsupportedShape:
        return rf.verify_equivalence(mdef, outcome.refactored, programs, others)


def _write_back(src: Source, replacements: list) -> None:
    data = src.text.encode("utf-8")
    for span, text in sorted(replacements, key=lambda r: r[0].start, reverse=True):
        data = data[:span.start] + text.encode("utf-8") + data[span.end:]
    src.path.write_text(data.decode("utf-8"), encoding="utf-8")


def cmd_refactor(args) -> int:
    sources = load(args.paths)
    report = new_report()
    errors: list = []
    env = _env(sources, errors)
    report["files"] = file_entries(sources, errors)
    report["findings"] = findings_for(sources, env, args.max_depth, args.threshold)
    specials = _declared_specials(sources)
    printed, writes = [], {}
    by_label = {s.label: s for s in sources}
    for finding in report["findings"]:
        if finding["classification"] != EXPONENTIAL:
            continue
        mdef = env[sym(finding["macro"])]
        gensyms = GensymSource(start=args.seed * 1000 + 1)
        outcome = rf.refactor(mdef, args.strategy, gensyms, specials, env)
        if outcome.ok:
            text = pformat(outcome.refactored.to_form())
            if args.verify:
                outcome.verdicts = _verify(outcome, mdef, sources, env, args)
                for v in outcome.verdicts:
                    entry = {"macro": mdef.name.name, "strategy": outcome.strategy}
                    entry.update(v.to_json())
                    report["verdicts"].append(entry)
            if args.write and mdef.span is not None:
                writes.setdefault(mdef.span.file, []).append((mdef.span, text))
            else:
                printed.append(text)
        report["refactors"].append(outcome.to_json())
    for label, reps in sorted(writes.items()):
        _write_back(by_label[label], reps)
    if errors:
        report["errors"] = errors
    emit(report, args, "\n\n".join(printed))
    code = EXIT_OK
    if errors or any(f["error"] for f in report["files"]):
        code = EXIT_ERROR
    if any(not v["passed"] for v in report["verdicts"]):
        code = EXIT_VERIFY
    return code


def cmd_compare(args) -> int:
    report = new_report()
    profiles, all_files = [], []
    for d in (args.before, args.after):
        root = Path(d)
        sources = load([d], root if root.is_dir() else None)
        bad = [s.error for s in sources if s.error]
        if bad:
            raise CliError("; ".join(bad))
        profiles.append(profile_corpus({s.label: s.text for s in sources}))
        for s in sources:
            all_files.append({"path": str(Path(d) / s.label), "forms": len(s.forms),
                              "macros": s.macro_names(), "error": None})
    report["files"] = all_files
    try:
        comparison = compare_profiles(profiles[0], profiles[1], args.base)
    except ZeroDivisionError as exc:
        raise CliError(f"DivisionByZero: {exc}") from exc
    report["comparison"] = comparison.to_json()
    emit(report, args)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="macroblow", description="Find and rewrite macros whose expansion "
        "grows exponentially with nesting depth.")
    parser.add_argument("--version", action="version", version=f"macroblow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False):
        p.add_argument("--json", metavar="OUT", help="write the JSON report to OUT "
                       "('-' for standard output)")
        if seed:
            p.add_argument("--seed", type=int, default=0,
                           help="seed for gensym suffixes and generated programs")

    p = sub.add_parser("analyze", help="classify the growth of every macro")
    p.add_argument("paths", nargs="+")
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--threshold", type=float, default=EXPONENTIAL_THRESHOLD,
                   help="minimum size ratio for an exponential finding")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("expand", help="print the expansion of one toplevel form")
    p.add_argument("path")
    p.add_argument("index", type=int, help="zero-based toplevel form index")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--all", dest="once", action="store_false", default=False,
                      help="expand every macro call recursively (default)")
    mode.add_argument("--once", dest="once", action="store_true",
                      help="expand only the outermost call, one level")
    p.add_argument("--stats", action="store_true")
    common(p)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("refactor", help="rewrite exponential macros")
    p.add_argument("paths", nargs="+")
    p.add_argument("--strategy", choices=rf.STRATEGIES, default="auto")
    p.add_argument("--write", action="store_true",
                   help="replace the definitions in the source files")
    p.add_argument("--verify", action="store_true",
                   help="check behavioral equivalence on corpus and generated programs")
    p.add_argument("--programs", type=int, default=DEFAULT_PROGRAMS,
                   help="number of generated programs per macro for --verify")
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--threshold", type=float, default=EXPONENTIAL_THRESHOLD,
                   help="minimum size ratio for an exponential finding")
    common(p, seed=True)
    p.set_defaults(func=cmd_refactor)

    p = sub.add_parser("compare", help="compare macro invocation counts of two trees")
    p.add_argument("before")
    p.add_argument("after")
    p.add_argument("--base", type=float, default=2)
    common(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, OSError, MacroError, ParseError) as exc:
        print(f"macroblow: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
