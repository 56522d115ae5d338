"""Print expansion size and invocation counts per nesting depth for corpus macros."""

import argparse

from macroblow import corpus
from macroblow.analyzer import classify, measure_growth
from macroblow.expander import DEFMACRO, define_macro
from macroblow.refactor import refactor


def corpus_macros():
    env = {}
    for name in corpus.FILES:
        for form in corpus.forms(name):
            if isinstance(form, tuple) and form and form[0] is DEFMACRO:
                define_macro(form, env)
    return env


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--max-depth", type=int, default=6)
    parser.add_argument("--refactored", choices=["flet", "progv"],
                        help="also show the curve after refactoring with this strategy")
    args = parser.parse_args()
    env = corpus_macros()
    print(f"{'macro':<24} {'variant':<9} {'depth':>5} {'invocations':>11} {'nodes':>8} {'ratio':>6}")
    for name, mdef in env.items():
        variants = [("original", mdef)]
        if args.refactored and mdef.splice_count > 1:
            out = refactor(mdef, args.refactored, env=env)
            if out.ok:
                variants.append((args.refactored, out.refactored))
        for label, m in variants:
            curve = measure_growth(m, env, args.max_depth)
            ratios = [None] + curve.ratios()
            for depth, inv, size, ratio in zip(curve.depths, curve.invocations, curve.sizes, ratios):
                shown = f"{ratio:6.3f}" if ratio else ""
                print(f"{name.name:<24} {label:<9} {depth:>5} {inv:>11} {size:>8} {shown:>6}")
            d = classify(curve, m.splice_count)
            base = f" base {d.base}" if d.base else ""
            print(f"{'':<24} {label:<9} -> {d.classification}{base}")


if __name__ == "__main__":
    main()
