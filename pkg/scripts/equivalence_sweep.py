"""Differentially test every refactorable corpus macro under both strategies."""

import argparse
import time

from macroblow import corpus
from macroblow.expander import DEFMACRO, define_macro
from macroblow.refactor import prelude_of, refactor, strip_definition, verify_equivalence


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--programs", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-depth", type=int, default=5)
    args = parser.parse_args()
    status = 0
    for file in corpus.FILES:
        forms = corpus.forms(file)
        env = {}
        for form in forms:
            if isinstance(form, tuple) and form and form[0] is DEFMACRO:
                define_macro(form, env)
        for mdef in env.values():
            if mdef.splice_count < 2:
                continue
            for strategy in ("flet", "progv"):
                out = refactor(mdef, strategy, env=env)
                if not out.ok:
                    print(f"{file:<24} {mdef.name.name:<24} {strategy:<6} refused: {out.reason}")
                    continue
                start = time.perf_counter()
                verdicts = verify_equivalence(
                    mdef, out.refactored, [(file, strip_definition(forms, mdef.name))],
                    prelude=prelude_of(forms, mdef.name), n_random=args.programs,
                    seed=args.seed, max_depth=args.max_depth)
                failed = [v.program for v in verdicts if not v.passed]
                status |= bool(failed)
                print(f"{file:<24} {mdef.name.name:<24} {strategy:<6} "
                      f"{len(verdicts) - len(failed)}/{len(verdicts)} equivalent "
                      f"({time.perf_counter() - start:.2f}s)")
                for name in failed[:5]:
                    print(f"    differs: {name}")
    raise SystemExit(status)


if __name__ == "__main__":
    main()
