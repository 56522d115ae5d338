"""Turn before/after invocation counts (and optional sizes) into a depth estimate."""

import argparse
import json

from macroblow.analyzer import compare_counts


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("before", type=int, help="macro invocations before refactoring")
    parser.add_argument("after", type=int, help="macro invocations after refactoring")
    parser.add_argument("--size-before", type=int)
    parser.add_argument("--size-after", type=int)
    parser.add_argument("--base", type=float, default=2)
    args = parser.parse_args()
    result = compare_counts(args.before, args.after, args.base, args.size_before, args.size_after)
    print(json.dumps(result.to_json(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
