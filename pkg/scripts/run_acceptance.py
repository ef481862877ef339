"""Run the acceptance criteria and print one line each.

    python3 scripts/run_acceptance.py          # all twelve
    python3 scripts/run_acceptance.py 2 5 9    # a subset
"""

import sys

from clab.acceptance import run_all


def main():
    only = {int(x) for x in sys.argv[1:]} or None
    results = run_all(only)
    for r in results:
        print(f"{r.line()} ({r.seconds:.1f}s)")
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
